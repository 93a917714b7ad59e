#include "mvrds/models.hpp"

#include <cmath>

namespace mvrds {

namespace {

double tensor_norm(const std::vector<Mat>& t) {
    double s = 0.0;
    for (const auto& m : t) s += m.squaredNorm();
    return std::sqrt(s);
}

double drift_hessian_norm(const MeanFieldModel& m, const Vec& y, const LawContext& l) {
    std::vector<Mat> t;
    for (int j = 0; j < m.dim; ++j) {
        const double h = 1e-5 * (1.0 + y.norm());
        Vec yp = y, ym = y;
        yp(j) += h;
        ym(j) -= h;
        t.push_back((m.eval_drift_jacobian(yp, l) - m.eval_drift_jacobian(ym, l)) / (2.0 * h));
    }
    return tensor_norm(t);
}

class Recorder {
public:
    explicit Recorder(std::vector<AuditCheck>& checks) : checks_(checks) {}
    void record(const std::string& name, double lhs, double rhs) {
        AuditCheck* c = nullptr;
        for (auto& k : checks_)
            if (k.name == name) c = &k;
        if (!c) {
            checks_.push_back({name, 0, 0, 0.0});
            c = &checks_.back();
        }
        ++c->evaluations;
        const double ratio = rhs > 0.0 ? lhs / rhs : (lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        c->worst_ratio = std::max(c->worst_ratio, ratio);
        if (lhs > rhs * (1.0 + 1e-12) + 1e-14) ++c->violations;
    }

private:
    std::vector<AuditCheck>& checks_;
};

}  // namespace

const AuditCheck& AuditReport::check(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return c;
    throw std::out_of_range("no audit check named " + name);
}

AuditReport assumption_audit(const MeanFieldModel& model, const std::vector<AuditSample>& corpus) {
    const auto& k = model.constants;
    if (!k.F || !k.G) throw DomainError("model declares no assumption constants");
    AuditReport rep;
    Recorder rec(rep.checks);
    const double kappa = k.kappa;
    for (const auto& s : corpus) {
        const LawContext lm = model.law(s.mu);
        const LawContext ln = model.law(s.nu);
        const double f_mu = k.F(kappa, lm.mk, 0.0);
        const double f_both = k.F(kappa, lm.mk, ln.mk);
        // Upper bound on the law distance; the empty family skips the lower bound.
        const double dist = dp_bracket(s.mu, s.nu, kappa, TestFunctionFamily(model.dim, kappa)).upper;

        const Vec bx = model.eval_drift(s.x, lm), by = model.eval_drift(s.y, lm);
        const Mat sx = model.eval_diffusion(s.x, lm), sy = model.eval_diffusion(s.y, lm);
        rec.record("lipschitz-state", (bx - by).norm() + (sx - sy).norm(), f_mu * (s.x - s.y).norm());

        const Vec byn = model.eval_drift(s.y, ln);
        const Mat syn = model.eval_diffusion(s.y, ln);
        rec.record("lipschitz-law", (by - byn).norm() + (sy * sy.transpose() - syn * syn.transpose()).norm(),
                   f_both * (1.0 + s.y.norm()) * dist);

        const double mroot2 = std::pow(lm.mk, 2.0 / kappa), mroot1 = std::pow(lm.mk, 1.0 / kappa);
        rec.record("coercivity", by.dot(s.y), k.C * (1.0 + s.y.squaredNorm() + mroot2));
        rec.record("growth-sigma", sy.norm(), k.C * (1.0 + s.y.norm() + mroot1));

        const Vec b0 = model.eval_drift(Vec::Zero(model.dim), lm);
        rec.record("derivative-bound",
                   b0.norm() + model.eval_drift_jacobian(s.y, lm).norm() +
                       tensor_norm(model.eval_diffusion_grad(s.y, lm)),
                   f_mu);
        rec.record("second-derivative-bound",
                   drift_hessian_norm(model, s.y, lm) + tensor_norm(model.eval_diffusion_hess(s.y, lm)), f_mu);

        rec.record("measurability",
                   (sx - syn).norm() + (model.ito_correction(s.x, lm) - model.ito_correction(s.y, ln)).norm(),
                   f_both * ((s.x - s.y).norm() + k.G(dist)));
    }
    for (const auto& c : rep.checks) rep.ok = rep.ok && c.violations == 0;
    return rep;
}

}  // namespace mvrds
