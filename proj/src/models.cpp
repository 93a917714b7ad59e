#include "mvrds/models.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include <cmath>

namespace mvrds {

Mat covariance(const EmpiricalMeasure& mu) {
    const Mat c = mu.covariance();
    return 0.5 * (c + c.transpose());
}

Mat psd_sqrt(const Mat& a) {
    if (a.rows() != a.cols()) throw DomainError("psd_sqrt needs a square matrix");
    const long d = a.rows();
    if (d == 0) return a;
    const Mat s = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(s);
    if (es.info() != Eigen::Success) throw SolverError("eigendecomposition failed");
    const double tr = std::abs(s.trace());
    Vec ev = es.eigenvalues();
    const double floor = -1e-12 * std::max(tr, std::numeric_limits<double>::min());
    if (ev.minCoeff() < floor) throw DomainError(fmt::format("matrix is indefinite (eigenvalue {:.3g})", ev.minCoeff()));
    ev = ev.cwiseMax(0.0).cwiseSqrt();
    const Mat& q = es.eigenvectors();
    const Mat r = q * ev.asDiagonal() * q.transpose();
    return 0.5 * (r + r.transpose());
}

// ---------------------------------------------------------------- evaluation

LawContext MeanFieldModel::law(const EmpiricalMeasure& mu) const {
    if (mu.dim() != dim) throw DomainError(fmt::format("{} expects laws on R^{}", name, dim));
    LawContext l;
    l.mean = mu.mean();
    l.cov = covariance(mu);
    l.m2 = moment(mu, 2.0);
    l.mk = constants.kappa == 2.0 ? l.m2 : moment(mu, constants.kappa);
    l.size = mu.size();
    if (prepare) prepare(l);
    return l;
}

Vec MeanFieldModel::eval_drift(const Vec& y, const LawContext& l) const {
    Vec out = Vec::Zero(dim);
    if (drift) drift(y, l, out);
    return out;
}

Mat MeanFieldModel::eval_diffusion(const Vec& y, const LawContext& l) const {
    Mat out = Mat::Zero(dim, noise_dim);
    if (diffusion) diffusion(y, l, out);
    return out;
}

Mat MeanFieldModel::eval_drift_jacobian(const Vec& y, const LawContext& l) const {
    Mat out = Mat::Zero(dim, dim);
    if (drift_jacobian) {
        drift_jacobian(y, l, out);
        return out;
    }
    if (!drift) return out;
    // Central differences when no analytic Jacobian is supplied.
    for (int j = 0; j < dim; ++j) {
        const double h = 1e-6 * (1.0 + std::abs(y(j)));
        Vec yp = y, ym = y;
        yp(j) += h;
        ym(j) -= h;
        out.col(j) = (eval_drift(yp, l) - eval_drift(ym, l)) / (2.0 * h);
    }
    return out;
}

std::vector<Mat> MeanFieldModel::eval_diffusion_grad(const Vec& y, const LawContext& l) const {
    std::vector<Mat> g(static_cast<std::size_t>(dim), Mat::Zero(dim, noise_dim));
    if (diffusion_grad) diffusion_grad(y, l, g);
    return g;
}

std::vector<Mat> MeanFieldModel::eval_diffusion_hess(const Vec& y, const LawContext& l) const {
    std::vector<Mat> h(static_cast<std::size_t>(dim * dim), Mat::Zero(dim, noise_dim));
    if (diffusion_hess) diffusion_hess(y, l, h);
    return h;
}

Vec MeanFieldModel::ito_correction(const Vec& y, const LawContext& l) const {
    Vec out = Vec::Zero(dim);
    if (diffusion_state_independent) return out;
    const Mat s = eval_diffusion(y, l);
    const auto g = eval_diffusion_grad(y, l);
    for (int j = 0; j < dim; ++j) out += g[static_cast<std::size_t>(j)] * s.row(j).transpose();
    return out;
}

// ---------------------------------------------------------------- potentials

Potential gaussian_potential(const Mat& sigma) {
    if (sigma.rows() != sigma.cols()) throw DomainError("prior covariance must be square");
    Eigen::LLT<Mat> llt(sigma);
    if (llt.info() != Eigen::Success) throw DomainError("prior covariance must be positive definite");
    const Mat prec = llt.solve(Mat::Identity(sigma.rows(), sigma.cols()));
    const long d = sigma.rows();
    Potential v;
    v.value = [prec](const Vec& y) { return 0.5 * y.dot(prec * y); };
    v.grad = [prec](const Vec& y) { return Vec(prec * y); };
    v.hess = [prec](const Vec&) { return prec; };
    v.third = [d](const Vec&) { return std::vector<Mat>(static_cast<std::size_t>(d), Mat::Zero(d, d)); };
    v.bound = prec.norm();
    return v;
}

Potential log_cosh_potential(const Mat& sigma, const Vec& w, const Vec& c) {
    const long d = sigma.rows();
    if (w.size() != d || c.size() != d) throw DomainError("log-cosh weights and centres need one entry per coordinate");
    Potential g = gaussian_potential(sigma);
    Potential v;
    v.value = [g, w, c](const Vec& y) {
        double s = g.value(y);
        for (long i = 0; i < y.size(); ++i) s += w(i) * std::log(std::cosh(y(i) - c(i)));
        return s;
    };
    v.grad = [g, w, c](const Vec& y) {
        Vec out = g.grad(y);
        for (long i = 0; i < y.size(); ++i) out(i) += w(i) * std::tanh(y(i) - c(i));
        return out;
    };
    v.hess = [g, w, c](const Vec& y) {
        Mat out = g.hess(y);
        for (long i = 0; i < y.size(); ++i) {
            const double t = std::tanh(y(i) - c(i));
            out(i, i) += w(i) * (1.0 - t * t);
        }
        return out;
    };
    v.third = [w, c, d](const Vec& y) {
        std::vector<Mat> out(static_cast<std::size_t>(d), Mat::Zero(d, d));
        for (long i = 0; i < d; ++i) {
            const double t = std::tanh(y(i) - c(i));
            out[static_cast<std::size_t>(i)](i, i) = -2.0 * w(i) * t * (1.0 - t * t);
        }
        return out;
    };
    Vec g0(d);
    for (long i = 0; i < d; ++i) g0(i) = w(i) * std::tanh(-c(i));
    // max |2 t (1 - t^2)| = 4 / (3 sqrt 3)
    v.bound = g0.norm() + g.bound + w.norm() * (1.0 + 4.0 / (3.0 * std::sqrt(3.0)));
    return v;
}

// ---------------------------------------------------------------- models

namespace {

ModelConstants generic_constants(double scale) {
    ModelConstants k;
    k.F = [scale](double, double a, double b) { return scale * (1.0 + a + b); };
    k.C = scale;
    k.G = [](double r) { return r; };
    return k;
}

}  // namespace

MeanFieldModel eks_model(Potential v, int dim, std::string name) {
    MeanFieldModel m;
    m.name = std::move(name);
    m.dim = dim;
    m.noise_dim = dim;
    m.prepare = [](LawContext& l) { l.root = psd_sqrt(2.0 * l.cov); };
    m.drift = [v](const Vec& y, const LawContext& l, Eigen::Ref<Vec> out) { out = -l.cov * v.grad(y); };
    m.diffusion = [](const Vec&, const LawContext& l, Eigen::Ref<Mat> out) { out = l.root; };
    m.drift_jacobian = [v](const Vec& y, const LawContext& l, Eigen::Ref<Mat> out) { out = -l.cov * v.hess(y); };
    m.diffusion_grad = [](const Vec&, const LawContext&, std::vector<Mat>&) {};
    m.diffusion_hess = [](const Vec&, const LawContext&, std::vector<Mat>&) {};
    m.diffusion_state_independent = true;
    m.diffusion_affine = true;
    // Envelope dominating the covariance-difference estimates for the drift
    // and the Powers-Stormer bound for the root (hence G = sqrt).
    const double scale = 4.0 * dim * dim * (v.bound + 2.0);
    m.constants.kappa = 2.0;
    m.constants.F = [scale](double, double a, double b) { return scale * (1.0 + a + b); };
    m.constants.C = 2.0 + v.bound;
    m.constants.G = [](double r) { return std::sqrt(r); };
    return m;
}

MeanFieldModel eks_gaussian_model(const Mat& sigma) {
    return eks_model(gaussian_potential(sigma), static_cast<int>(sigma.rows()), "eks-gaussian");
}

Mat landau_sigma0(const Vec& y) {
    if (y.size() != 3) throw DomainError("sigma_0 is defined on R^3");
    Mat s(3, 3);
    s << y(1), 0.0, y(2),
        -y(0), y(2), 0.0,
        0.0, -y(1), -y(0);
    return s;
}

MeanFieldModel landau_maxwell_model() {
    MeanFieldModel m;
    m.name = "landau-maxwell";
    m.dim = 3;
    m.noise_dim = 3;
    m.prepare = [](LawContext& l) { l.root = landau_sigma0(l.mean); };
    m.drift = [](const Vec& y, const LawContext& l, Eigen::Ref<Vec> out) { out = -2.0 * y + 2.0 * l.mean; };
    m.diffusion = [](const Vec& y, const LawContext& l, Eigen::Ref<Mat> out) { out = landau_sigma0(y) - l.root; };
    m.drift_jacobian = [](const Vec&, const LawContext&, Eigen::Ref<Mat> out) { out = -2.0 * Mat::Identity(3, 3); };
    m.diffusion_grad = [](const Vec&, const LawContext&, std::vector<Mat>& g) {
        for (int j = 0; j < 3; ++j) g[static_cast<std::size_t>(j)] = landau_sigma0(Vec::Unit(3, j));
    };
    m.diffusion_hess = [](const Vec&, const LawContext&, std::vector<Mat>&) {};
    m.diffusion_affine = true;
    m.constants = generic_constants(20.0);
    return m;
}

MeanFieldModel zero_model(int dim) {
    MeanFieldModel m;
    m.name = "zero";
    m.dim = dim;
    m.noise_dim = dim;
    m.diffusion_state_independent = true;
    m.diffusion_affine = true;
    m.constants = generic_constants(1.0);
    return m;
}

MeanFieldModel brownian_model(int dim) {
    MeanFieldModel m = zero_model(dim);
    m.name = "brownian";
    m.diffusion = [dim](const Vec&, const LawContext&, Eigen::Ref<Mat> out) { out = Mat::Identity(dim, dim); };
    m.constants = generic_constants(2.0 * dim);
    return m;
}

MeanFieldModel linear_model(int dim, double k, double s) {
    MeanFieldModel m = zero_model(dim);
    m.name = "linear";
    m.drift = [k](const Vec& y, const LawContext&, Eigen::Ref<Vec> out) { out = -k * y; };
    m.drift_jacobian = [k, dim](const Vec&, const LawContext&, Eigen::Ref<Mat> out) {
        out = -k * Mat::Identity(dim, dim);
    };
    m.diffusion = [s, dim](const Vec&, const LawContext&, Eigen::Ref<Mat> out) { out = s * Mat::Identity(dim, dim); };
    m.constants = generic_constants(2.0 * dim * (1.0 + std::abs(k) + std::abs(s)));
    return m;
}

EksCoefficients eks_coefficients(const MeanFieldModel& eks, const Vec& y, const EmpiricalMeasure& mu) {
    const LawContext l = eks.law(mu);
    return {eks.eval_drift(y, l), eks.eval_diffusion(y, l)};
}

LandauCoefficients landau_coefficients(const Vec& y, const EmpiricalMeasure& mu) {
    if (y.size() != 3 || mu.dim() != 3) throw DomainError("the Landau model lives in R^3");
    static const MeanFieldModel model = landau_maxwell_model();
    const LawContext l = model.law(mu);
    return {model.eval_drift(y, l), model.eval_diffusion(y, l)};
}

std::vector<std::string> model_names() {
    return {"eks-gaussian", "eks-custom", "landau-maxwell", "brownian", "zero", "linear"};
}

MeanFieldModel make_model(const std::string& name, const ModelParameters& p) {
    const int d = p.dim;
    if (d < 1) throw DomainError("model dimension must be positive");
    auto prior = [&] {
        if (static_cast<int>(p.sigma_diag.size()) != d)
            throw DomainError(fmt::format("sigma_diag needs {} entries", d));
        Vec s(d);
        for (int i = 0; i < d; ++i) s(i) = p.sigma_diag[static_cast<std::size_t>(i)];
        if ((s.array() <= 0.0).any()) throw DomainError("sigma_diag entries must be positive");
        return Mat(s.asDiagonal());
    };
    if (name == "eks-gaussian") return eks_gaussian_model(prior());
    if (name == "eks-custom") {
        auto vec = [d](const std::vector<double>& v, const char* what) {
            if (v.empty()) return Vec(Vec::Zero(d));
            if (static_cast<int>(v.size()) != d) throw DomainError(fmt::format("{} needs {} entries", what, d));
            return Vec(Eigen::Map<const Vec>(v.data(), d));
        };
        return eks_model(log_cosh_potential(prior(), vec(p.logcosh_weights, "logcosh_weights"),
                                            vec(p.logcosh_centres, "logcosh_centres")),
                         d, "eks-custom");
    }
    if (name == "landau-maxwell") {
        if (d != 3) throw DomainError("landau-maxwell requires dim = 3");
        return landau_maxwell_model();
    }
    if (name == "brownian") return brownian_model(d);
    if (name == "zero") return zero_model(d);
    if (name == "linear") return linear_model(d, p.rate, p.noise);
    throw DomainError(fmt::format("unknown model '{}'", name));
}

}  // namespace mvrds
