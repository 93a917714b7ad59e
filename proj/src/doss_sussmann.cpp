#include "mvrds/rde.hpp"
#include "rde_internal.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace mvrds {

using namespace detail;

namespace {

// Evaluates the transformed vector field (grad Psi)(0, t_k, Phi(0, t_k, z)) b(t_k, Phi(0, t_k, z)).
class TransformedField {
public:
    TransformedField(const CoefficientField& c, const RoughPath& rp, double blowup)
        : c_(c), rp_(rp), blowup_(blowup), flow_(c, false), jac_(c, false), wf_(flow_.n(), flow_.e()),
          wj_(jac_.n(), jac_.e()), b_(c.dim) {
        const int d = c.dim;
        id_ = Mat::Identity(d, d);
    }

    /// Phi(0, t_k, z).
    Vec flow(std::size_t k, const Vec& z) {
        Vec y = z;
        for (std::size_t j = 0; j < k; ++j) {
            step_forward(flow_, rp_, j, y, wf_);
            guard(y, rp_.grid()[j + 1], blowup_);
        }
        return y;
    }

    /// Returns the field value and writes Phi(0, t_k, z) into y.
    Vec eval(std::size_t k, const Vec& z, Vec& y) {
        ++evaluations;
        const int d = c_.dim;
        y = flow(k, z);
        Vec aug(jac_.n());
        aug.head(d) = y;
        aug.tail(d * d) = Eigen::Map<const Vec>(id_.data(), d * d);
        for (std::size_t j = k; j-- > 0;) {
            step_backward(jac_, rp_, j, aug, wj_);
            guard(aug, rp_.grid()[j], blowup_);
        }
        const Eigen::Map<const Mat> grad_psi(aug.data() + d, d, d);
        c_.drift(rp_.grid()[k], y, b_);
        return grad_psi * b_;
    }

    std::size_t evaluations = 0;

private:
    const CoefficientField& c_;
    const RoughPath& rp_;
    double blowup_;
    FieldSystem flow_;
    JacobianSystem jac_;
    StepWorkspace wf_, wj_;
    Vec b_;
    Mat id_;
};

}  // namespace

DossSussmannResult doss_sussmann_solve(const CoefficientField& c, RoughPathPtr rp, const Vec& xi,
                                       const DossSussmannConfig& cfg) {
    if (c.noise_dim != rp->dim()) throw DomainError("coefficient noise dimension differs from the driver dimension");
    if (xi.size() != c.dim) throw DomainError("initial value has the wrong dimension");
    const int d = c.dim;
    const std::size_t cells = rp->cells();
    const auto& g = rp->grid();
    const long n = static_cast<long>(rp->size());
    DossSussmannResult res;
    Mat z(d, n), y(d, n);
    z.col(0) = xi;
    y.col(0) = xi;

    if (!c.has_drift()) {
        // z is constant; Y is the driftless flow.
        RdeConfig rc;
        rc.blowup = cfg.blowup;
        res.solution = solve_driftless(c, rp, xi, rc);
        res.z = xi.replicate(1, n);
        return res;
    }

    TransformedField field(c, *rp, cfg.blowup);
    Vec yk(d);
    Vec zk = xi;
    Vec k1 = field.eval(0, zk, yk);
    std::size_t k = 0;
    std::size_t q = std::min<std::size_t>(1, cells);
    const std::size_t qmax = std::max<std::size_t>(1, cfg.max_cells_per_step);
    while (k < cells) {
        q = std::max<std::size_t>(1, std::min(q, cells - k));
        const double h = g[k + q] - g[k];
        const Vec z_euler = zk + h * k1;
        Vec y_end(d);
        const Vec k2 = field.eval(k + q, z_euler, y_end);
        const Vec z_heun = zk + 0.5 * h * (k1 + k2);
        const double err = (z_heun - z_euler).lpNorm<Eigen::Infinity>();
        const double tol = cfg.atol + cfg.rtol * std::max(zk.lpNorm<Eigen::Infinity>(), z_heun.lpNorm<Eigen::Infinity>());
        if (err > tol && q > 1) {
            ++res.ds.rejected;
            q /= 2;
            continue;
        }
        if (!z_heun.allFinite()) throw SolverError(fmt::format("Doss-Sussmann ODE became non-finite at t = {}", g[k + q]));
        if (err > tol) ++res.ds.forced_min_steps;
        ++res.ds.accepted;
        // Intermediate grid points: linear interpolation of z, Y recomputed.
        for (std::size_t j = 1; j < q; ++j) {
            const double th = (g[k + j] - g[k]) / h;
            z.col(static_cast<long>(k + j)) = (1.0 - th) * zk + th * z_heun;
            y.col(static_cast<long>(k + j)) = field.flow(k + j, z.col(static_cast<long>(k + j)));
        }
        k += q;
        zk = z_heun;
        z.col(static_cast<long>(k)) = zk;
        if (k < cells)
            k1 = field.eval(k, zk, yk);
        else
            yk = field.flow(k, zk);
        y.col(static_cast<long>(k)) = yk;
        if (yk.lpNorm<Eigen::Infinity>() > cfg.blowup)
            throw SolverError(fmt::format("blow-up guard exceeded at t = {}", g[k]));
        // Grow only on aligned boundaries so steps stay dyadic.
        if (err <= 0.25 * tol && 2 * q <= qmax && k % (2 * q) == 0) q *= 2;
    }

    res.ds.field_evaluations = field.evaluations;
    RdeSolution sol;
    sol.base = rp;
    Mat yp(d * c.noise_dim, n);
    Mat s(d, c.noise_dim);
    for (long i = 0; i < n; ++i) {
        c.diffusion(g[static_cast<std::size_t>(i)], y.col(i), s);
        yp.col(i) = Eigen::Map<const Vec>(s.data(), s.size());
    }
    sol.y = std::move(y);
    sol.yprime = std::move(yp);
    sol.diag.steps = res.ds.accepted;
    sol.diag.max_abs = sol.y.lpNorm<Eigen::Infinity>();
    if (cells % 2 == 0) sol.diag.integral_defect = integral_defect(c, sol, 2);
    res.solution = std::move(sol);
    res.z = std::move(z);
    return res;
}

}  // namespace mvrds
