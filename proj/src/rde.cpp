#include "mvrds/rde.hpp"
#include "rde_internal.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <ostream>

namespace mvrds {

// ---------------------------------------------------------------- coefficient field

Vec CoefficientField::eval_drift(double t, const Vec& y) const {
    Vec out = Vec::Zero(dim);
    if (drift) drift(t, y, out);
    return out;
}

Mat CoefficientField::eval_diffusion(double t, const Vec& y) const {
    Mat out(dim, noise_dim);
    diffusion(t, y, out);
    return out;
}

std::vector<Mat> CoefficientField::eval_grad(double t, const Vec& y) const {
    std::vector<Mat> out(static_cast<std::size_t>(dim), Mat::Zero(dim, noise_dim));
    if (diffusion_grad) diffusion_grad(t, y, out);
    return out;
}

CoefficientField CoefficientField::zero(int d, int e) {
    CoefficientField c;
    c.dim = d;
    c.noise_dim = e;
    c.diffusion = [](double, const Vec&, Mat& s) { s.setZero(); };
    c.diffusion_grad = [](double, const Vec&, std::vector<Mat>& g) {
        for (auto& m : g) m.setZero();
    };
    c.meta.sigma_state_independent = true;
    c.meta.sigma_affine = true;
    c.meta.sigma_lipschitz = 0.0;
    c.meta.sigma_sup = 0.0;
    return c;
}

CoefficientField CoefficientField::scalar_linear(double a, double drift_rate) {
    CoefficientField c;
    c.dim = 1;
    c.noise_dim = 1;
    c.diffusion = [a](double, const Vec& y, Mat& s) { s(0, 0) = a * y(0); };
    c.diffusion_grad = [a](double, const Vec&, std::vector<Mat>& g) { g[0](0, 0) = a; };
    c.diffusion_hess = [](double, const Vec&, std::vector<Mat>& h) { h[0](0, 0) = 0.0; };
    if (drift_rate != 0.0) {
        c.drift = [drift_rate](double, const Vec& y, Vec& b) { b(0) = drift_rate * y(0); };
        c.drift_jacobian = [drift_rate](double, const Vec&, Mat& j) { j(0, 0) = drift_rate; };
        c.meta.drift_lipschitz = std::abs(drift_rate);
        c.meta.drift_growth = std::abs(drift_rate);
    }
    c.meta.sigma_lipschitz = std::abs(a);
    c.meta.sigma_affine = true;
    return c;
}

CoefficientField CoefficientField::state_independent(int d, int e, std::function<Mat(double)> a1,
                                                     std::function<Mat(double)> a1_dot) {
    CoefficientField c;
    c.dim = d;
    c.noise_dim = e;
    c.diffusion = [a1](double t, const Vec&, Mat& s) { s = a1(t); };
    c.diffusion_grad = [](double, const Vec&, std::vector<Mat>& g) {
        for (auto& m : g) m.setZero();
    };
    if (a1_dot) c.diffusion_dt = [a1_dot](double t, const Vec&, Mat& s) { s = a1_dot(t); };
    c.meta.sigma_state_independent = true;
    c.meta.sigma_affine = true;
    c.meta.sigma_lipschitz = 0.0;
    return c;
}

double derivative_consistency(const CoefficientField& c, const std::vector<std::pair<double, Vec>>& points, double h) {
    const int d = c.dim, e = c.noise_dim;
    double worst = 0.0;
    auto rel = [&](const Mat& analytic, const Mat& numeric) {
        const double scale = std::max(1.0, analytic.norm());
        worst = std::max(worst, (analytic - numeric).norm() / scale);
    };
    Mat sp(d, e), sm(d, e);
    Vec bp(d), bm(d);
    for (const auto& [t, y] : points) {
        if (c.diffusion_dt) {
            Mat dt(d, e);
            c.diffusion_dt(t, y, dt);
            c.diffusion(t + h, y, sp);
            c.diffusion(t - h, y, sm);
            rel(dt, (sp - sm) / (2 * h));
        }
        std::vector<Mat> grad(static_cast<std::size_t>(d), Mat::Zero(d, e));
        if (c.diffusion_grad) c.diffusion_grad(t, y, grad);
        std::vector<Mat> hess;
        if (c.diffusion_hess) {
            hess.assign(static_cast<std::size_t>(d * d), Mat::Zero(d, e));
            c.diffusion_hess(t, y, hess);
        }
        Mat bj(d, d);
        if (c.drift_jacobian) c.drift_jacobian(t, y, bj);
        for (int j = 0; j < d; ++j) {
            Vec yp = y, ym = y;
            yp(j) += h;
            ym(j) -= h;
            c.diffusion(t, yp, sp);
            c.diffusion(t, ym, sm);
            rel(grad[static_cast<std::size_t>(j)], (sp - sm) / (2 * h));
            if (c.diffusion_hess) {
                std::vector<Mat> gp(static_cast<std::size_t>(d), Mat::Zero(d, e)), gm = gp;
                c.diffusion_grad(t, yp, gp);
                c.diffusion_grad(t, ym, gm);
                // hess[k*d + j] = d/dy_j (d sigma / d y_k)
                for (int k = 0; k < d; ++k)
                    rel(hess[static_cast<std::size_t>(k * d + j)],
                        (gp[static_cast<std::size_t>(k)] - gm[static_cast<std::size_t>(k)]) / (2 * h));
            }
            if (c.drift && c.drift_jacobian) {
                c.drift(t, yp, bp);
                c.drift(t, ym, bm);
                rel(bj.col(j), (bp - bm) / (2 * h));
            }
        }
    }
    return worst;
}

namespace detail {

// ---------------------------------------------------------------- systems

FieldSystem::FieldSystem(const CoefficientField& c, bool with_drift) : c_(c), with_drift_(with_drift) {
    if (!c.diffusion) throw std::invalid_argument("coefficient field has no diffusion");
    if (!c.diffusion_grad && !c.meta.sigma_state_independent)
        throw std::invalid_argument("coefficient field needs grad sigma unless sigma is state independent");
    n_ = c.dim;
    e_ = c.noise_dim;
    s_.resize(n_, e_);
    grad_.assign(static_cast<std::size_t>(n_), Mat::Zero(n_, e_));
}

void FieldSystem::prepare(double t, const Vec& z) {
    c_.diffusion(t, z, s_);
    if (c_.diffusion_grad) c_.diffusion_grad(t, z, grad_);
}

void FieldSystem::direction(const Vec& v, Mat& out) const {
    out.setZero(n_, e_);
    for (int j = 0; j < n_; ++j)
        if (v(j) != 0.0) out.noalias() += v(j) * grad_[static_cast<std::size_t>(j)];
}

bool FieldSystem::time_increment(double t0, double t1, const Vec& z, Mat& out) {
    if (!c_.diffusion_dt) return false;
    out.resize(n_, e_);
    c_.diffusion_dt(t0, z, out);
    out *= (t1 - t0);
    return true;
}

bool FieldSystem::drift(double t, const Vec& z, Vec& out) {
    if (!with_drift_ || !c_.drift) return false;
    out.resize(n_);
    c_.drift(t, z, out);
    return true;
}

JacobianSystem::JacobianSystem(const CoefficientField& c, bool with_drift) : c_(c), with_drift_(with_drift) {
    if (!c.diffusion) throw std::invalid_argument("coefficient field has no diffusion");
    d_ = c.dim;
    e_ = c.noise_dim;
    if (!c.diffusion_grad && !c.meta.sigma_state_independent)
        throw std::invalid_argument("flow Jacobian needs grad sigma");
    if (!c.diffusion_hess && !c.meta.sigma_affine && !c.meta.sigma_state_independent)
        throw std::invalid_argument("flow Jacobian needs D^2 sigma unless sigma is affine in y");
    if (with_drift_ && c.drift && !c.drift_jacobian) throw std::invalid_argument("flow Jacobian needs grad b");
    s0_.resize(d_, e_);
    grad_.assign(static_cast<std::size_t>(d_), Mat::Zero(d_, e_));
    hess_.assign(static_cast<std::size_t>(d_ * d_), Mat::Zero(d_, e_));
    gdt_.assign(static_cast<std::size_t>(d_), Mat::Zero(d_, e_));
    s_.resize(n(), e_);
    bj_.resize(d_, d_);
    b0_.resize(d_);
}

void JacobianSystem::prepare(double t, const Vec& z) {
    y_ = z.head(d_);
    c_.diffusion(t, y_, s0_);
    if (c_.diffusion_grad) c_.diffusion_grad(t, y_, grad_);
    if (c_.diffusion_hess) c_.diffusion_hess(t, y_, hess_);
    zeta_ = Eigen::Map<const Mat>(z.data() + d_, d_, d_);
    s_.topRows(d_) = s0_;
    for (int l = 0; l < e_; ++l) {
        // column l of the augmented field: A_l zeta with A_l(i, j) = d sigma_{il} / d y_j
        for (int c = 0; c < d_; ++c)
            for (int i = 0; i < d_; ++i) {
                double v = 0.0;
                for (int j = 0; j < d_; ++j) v += grad_[static_cast<std::size_t>(j)](i, l) * zeta_(j, c);
                s_(d_ + i + c * d_, l) = v;
            }
    }
}

void JacobianSystem::direction(const Vec& v, Mat& out) const {
    out.setZero(n(), e_);
    for (int j = 0; j < d_; ++j)
        if (v(j) != 0.0) out.topRows(d_).noalias() += v(j) * grad_[static_cast<std::size_t>(j)];
    const bool has_hess = static_cast<bool>(c_.diffusion_hess);
    for (int l = 0; l < e_; ++l)
        for (int c = 0; c < d_; ++c)
            for (int i = 0; i < d_; ++i) {
                double acc = 0.0;
                for (int j = 0; j < d_; ++j) {
                    // (A_l v_zeta)(i, c)
                    acc += grad_[static_cast<std::size_t>(j)](i, l) * v(d_ + j + c * d_);
                    if (has_hess) {
                        double dA = 0.0;   // sum_k v_k d_k A_l(i, j)
                        for (int k = 0; k < d_; ++k)
                            dA += v(k) * hess_[static_cast<std::size_t>(j * d_ + k)](i, l);
                        acc += dA * zeta_(j, c);
                    }
                }
                out(d_ + i + c * d_, l) = acc;
            }
}

bool JacobianSystem::time_increment(double t0, double t1, const Vec& z, Mat& out) {
    if (!c_.diffusion_dt && !c_.diffusion_grad_dt) return false;
    out.setZero(n(), e_);
    const Vec y = z.head(d_);
    if (c_.diffusion_dt) {
        Mat top(d_, e_);
        c_.diffusion_dt(t0, y, top);
        out.topRows(d_) = top;
    }
    if (c_.diffusion_grad_dt) {
        c_.diffusion_grad_dt(t0, y, gdt_);
        const Eigen::Map<const Mat> zeta(z.data() + d_, d_, d_);
        for (int l = 0; l < e_; ++l)
            for (int c = 0; c < d_; ++c)
                for (int i = 0; i < d_; ++i) {
                    double v = 0.0;
                    for (int j = 0; j < d_; ++j) v += gdt_[static_cast<std::size_t>(j)](i, l) * zeta(j, c);
                    out(d_ + i + c * d_, l) = v;
                }
    }
    out *= (t1 - t0);
    return true;
}

bool JacobianSystem::drift(double t, const Vec& z, Vec& out) {
    if (!with_drift_ || !c_.drift) return false;
    out.setZero(n());
    const Vec y = z.head(d_);
    c_.drift(t, y, b0_);
    c_.drift_jacobian(t, y, bj_);
    out.head(d_) = b0_;
    const Eigen::Map<const Mat> zeta(z.data() + d_, d_, d_);
    const Mat prod = bj_ * zeta;
    out.tail(d_ * d_) = Eigen::Map<const Vec>(prod.data(), d_ * d_);
    return true;
}

LinearSystem::LinearSystem(const std::function<Vec(double, const Vec&)>& b, const LinearDiffusion& s, int dim)
    : b_(b), sig_(s) {
    n_ = dim;
    e_ = static_cast<int>(s.a0.size());
    if (e_ < 1) throw std::invalid_argument("linear diffusion needs at least one a0 matrix");
    for (const auto& a : s.a0)
        if (a.rows() != dim || a.cols() != dim) throw std::invalid_argument("a0 matrices must be d x d");
    if (!s.a1) throw std::invalid_argument("linear diffusion needs a1");
    s_.resize(n_, e_);
}

void LinearSystem::prepare(double t, const Vec& z) {
    s_ = sig_.a1(t);
    if (s_.rows() != n_ || s_.cols() != e_) throw std::invalid_argument("a1(t) has the wrong shape");
    for (int l = 0; l < e_; ++l) s_.col(l).noalias() += sig_.a0[static_cast<std::size_t>(l)] * z;
}

void LinearSystem::direction(const Vec& v, Mat& out) const {
    out.resize(n_, e_);
    for (int l = 0; l < e_; ++l) out.col(l).noalias() = sig_.a0[static_cast<std::size_t>(l)] * v;
}

bool LinearSystem::time_increment(double t0, double t1, const Vec&, Mat& out) {
    out = sig_.a1(t1) - sig_.a1(t0);
    return true;
}

bool LinearSystem::drift(double t, const Vec& z, Vec& out) {
    if (!b_) return false;
    out = b_(t, z);
    return true;
}

// ---------------------------------------------------------------- stepper

StepWorkspace::StepWorkspace(int n, int e) : dir(n, e), tmat(n, e), bvec(n), dx(e), dxx(e, e) {}

void davie_step(StepSystem& sys, Vec& z, double tc, double t_other, double hd, const Vec& dx, const Mat& dxx,
                StepWorkspace& w) {
    sys.prepare(tc, z);
    const Mat& s = sys.sigma();
    Vec out = z;
    out.noalias() += s * dx;
    for (int m = 0; m < sys.e(); ++m) {
        sys.direction(s.col(m), w.dir);
        out.noalias() += w.dir * dxx.row(m).transpose();
    }
    if (sys.time_increment(tc, t_other, z, w.tmat)) out.noalias() += 0.5 * w.tmat * dx;
    if (sys.drift(tc, z, w.bvec)) out.noalias() += hd * w.bvec;
    z.swap(out);
}

void step_forward(StepSystem& sys, const RoughPath& rp, std::size_t k, Vec& z, StepWorkspace& w) {
    const auto& g = rp.grid();
    rp.cell(k, w.dx, w.dxx);
    davie_step(sys, z, g[k], g[k + 1], g[k + 1] - g[k], w.dx, w.dxx, w);
}

void step_backward(StepSystem& sys, const RoughPath& rp, std::size_t k, Vec& z, StepWorkspace& w) {
    // Reversed cell [t_{k+1} -> t_k]: increment -X, second level -XX + X (x) X.
    const auto& g = rp.grid();
    rp.cell(k, w.dx, w.dxx);
    w.dxx = -w.dxx + w.dx * w.dx.transpose();
    w.dx = -w.dx;
    davie_step(sys, z, g[k + 1], g[k], -(g[k + 1] - g[k]), w.dx, w.dxx, w);
}

void guard(const Vec& z, double t, double bound) {
    if (!z.allFinite()) throw SolverError(fmt::format("solution became non-finite at t = {}", t));
    const double a = z.lpNorm<Eigen::Infinity>();
    if (a > bound) throw SolverError(fmt::format("blow-up guard: |Y| = {:.3e} exceeds {:.3e} at t = {}", a, bound, t));
}

RoughPathPtr window(const RoughPathPtr& rp, std::size_t i0, std::size_t i1) {
    if (i0 == 0 && i1 + 1 == rp->size()) return rp;
    return std::make_shared<const RoughPath>(restrict(*rp, i0, i1));
}

RoughPath coarsen_path(const RoughPath& rp, std::size_t factor) {
    if (factor <= 1) return rp;
    if (rp.cells() % factor != 0) throw DomainError("grid cannot be coarsened by this factor");
    const std::size_t cells = rp.cells() / factor;
    const long d = rp.dim();
    Mat x(d, static_cast<long>(cells + 1));
    Mat xx(d * d, static_cast<long>(cells));
    for (std::size_t k = 0; k <= cells; ++k) x.col(static_cast<long>(k)) = rp.values().col(static_cast<long>(k * factor));
    for (std::size_t k = 0; k < cells; ++k) {
        const Mat s = rp.second(k * factor, (k + 1) * factor);
        xx.col(static_cast<long>(k)) = Eigen::Map<const Vec>(s.data(), d * d);
    }
    return RoughPath(rp.grid().coarsen(factor), std::move(x), std::move(xx), rp.alpha(), rp.info());
}

}  // namespace detail

using namespace detail;

// ---------------------------------------------------------------- solutions

namespace {

Mat sigma_columns(const CoefficientField& c, const TimeGrid& g, const Mat& y) {
    const int d = c.dim, e = c.noise_dim;
    Mat out(d * e, y.cols());
    Mat s(d, e);
    for (long i = 0; i < y.cols(); ++i) {
        c.diffusion(g[static_cast<std::size_t>(i)], y.col(i), s);
        out.col(i) = Eigen::Map<const Vec>(s.data(), d * e);
    }
    return out;
}

void check_shapes(const CoefficientField& c, const RoughPath& rp, const Vec& xi) {
    if (c.noise_dim != rp.dim())
        throw DomainError(fmt::format("coefficient noise dimension {} differs from the driver dimension {}", c.noise_dim, rp.dim()));
    if (xi.size() != c.dim) throw DomainError("initial value has the wrong dimension");
}

RdeSolution run(const CoefficientField& c, const RoughPathPtr& rp, const Vec& xi, std::size_t i0, std::size_t i1,
                FlowDirection dir, const RdeConfig& cfg) {
    check_shapes(c, *rp, xi);
    FieldSystem sys(c);
    StepWorkspace w(sys.n(), sys.e());
    const long n = static_cast<long>(i1 - i0 + 1);
    Mat y(c.dim, n);
    Vec z = xi;
    double max_abs = z.lpNorm<Eigen::Infinity>();
    const auto& g = rp->grid();
    if (dir == FlowDirection::Forward) {
        y.col(0) = z;
        for (std::size_t k = i0; k < i1; ++k) {
            step_forward(sys, *rp, k, z, w);
            guard(z, g[k + 1], cfg.blowup);
            max_abs = std::max(max_abs, z.lpNorm<Eigen::Infinity>());
            y.col(static_cast<long>(k + 1 - i0)) = z;
        }
    } else {
        y.col(n - 1) = z;
        for (std::size_t k = i1; k-- > i0;) {
            step_backward(sys, *rp, k, z, w);
            guard(z, g[k], cfg.blowup);
            max_abs = std::max(max_abs, z.lpNorm<Eigen::Infinity>());
            y.col(static_cast<long>(k - i0)) = z;
        }
    }
    RdeSolution sol;
    sol.base = window(rp, i0, i1);
    sol.yprime = sigma_columns(c, sol.base->grid(), y);
    sol.y = std::move(y);
    sol.direction = dir;
    sol.diag.steps = i1 - i0;
    sol.diag.max_abs = max_abs;
    if (cfg.compute_defect && sol.base->cells() % cfg.defect_coarsening == 0)
        sol.diag.integral_defect = integral_defect(c, sol, cfg.defect_coarsening);
    return sol;
}

}  // namespace

RdeSolution solve_forward(const CoefficientField& c, RoughPathPtr rp, const Vec& xi, const RdeConfig& cfg) {
    return run(c, rp, xi, 0, rp->size() - 1, FlowDirection::Forward, cfg);
}

RdeSolution solve_forward(const CoefficientField& c, RoughPathPtr rp, const Vec& xi, double s, double t,
                          const RdeConfig& cfg) {
    const auto i0 = rp->grid().index_of(s), i1 = rp->grid().index_of(t);
    if (i1 <= i0) throw DomainError("solve_forward needs s < t");
    return run(c, rp, xi, i0, i1, FlowDirection::Forward, cfg);
}

RdeSolution solve_driftless(const CoefficientField& c, RoughPathPtr rp, const Vec& xi, const RdeConfig& cfg) {
    if (c.has_drift()) throw std::invalid_argument("solve_driftless called with a drift");
    return solve_forward(c, std::move(rp), xi, cfg);
}

RdeSolution solve_backward(const CoefficientField& c, RoughPathPtr rp, const Vec& delta, double s, double t,
                           const RdeConfig& cfg) {
    const auto i0 = rp->grid().index_of(s), i1 = rp->grid().index_of(t);
    if (i1 <= i0) throw DomainError("solve_backward needs s < t");
    return run(c, rp, delta, i0, i1, FlowDirection::Backward, cfg);
}

JacobianSolution flow_jacobian(const CoefficientField& c, RoughPathPtr rp, const Vec& xi, FlowDirection dir, double s,
                               double t, const RdeConfig& cfg) {
    check_shapes(c, *rp, xi);
    const auto i0 = rp->grid().index_of(s), i1 = rp->grid().index_of(t);
    if (i1 <= i0) throw DomainError("flow_jacobian needs s < t");
    const int d = c.dim;
    JacobianSystem sys(c, true);
    StepWorkspace w(sys.n(), sys.e());
    Vec z(sys.n());
    z.head(d) = xi;
    const Mat id = Mat::Identity(d, d);
    z.tail(d * d) = Eigen::Map<const Vec>(id.data(), d * d);
    const long n = static_cast<long>(i1 - i0 + 1);
    Mat y(d, n);
    std::vector<Mat> zeta(static_cast<std::size_t>(n));
    auto store = [&](long col) {
        y.col(col) = z.head(d);
        zeta[static_cast<std::size_t>(col)] = Eigen::Map<const Mat>(z.data() + d, d, d);
    };
    const auto& g = rp->grid();
    double max_abs = xi.lpNorm<Eigen::Infinity>();
    if (dir == FlowDirection::Forward) {
        store(0);
        for (std::size_t k = i0; k < i1; ++k) {
            step_forward(sys, *rp, k, z, w);
            guard(z, g[k + 1], cfg.blowup);
            max_abs = std::max(max_abs, z.head(d).lpNorm<Eigen::Infinity>());
            store(static_cast<long>(k + 1 - i0));
        }
    } else {
        store(n - 1);
        for (std::size_t k = i1; k-- > i0;) {
            step_backward(sys, *rp, k, z, w);
            guard(z, g[k], cfg.blowup);
            max_abs = std::max(max_abs, z.head(d).lpNorm<Eigen::Infinity>());
            store(static_cast<long>(k - i0));
        }
    }
    JacobianSolution out;
    out.state.base = window(rp, i0, i1);
    out.state.yprime = sigma_columns(c, out.state.base->grid(), y);
    out.state.y = std::move(y);
    out.state.direction = dir;
    out.state.diag.steps = i1 - i0;
    out.state.diag.max_abs = max_abs;
    out.zeta = std::move(zeta);
    return out;
}

JacobianSolution flow_jacobian(const CoefficientField& c, RoughPathPtr rp, const Vec& xi, FlowDirection dir,
                               const RdeConfig& cfg) {
    const double s = rp->grid().front(), t = rp->grid().back();
    return flow_jacobian(c, std::move(rp), xi, dir, s, t, cfg);
}

// ---------------------------------------------------------------- linear diffusion

RdeSolution solve_linear_sigma(const std::function<Vec(double, const Vec&)>& b, const LinearDiffusion& sigma,
                               RoughPathPtr rp, const Vec& xi, const RdeConfig& cfg) {
    const int d = static_cast<int>(xi.size());
    LinearSystem sys(b, sigma, d);
    if (sys.e() != rp->dim()) throw DomainError("linear diffusion has the wrong noise dimension");
    StepWorkspace w(sys.n(), sys.e());
    const long n = static_cast<long>(rp->size());
    Mat y(d, n);
    Vec z = xi;
    y.col(0) = z;
    double max_abs = z.lpNorm<Eigen::Infinity>();
    for (std::size_t k = 0; k + 1 < rp->size(); ++k) {
        step_forward(sys, *rp, k, z, w);
        guard(z, rp->grid()[k + 1], cfg.blowup);
        max_abs = std::max(max_abs, z.lpNorm<Eigen::Infinity>());
        y.col(static_cast<long>(k) + 1) = z;
    }
    RdeSolution sol;
    sol.base = rp;
    const CoefficientField field = linear_sigma_field(b, sigma, d);
    sol.yprime = sigma_columns(field, rp->grid(), y);
    sol.y = std::move(y);
    sol.diag.steps = rp->cells();
    sol.diag.max_abs = max_abs;
    if (cfg.compute_defect && rp->cells() % cfg.defect_coarsening == 0)
        sol.diag.integral_defect = integral_defect(field, sol, cfg.defect_coarsening);
    return sol;
}

CoefficientField linear_sigma_field(const std::function<Vec(double, const Vec&)>& b, const LinearDiffusion& sigma,
                                    int dim) {
    CoefficientField c;
    c.dim = dim;
    c.noise_dim = static_cast<int>(sigma.a0.size());
    auto a0 = sigma.a0;
    auto a1 = sigma.a1;
    c.diffusion = [a0, a1](double t, const Vec& y, Mat& s) {
        s = a1(t);
        for (std::size_t l = 0; l < a0.size(); ++l) s.col(static_cast<long>(l)) += a0[l] * y;
    };
    c.diffusion_grad = [a0](double, const Vec&, std::vector<Mat>& g) {
        for (std::size_t j = 0; j < g.size(); ++j)
            for (std::size_t l = 0; l < a0.size(); ++l) g[j].col(static_cast<long>(l)) = a0[l].col(static_cast<long>(j));
    };
    c.diffusion_hess = [](double, const Vec&, std::vector<Mat>& h) {
        for (auto& m : h) m.setZero();
    };
    if (sigma.a1_dot) {
        auto a1d = sigma.a1_dot;
        c.diffusion_dt = [a1d](double t, const Vec&, Mat& s) { s = a1d(t); };
    }
    if (b) c.drift = [b](double t, const Vec& y, Vec& out) { out = b(t, y); };
    c.meta.sigma_affine = true;
    return c;
}

// ---------------------------------------------------------------- Picard

PicardResult picard_validate(const CoefficientField& c, RoughPathPtr rp, const Vec& xi, int sweeps) {
    check_shapes(c, *rp, xi);
    if (sweeps < 1) throw std::invalid_argument("picard_validate needs at least one sweep");
    FieldSystem sys(c);
    StepWorkspace w(sys.n(), sys.e());
    const long n = static_cast<long>(rp->size());
    const auto& g = rp->grid();
    Mat y = xi.replicate(1, n);
    PicardResult out;
    for (int s = 0; s < sweeps; ++s) {
        Mat next(c.dim, n);
        next.col(0) = xi;
        Vec acc = xi;
        for (std::size_t k = 0; k + 1 < rp->size(); ++k) {
            // local germ evaluated on the previous iterate
            Vec z = y.col(static_cast<long>(k));
            const Vec before = z;
            rp->cell(k, w.dx, w.dxx);
            davie_step(sys, z, g[k], g[k + 1], g[k + 1] - g[k], w.dx, w.dxx, w);
            acc += z - before;
            next.col(static_cast<long>(k) + 1) = acc;
        }
        out.increments.push_back((next - y).lpNorm<Eigen::Infinity>());
        y = std::move(next);
    }
    RdeConfig cfg;
    cfg.compute_defect = false;
    const RdeSolution ref = solve_forward(c, rp, xi, cfg);
    out.distance_to_stepper = (ref.y - y).lpNorm<Eigen::Infinity>();
    out.y = std::move(y);
    return out;
}

// ---------------------------------------------------------------- defect

double integral_defect(const CoefficientField& c, const RdeSolution& sol, std::size_t factor) {
    const RoughPath coarse = coarsen_path(*sol.base, factor);
    auto cptr = std::make_shared<const RoughPath>(coarse);
    const auto& g = coarse.grid();
    const int d = c.dim, e = c.noise_dim;
    const long n = static_cast<long>(g.size());
    // Integrand sigma(t, Y) as a d x e matrix in row-major order with
    // Gubinelli derivative (grad sigma) sigma.
    Mat z(d * e, n), zp(d * e * e, n);
    Mat s(d, e);
    std::vector<Mat> grad(static_cast<std::size_t>(d), Mat::Zero(d, e));
    Vec b(d);
    Mat drift_vals = Mat::Zero(d, n);
    for (long i = 0; i < n; ++i) {
        const long fi = i * static_cast<long>(factor);
        const double t = g[static_cast<std::size_t>(i)];
        const Vec yi = sol.y.col(fi);
        c.diffusion(t, yi, s);
        if (c.diffusion_grad) c.diffusion_grad(t, yi, grad);
        for (int r = 0; r < d; ++r)
            for (int l = 0; l < e; ++l) {
                const long row = r * e + l;
                z(row, i) = s(r, l);
                for (int m = 0; m < e; ++m) {
                    double v = 0.0;
                    for (int j = 0; j < d; ++j) v += grad[static_cast<std::size_t>(j)](r, l) * s(j, m);
                    zp(row + m * d * e, i) = v;
                }
            }
        if (c.drift) {
            c.drift(t, yi, b);
            drift_vals.col(i) = b;
        }
    }
    const Mat integral = rough_integral_path(ControlledPath(cptr, z, zp));
    Mat drift_int = Mat::Zero(d, n);
    for (long i = 1; i < n; ++i)
        drift_int.col(i) = drift_int.col(i - 1) +
                           0.5 * (g[static_cast<std::size_t>(i)] - g[static_cast<std::size_t>(i - 1)]) *
                               (drift_vals.col(i) + drift_vals.col(i - 1));
    double worst = 0.0;
    const long last = n - 1;
    for (long i = 0; i < n; ++i) {
        const Vec yi = sol.y.col(i * static_cast<long>(factor));
        Vec res;
        if (sol.direction == FlowDirection::Forward)
            res = yi - sol.y.col(0) - drift_int.col(i) - integral.col(i);
        else
            res = yi - sol.y.col(sol.y.cols() - 1) + (drift_int.col(last) - drift_int.col(i)) +
                  (integral.col(last) - integral.col(i));
        worst = std::max(worst, res.norm());
    }
    return worst;
}

// ---------------------------------------------------------------- stability

StabilityReport stability_probe(const RdeSolution& sol1, const RdeSolution& sol2, const StabilityInputs& in) {
    StabilityReport r;
    r.lhs = controlled_distance(sol1.controlled(), sol2.controlled());
    r.xi_term = (sol1.y.col(0) - sol2.y.col(0)).norm();
    r.rough_term = rough_distance(*sol1.base, *sol2.base);
    if (in.coeff1 && in.coeff2) {
        const CoefficientField& c1 = *in.coeff1;
        const CoefficientField& c2 = *in.coeff2;
        const auto& g = sol1.grid();
        double sig = 0.0, drift = 0.0;
        for (const RdeSolution* sol : {&sol1, &sol2})
            for (std::size_t i = 0; i < sol->size(); ++i) {
                const double t = g[i];
                const Vec y = sol->y.col(static_cast<long>(i));
                double v = (c1.eval_diffusion(t, y) - c2.eval_diffusion(t, y)).norm();
                const auto g1 = c1.eval_grad(t, y), g2 = c2.eval_grad(t, y);
                for (std::size_t j = 0; j < g1.size(); ++j) v += (g1[j] - g2[j]).norm();
                if (c1.diffusion_dt || c2.diffusion_dt) {
                    Mat a = Mat::Zero(c1.dim, c1.noise_dim), b = a;
                    if (c1.diffusion_dt) c1.diffusion_dt(t, y, a);
                    if (c2.diffusion_dt) c2.diffusion_dt(t, y, b);
                    v += (a - b).norm();
                }
                sig = std::max(sig, v);
                drift = std::max(drift, (c1.eval_drift(t, y) - c2.eval_drift(t, y)).norm());
            }
        r.coefficient_term = sig;
        r.drift_term = drift * (g.back() - g.front());
    }
    r.rhs = r.xi_term + r.rough_term + r.coefficient_term + r.drift_term;
    r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
    return r;
}

// ---------------------------------------------------------------- export

void write_rde_solution(std::ostream& os, const RdeSolution& sol) {
    const RoughPath& rp = *sol.base;
    const long d = rp.dim();
    os << fmt::format("# mvrds-rde-solution 1\n# d={} m={} direction={} steps={} defect={:.17g}\n", d, sol.y.rows(),
                      sol.direction == FlowDirection::Forward ? "forward" : "backward", sol.diag.steps,
                      sol.diag.integral_defect);
    const auto& g = rp.grid();
    for (std::size_t i = 0; i < rp.size(); ++i) {
        const long li = static_cast<long>(i);
        os << fmt::format("{:.17g}", g[i]);
        for (long r = 0; r < d; ++r) os << fmt::format(" {:.17g}", rp.values()(r, li));
        for (long r = 0; r < d * d; ++r)
            os << fmt::format(" {:.17g}", i + 1 < rp.size() ? rp.cell_second_raw()(r, li) : 0.0);
        for (long r = 0; r < sol.y.rows(); ++r) os << fmt::format(" {:.17g}", sol.y(r, li));
        for (long r = 0; r < sol.yprime.rows(); ++r) os << fmt::format(" {:.17g}", sol.yprime(r, li));
        os << '\n';
    }
}

}  // namespace mvrds
