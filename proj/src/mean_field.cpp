#include "mvrds/mean_field.hpp"

#include "mvrds/brownian.hpp"
#include "mvrds/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace mvrds {

namespace {

constexpr std::uint32_t kParticlePurpose = 21;
constexpr std::uint32_t kDualPurpose = 22;
constexpr std::uint32_t kResampleTag = 0x5a3u;

/// Dyadic level at which every step time offset + j h is a grid point of the
/// noise, or -1.
int step_level(double offset, double h, double horizon) {
    for (int level = 0; level <= LevyBrownian::kMaxLevel; ++level) {
        const double scale = std::ldexp(1.0, level) / horizon;
        const double a = offset * scale, b = h * scale;
        // Scaling by a power of two is exact, so dyadic times land on integers.
        if (std::abs(a - std::round(a)) <= 1e-6 && std::abs(b - std::round(b)) <= 1e-6 && std::round(b) >= 1.0)
            return level;
    }
    return -1;
}

/// Euler-Maruyama driver shared by the particle system and the dual SDE.
class EulerGrid {
public:
    EulerGrid(double offset, double T, std::size_t steps, double horizon) {
        if (!(T > 0.0)) throw DomainError("simulation horizon must be positive");
        if (horizon <= 0.0) horizon = offset + T;
        if (offset < 0.0 || offset + T > horizon * (1.0 + 1e-12))
            throw DomainError(fmt::format("window [{}, {}] leaves the noise horizon {}", offset, offset + T, horizon));
        horizon_ = horizon;
        h_ = T / static_cast<double>(steps);
        level_ = step_level(offset, h_, horizon);
        if (level_ < 0)
            throw DomainError(fmt::format("step times {} + j {} are not dyadic fractions of the noise horizon {}", offset,
                                          h_, horizon));
        const double scale = std::ldexp(1.0, level_) / horizon;
        j0_ = static_cast<std::uint64_t>(std::llround(offset * scale));
        stride_ = static_cast<std::uint64_t>(std::llround(h_ * scale));
    }

    double h() const { return h_; }
    double horizon() const { return horizon_; }

    /// Brownian increments for steps [k0, k1) of one path (columns).
    Mat increments(const LevyBrownian& w, std::size_t k0, std::size_t k1) const {
        const Mat v = w.fill(level_, j0_ + k0 * stride_, j0_ + k1 * stride_);
        Mat dw(v.rows(), static_cast<long>(k1 - k0));
        for (std::size_t k = 0; k < k1 - k0; ++k)
            dw.col(static_cast<long>(k)) = v.col(static_cast<long>((k + 1) * stride_)) - v.col(static_cast<long>(k * stride_));
        return dw;
    }

private:
    double horizon_ = 0.0;
    double h_ = 0.0;
    int level_ = 0;
    std::uint64_t j0_ = 0;
    std::uint64_t stride_ = 1;
};

void check_state(const Eigen::Ref<const Vec>& y, double bound, double t) {
    if (!y.allFinite()) throw SolverError(fmt::format("non-finite particle state at t = {}", t));
    if (y.norm() > bound) throw SolverError(fmt::format("particle left the ball of radius {} at t = {}", bound, t));
}

struct Coefficients {
    const MeanFieldModel& model;
    Vec b;
    Mat sigma;
    explicit Coefficients(const MeanFieldModel& m) : model(m), b(m.dim), sigma(m.dim, m.noise_dim) {}
    void eval(const Vec& y, const LawContext& law) {
        b.setZero();
        sigma.setZero();
        if (model.drift) model.drift(y, law, b);
        if (model.diffusion) model.diffusion(y, law, sigma);
    }
};

void validate(const MeanFieldModel& model, const EmpiricalMeasure& mu0, const FrozenLawConfig& cfg) {
    if (cfg.n < 1) throw DomainError("need at least one law-freeze sub-interval");
    if (cfg.inner_steps < 1) throw DomainError("need at least one inner step");
    if (mu0.dim() != model.dim) throw DomainError("initial law and model differ in dimension");
}

}  // namespace

double MeasureCurve::sup_moment(double p) const {
    double m = 0.0;
    for (const auto& s : states) m = std::max(m, moment(s, p));
    return m;
}

EmpiricalMeasure initial_particles(const EmpiricalMeasure& mu0, const FrozenLawConfig& cfg) {
    if (cfg.particles == 0 || cfg.particles == mu0.size()) return mu0;
    // Inverse-CDF resampling with keyed uniforms.
    std::vector<double> cdf(mu0.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < mu0.size(); ++i) cdf[i] = (acc += mu0.weight(i));
    Mat x(mu0.dim(), static_cast<long>(cfg.particles));
    for (std::size_t i = 0; i < cfg.particles; ++i) {
        const double u = keyed_uniform(cfg.seed, {i, kResampleTag, 0}) * acc;
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), mu0.size() - 1);
        x.col(static_cast<long>(i)) = mu0.atom(k);
    }
    return EmpiricalMeasure::uniform(std::move(x));
}

MeasureCurve simulate_frozen_law(const MeanFieldModel& model, const EmpiricalMeasure& mu0, const FrozenLawConfig& cfg,
                                 double T) {
    validate(model, mu0, cfg);
    const EmpiricalMeasure start = initial_particles(mu0, cfg);
    const std::size_t n_particles = start.size();
    const std::size_t steps = cfg.n * cfg.inner_steps;
    const EulerGrid grid(cfg.time_offset, T, steps, cfg.noise_horizon);
    const double h = grid.h();

    std::vector<LevyBrownian> noise;
    noise.reserve(n_particles);
    if (!cfg.noise_keys.empty() && cfg.noise_keys.size() != n_particles)
        throw DomainError("one noise key per particle");
    for (std::size_t i = 0; i < n_particles; ++i)
        noise.emplace_back(cfg.seed, cfg.noise_keys.empty() ? i : cfg.noise_keys[i], model.noise_dim, grid.horizon(),
                           kParticlePurpose);

    // Whole-window increments per particle; node values do not depend on the
    // range drawn, so this matches drawing interval by interval.
    std::vector<Mat> dws;
    dws.reserve(n_particles);
    for (std::size_t i = 0; i < n_particles; ++i) dws.push_back(grid.increments(noise[i], 0, steps));

    Mat y = start.atoms();
    const Vec& w = start.weights();
    MeasureCurve curve;
    curve.freeze_stride = cfg.record_inner ? cfg.inner_steps : 1;
    std::vector<double> times{0.0};
    curve.states.push_back(start);

    Coefficients co(model);
    Vec yi(model.dim);
    for (std::size_t k = 0; k < cfg.n; ++k) {
        const LawContext law = model.law(EmpiricalMeasure(y, w));
        const std::size_t s0 = k * cfg.inner_steps;
        std::vector<Mat> record(cfg.record_inner ? cfg.inner_steps - 1 : 0, Mat(model.dim, static_cast<long>(n_particles)));
        for (std::size_t i = 0; i < n_particles; ++i) {
            const Mat& dw = dws[i];
            yi = y.col(static_cast<long>(i));
            for (std::size_t m = 0; m < cfg.inner_steps; ++m) {
                co.eval(yi, law);
                yi += co.b * h + co.sigma * dw.col(static_cast<long>(s0 + m));
                check_state(yi, cfg.blowup, static_cast<double>(s0 + m + 1) * h);
                if (cfg.record_inner && m + 1 < cfg.inner_steps) record[m].col(static_cast<long>(i)) = yi;
            }
            y.col(static_cast<long>(i)) = yi;
        }
        for (std::size_t m = 0; m + 1 < cfg.inner_steps && cfg.record_inner; ++m) {
            times.push_back(static_cast<double>(s0 + m + 1) * h);
            curve.states.emplace_back(record[m], w);
        }
        times.push_back(k + 1 == cfg.n ? T : static_cast<double>(s0 + cfg.inner_steps) * h);
        curve.states.emplace_back(y, w);
    }
    curve.times = TimeGrid(std::move(times));
    return curve;
}

double weak_solution_residual(const MeasureCurve& curve, const MeanFieldModel& model, const TestFunction& phi, double t) {
    const std::size_t last = curve.times.index_of(t);
    auto generator = [&](const EmpiricalMeasure& mu) {
        const LawContext law = model.law(mu);
        Coefficients co(model);
        double s = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            const Vec y = mu.atom(i);
            co.eval(y, law);
            const Mat a = co.sigma * co.sigma.transpose();
            s += mu.weight(i) * (co.b.dot(phi.grad(y)) + 0.5 * (a.array() * phi.hess(y).array()).sum());
        }
        return s;
    };
    double integral = 0.0;
    double prev = generator(curve.states[0]);
    for (std::size_t k = 1; k <= last; ++k) {
        const double cur = generator(curve.states[k]);
        integral += 0.5 * (prev + cur) * (curve.times[k] - curve.times[k - 1]);
        prev = cur;
    }
    return std::abs(curve.states[last].integrate(phi.value) - curve.states[0].integrate(phi.value) - integral);
}

MomentBoundReport moment_bound_check(const std::vector<MeasureCurve>& curves, const std::vector<std::size_t>& n,
                                     double p, double rel_tol) {
    if (curves.size() != n.size() || curves.empty()) throw DomainError("one refinement level per curve");
    MomentBoundReport r;
    r.n = n;
    for (const auto& c : curves) r.sup_moment.push_back(c.sup_moment(p));
    const double k = static_cast<double>(n.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t j = 0; j < n.size(); ++j) {
        mx += std::log2(static_cast<double>(n[j])) / k;
        my += r.sup_moment[j] / k;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t j = 0; j < n.size(); ++j) {
        const double dx = std::log2(static_cast<double>(n[j])) - mx;
        sxy += dx * (r.sup_moment[j] - my);
        sxx += dx * dx;
    }
    r.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    r.tolerance = rel_tol * std::abs(my);
    r.ok = r.slope <= r.tolerance;
    return r;
}

TimeRegularityReport time_regularity_check(const MeasureCurve& curve, double p, double tol) {
    if (curve.size() < 3) throw DomainError("time regularity needs at least three curve points");
    TimeRegularityReport r;
    for (std::size_t lag : {std::size_t{1}, std::size_t{2}}) {
        double up = 0.0, lo = 0.0, dt = 0.0;
        std::size_t count = 0;
        for (std::size_t k = 0; k + lag < curve.size(); ++k) {
            const auto b = dp_bracket(curve.states[k], curve.states[k + lag], p);
            const double h = curve.times[k + lag] - curve.times[k];
            up += b.upper;
            lo += b.lower;
            dt += h;
            ++count;
            if (lag == 1) {
                r.lipschitz_upper = std::max(r.lipschitz_upper, b.upper / h);
                r.lipschitz_lower = std::max(r.lipschitz_lower, b.lower / h);
            }
        }
        const double c = static_cast<double>(count);
        r.lag.push_back(dt / c);
        r.upper.push_back(up / c);
        r.lower.push_back(lo / c);
    }
    r.doubling_upper = r.upper[0] > 0.0 ? r.upper[1] / r.upper[0] : 0.0;
    r.doubling_lower = r.lower[0] > 0.0 ? r.lower[1] / r.lower[0] : 0.0;
    r.linear = r.doubling_lower <= 2.0 * (1.0 + tol);
    return r;
}

StabilityCheckReport stability_check(const MeanFieldModel& model, const EmpiricalMeasure& mu0,
                                     const EmpiricalMeasure& rho0, const FrozenLawConfig& cfg, double T, double p) {
    const MeasureCurve a = simulate_frozen_law(model, mu0, cfg, T);
    const MeasureCurve b = simulate_frozen_law(model, rho0, cfg, T);
    if (a.states.front().size() != b.states.front().size())
        throw DomainError("stability check needs equal particle counts");
    StabilityCheckReport r;
    r.initial_wasserstein = wasserstein(a.states[0], b.states[0], p);
    r.initial_upper = dp_bracket(a.states[0], b.states[0], p).upper;
    r.degenerate = r.initial_wasserstein == 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const auto br = dp_bracket(a.states[k], b.states[k], p);
        r.times.push_back(a.times[k]);
        auto ratio = [&](double v, double v0) {
            if (v0 > 0.0) return v / v0;
            return v == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        };
        r.ratio_wasserstein.push_back(ratio(br.wasserstein, r.initial_wasserstein));
        r.ratio_upper.push_back(ratio(br.upper, r.initial_upper));
        r.max_ratio_wasserstein = std::max(r.max_ratio_wasserstein, r.ratio_wasserstein.back());
        r.max_ratio_upper = std::max(r.max_ratio_upper, r.ratio_upper.back());
    }
    return r;
}

DualityReport feynman_kac_duality(const MeanFieldModel& model, const EmpiricalMeasure& mu0,
                                  const std::function<double(const Vec&)>& phi, const FrozenLawConfig& cfg, double T,
                                  const DualityConfig& dcfg) {
    if (dcfg.paths_per_point < 1) throw DomainError("need at least one path per point");
    const MeasureCurve curve = simulate_frozen_law(model, mu0, cfg, T);
    const EmpiricalMeasure& start = curve.states.front();
    const EmpiricalMeasure& end = curve.terminal();

    DualityReport r;
    // Left side and its sampling error.
    std::vector<double> fl(end.size());
    for (std::size_t i = 0; i < end.size(); ++i) fl[i] = phi(end.atom(i));
    double var_l = 0.0, w2 = 0.0;
    r.lhs = end.integrate(phi);
    for (std::size_t i = 0; i < end.size(); ++i) {
        var_l += end.weight(i) * (fl[i] - r.lhs) * (fl[i] - r.lhs);
        w2 += end.weight(i) * end.weight(i);
    }
    const double se_l2 = var_l * w2;

    // Right side: linear SDE with the frozen curve as coefficients, started
    // from every atom of the initial cloud.
    std::vector<LawContext> laws;
    for (std::size_t k = 0; k < cfg.n; ++k) laws.push_back(model.law(curve.states[k * curve.freeze_stride]));
    const EulerGrid grid(cfg.time_offset, T, cfg.n * cfg.inner_steps, cfg.noise_horizon);
    const std::size_t m_paths = dcfg.paths_per_point;
    Coefficients co(model);
    double se_r2 = 0.0;
    for (std::size_t i = 0; i < start.size(); ++i) {
        std::vector<double> vals(m_paths);
        for (std::size_t m = 0; m < m_paths; ++m) {
            const LevyBrownian w(dcfg.seed, i * m_paths + m, model.noise_dim, grid.horizon(), kDualPurpose);
            const Mat dw = grid.increments(w, 0, cfg.n * cfg.inner_steps);
            Vec xi = start.atom(i);
            for (std::size_t k = 0; k < cfg.n; ++k)
                for (std::size_t s = 0; s < cfg.inner_steps; ++s) {
                    co.eval(xi, laws[k]);
                    xi += co.b * grid.h() + co.sigma * dw.col(static_cast<long>(k * cfg.inner_steps + s));
                }
            vals[m] = phi(xi);
        }
        double mean = 0.0;
        for (double v : vals) mean += v / static_cast<double>(m_paths);
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        var /= m_paths > 1 ? static_cast<double>(m_paths - 1) : 1.0;
        if (m_paths == 1) var = std::numeric_limits<double>::quiet_NaN();
        r.rhs += start.has_uniform_weights() ? mean : start.weight(i) * mean;
        se_r2 += start.weight(i) * start.weight(i) * var / static_cast<double>(m_paths);
    }
    if (start.has_uniform_weights()) r.rhs /= static_cast<double>(start.size());
    if (m_paths == 1) se_r2 = se_l2;   // single path per point: same sampling error as the particle average
    r.residual = std::abs(r.lhs - r.rhs);
    r.std_error = std::sqrt(se_l2 + se_r2);
    return r;
}

SemigroupReport semigroup_check(const MeanFieldModel& model, const EmpiricalMeasure& mu0, const FrozenLawConfig& cfg,
                                double s, double t, const SemigroupOptions& opt) {
    if (s < 0.0 || t < 0.0 || !(s + t > 0.0)) throw DomainError("semigroup check needs s, t >= 0 and s + t > 0");
    FrozenLawConfig base = cfg;
    if (base.noise_horizon <= 0.0) base.noise_horizon = cfg.time_offset + s + t;
    const MeasureCurve full = simulate_frozen_law(model, mu0, base, s + t);

    auto leg_cfg = [&](std::size_t n, double offset) {
        FrozenLawConfig c = base;
        c.n = n;
        c.particles = 0;
        c.record_inner = false;
        c.time_offset = offset;
        return c;
    };

    EmpiricalMeasure restart = full.states.front();
    std::size_t n_t = cfg.n;
    if (opt.aligned) {
        const double delta = (s + t) / static_cast<double>(cfg.n);
        const double ks = s / delta, kt = t / delta;
        if (std::abs(ks - std::round(ks)) > 1e-9 * cfg.n || std::abs(kt - std::round(kt)) > 1e-9 * cfg.n)
            throw DomainError(fmt::format("s = {} and t = {} must lie on the law-freeze grid of step {}", s, t, delta));
        n_t = static_cast<std::size_t>(std::llround(kt));
        restart = full.states[static_cast<std::size_t>(std::llround(ks)) * full.freeze_stride];
    } else if (s > 0.0) {
        FrozenLawConfig c1 = base;
        restart = simulate_frozen_law(model, mu0, c1, s).terminal();
    }

    EmpiricalMeasure restarted = restart;
    if (t > 0.0 && n_t > 0) {
        FrozenLawConfig c2 = leg_cfg(n_t, cfg.time_offset + s);
        if (!opt.common_noise) {
            c2.seed = derive_seed(cfg.seed, 0x5e3u);
            c2.time_offset = cfg.time_offset;
        }
        restarted = simulate_frozen_law(model, restart, c2, t).terminal();
    }
    const auto b = dp_bracket(full.terminal(), restarted, opt.p);
    return {b.wasserstein, b.upper, full.terminal(), std::move(restarted)};
}

void write_curve(std::ostream& os, const MeasureCurve& curve) {
    os << "t particle";
    for (int r = 0; r < curve.states.front().dim(); ++r) os << " x" << r + 1;
    os << '\n';
    for (std::size_t k = 0; k < curve.size(); ++k) {
        const auto& mu = curve.states[k];
        for (std::size_t i = 0; i < mu.size(); ++i) {
            os << fmt::format("{:.17g} {}", curve.times[k], i);
            for (int r = 0; r < mu.dim(); ++r) os << fmt::format(" {:.17g}", mu.atom(i)(r));
            os << '\n';
        }
    }
}

void write_curve_summary(std::ostream& os, const MeasureCurve& curve, double p) {
    const int d = curve.states.front().dim();
    os << "t m2 mp";
    for (int r = 0; r < d; ++r) os << " mean" << r + 1;
    for (int r = 0; r < d; ++r)
        for (int c = r; c < d; ++c) os << " cov" << r + 1 << c + 1;
    os << '\n';
    for (std::size_t k = 0; k < curve.size(); ++k) {
        const auto& mu = curve.states[k];
        const Vec m = mu.mean();
        const Mat c = covariance(mu);
        os << fmt::format("{:.17g} {:.17g} {:.17g}", curve.times[k], moment(mu, 2.0), moment(mu, p));
        for (int r = 0; r < d; ++r) os << fmt::format(" {:.17g}", m(r));
        for (int r = 0; r < d; ++r)
            for (int cc = r; cc < d; ++cc) os << fmt::format(" {:.17g}", c(r, cc));
        os << '\n';
    }
}

}  // namespace mvrds
