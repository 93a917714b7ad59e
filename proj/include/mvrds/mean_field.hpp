#pragma once

#include "mvrds/measure.hpp"
#include "mvrds/models.hpp"
#include "mvrds/time_grid.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace mvrds {

/// Curve t -> mu_t of particle clouds with a fixed particle count.
struct MeasureCurve {
    TimeGrid times;
    std::vector<EmpiricalMeasure> states;
    std::size_t freeze_stride = 1;   // curve points per law-freeze sub-interval

    std::size_t size() const { return states.size(); }
    const EmpiricalMeasure& at(double t) const { return states[times.index_of(t)]; }
    const EmpiricalMeasure& terminal() const { return states.back(); }
    /// sup_t M_p(mu_t).
    double sup_moment(double p) const;
};

struct FrozenLawConfig {
    std::size_t n = 16;             // law-freeze sub-intervals on [0, T]
    std::size_t particles = 0;      // 0: use the atoms of mu0 as they are
    std::size_t inner_steps = 4;    // Euler-Maruyama steps per sub-interval
    std::uint64_t seed = 1;
    bool record_inner = false;
    double noise_horizon = 0.0;     // horizon of the dyadic noise; 0 means T
    double time_offset = 0.0;       // absolute start time inside the noise
    double blowup = 1e8;
    /// Identity of each particle for noise keying; empty means the index.
    std::vector<std::uint64_t> noise_keys;
};

/// Particle system whose law argument is frozen at the ensemble's empirical
/// measure on each sub-interval [k T/n, (k+1) T/n). Particle i is driven by
/// its own Brownian path, keyed by (seed, i), sampled at absolute times
/// time_offset + t; step times must be dyadic fractions of the noise horizon.
MeasureCurve simulate_frozen_law(const MeanFieldModel& model, const EmpiricalMeasure& mu0, const FrozenLawConfig& cfg,
                                 double T);

/// Initial cloud actually used by the simulation (resampled when
/// cfg.particles differs from mu0.size()).
EmpiricalMeasure initial_particles(const EmpiricalMeasure& mu0, const FrozenLawConfig& cfg);

/// |int phi dmu_t - int phi dmu_0 - int_0^t int (<b, grad phi> + 1/2 sigma sigma^T : D^2 phi) dmu_s ds|,
/// trapezoid rule on the curve grid.
double weak_solution_residual(const MeasureCurve& curve, const MeanFieldModel& model, const TestFunction& phi, double t);

struct MomentBoundReport {
    std::vector<std::size_t> n;
    std::vector<double> sup_moment;
    double slope = 0.0;        // least-squares slope of sup moment against log2 n
    double tolerance = 0.0;
    bool ok = true;
};
/// Sup moments across curves that differ only in n; flags a growth trend
/// when the slope exceeds rel_tol times the mean sup moment.
MomentBoundReport moment_bound_check(const std::vector<MeasureCurve>& curves, const std::vector<std::size_t>& n,
                                     double p, double rel_tol = 0.05);

struct TimeRegularityReport {
    std::vector<double> lag;
    std::vector<double> upper;      // mean dp_bracket upper at each lag
    std::vector<double> lower;      // mean dp_bracket lower at each lag
    double lipschitz_upper = 0.0;   // max upper / lag over adjacent pairs
    double lipschitz_lower = 0.0;
    double doubling_upper = 0.0;    // upper(2h) / upper(h)
    double doubling_lower = 0.0;
    bool linear = true;             // doubling_lower <= 2 (1 + tol)
};
TimeRegularityReport time_regularity_check(const MeasureCurve& curve, double p, double tol = 0.25);

struct StabilityCheckReport {
    std::vector<double> times;
    double initial_wasserstein = 0.0;
    double initial_upper = 0.0;
    std::vector<double> ratio_wasserstein;
    std::vector<double> ratio_upper;
    double max_ratio_upper = 0.0;
    double max_ratio_wasserstein = 0.0;
    bool degenerate = false;   // identical initial data: ratio 0/0 counted as pass
};
/// Runs both initial clouds with the same seed and compares the curves.
StabilityCheckReport stability_check(const MeanFieldModel& model, const EmpiricalMeasure& mu0,
                                     const EmpiricalMeasure& rho0, const FrozenLawConfig& cfg, double T, double p);

struct DualityConfig {
    std::size_t paths_per_point = 4;
    std::uint64_t seed = 0x0fc;
};
struct DualityReport {
    double lhs = 0.0;         // int phi dmu_T
    double rhs = 0.0;         // int u(0, .) dmu_0
    double residual = 0.0;    // |lhs - rhs|
    double std_error = 0.0;   // combined Monte Carlo standard error
};
/// Compares int phi dmu_T with int E[phi(xi_T^{0,y})] mu_0(dy), where xi
/// solves the linear SDE whose coefficients are frozen along the curve.
DualityReport feynman_kac_duality(const MeanFieldModel& model, const EmpiricalMeasure& mu0,
                                  const std::function<double(const Vec&)>& phi, const FrozenLawConfig& cfg, double T,
                                  const DualityConfig& dcfg = {});

struct SemigroupOptions {
    bool common_noise = true;   // second leg continues the same particle paths
    bool aligned = false;       // legs reuse the full run's freeze grid and restart state
    double p = 2.0;
};
struct SemigroupReport {
    double wasserstein = 0.0;   // d_p(S_{s+t} mu, S_t S_s mu)
    double upper = 0.0;         // dp_bracket upper bound
    EmpiricalMeasure full;
    EmpiricalMeasure restarted;
};
/// Aligned mode needs s, t to be multiples of (s + t) / cfg.n; otherwise
/// each leg is split into cfg.n sub-intervals of its own.
SemigroupReport semigroup_check(const MeanFieldModel& model, const EmpiricalMeasure& mu0, const FrozenLawConfig& cfg,
                                double s, double t, const SemigroupOptions& opt = {});

/// Rows "t particle x_1 .. x_d" and a summary with M_2, M_p, mean and covariance.
void write_curve(std::ostream& os, const MeasureCurve& curve);
void write_curve_summary(std::ostream& os, const MeasureCurve& curve, double p);

}  // namespace mvrds
