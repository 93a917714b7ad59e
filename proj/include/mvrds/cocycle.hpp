#pragma once

#include "mvrds/mean_field.hpp"
#include "mvrds/rde.hpp"
#include "mvrds/rough_path.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

namespace mvrds {

/// Element (y, mu) of R^d x P_p(R^d).
struct JointState {
    Vec point;
    EmpiricalMeasure law;
};

/// |y - y'| + d_p(mu, mu').
double joint_distance(const JointState& a, const JointState& b, double p = 2.0);

/// One noise realisation together with everything needed to run the flow.
/// Grids are nested: the law-freeze grid (law.n cells on [0, T]) inside the
/// RDE grid (2^rde_level cells) inside the fine noise grid.
struct FlowRun {
    std::shared_ptr<const NoisePath> noise;
    RoughPathPtr lift;              // Stratonovich lift on the RDE grid over [0, T]
    MeanFieldModel model;
    FrozenLawConfig law;            // noise_horizon is T, time_offset 0
    RdeConfig rde;
    int rde_level = 10;
    double horizon = 1.0;

    double delta() const { return horizon / static_cast<double>(law.n); }
};

struct FlowRunConfig {
    std::uint64_t seed = 1;         // noise path omega
    int fine_level = 12;            // fine noise cells per unit horizon, log2
    int rde_level = 10;
    FrozenLawConfig law;            // particle noise is keyed by law.seed
    RdeConfig rde;
};

/// Generates the noise, builds the lift and checks grid nesting.
FlowRun make_flow_run(const MeanFieldModel& model, double T, const FlowRunConfig& cfg);
/// Same run over a different noise path (e.g. a perturbed copy).
FlowRun with_noise(const FlowRun& run, NoisePath noise);

/// Coefficients b(t, y) = b(y, mu_k), sigma(t, y) = sigma(y, mu_k) for
/// t in [k delta, (k + 1) delta), taken from the curve points at multiples
/// of delta. With ito_correction the drift becomes b - 1/2 (grad sigma) sigma.
CoefficientField frozen_law_field(const MeanFieldModel& model, const MeasureCurve& curve, double delta,
                                  bool ito_correction);

/// (phi_t(omega, y, mu), S_t(mu)). t must be a multiple of run.delta().
JointState joint_flow(const FlowRun& run, const JointState& e0, double t);

/// Flow over [r, r + t] of the noise shifted by r, with the particle noise
/// continuing from absolute time r, using `intervals` law-freeze cells.
/// joint_flow is the case r = 0, intervals = t / delta.
struct FlowSegment {
    JointState state;
    MeasureCurve curve;
    RdeSolution point;
};
FlowSegment flow_segment(const FlowRun& run, const JointState& e0, double r, double t, std::size_t intervals);

struct CocycleOptions {
    bool aligned = true;   // legs reuse the freeze grid of the full run
    double p = 2.0;
};

struct CocycleDefect {
    double point = 0.0;            // |phi_{s+t}(omega) - phi_t(theta_s omega) o phi_s(omega)|
    double law = 0.0;              // d_p(S_{s+t} mu, S_t S_s mu)
    double law_upper = 0.0;        // dp_bracket upper bound of the same pair
    JointState full;
    JointState composed;
};
/// The law part is semigroup_check with common particle noise.
CocycleDefect cocycle_defect(const FlowRun& run, const JointState& e0, double s, double t,
                             const CocycleOptions& opt = {});

/// Distance between the flow at t and the flow rerun with twice the
/// law-freeze cells and one more RDE level (when the noise allows it).
struct SelfConsistency {
    double point = 0.0;
    double law = 0.0;
};
SelfConsistency self_consistency_defect(const FlowRun& run, const JointState& e0, double t, double p = 2.0);

struct CocycleRow {
    double s = 0.0;
    double t = 0.0;
    std::size_t n = 0;              // law-freeze cells on [0, T]
    std::size_t particles = 0;
    double point_defect = 0.0;
    double law_defect = 0.0;
    double point_tolerance = 0.0;
    double law_tolerance = 0.0;
    bool pass = true;

    double tolerance() const { return point_tolerance + law_tolerance; }
};
/// Every (s, t) with s + t <= T; tolerances are `margin` times the
/// self-consistency defect at s + t.
std::vector<CocycleRow> cocycle_table(const FlowRun& run, const JointState& e0, const std::vector<double>& s_values,
                                      const std::vector<double>& t_values, double margin = 3.0, double p = 2.0);
/// Columns s, t, n, N, point_defect, law_defect, tolerance, pass, followed by
/// the two component tolerances.
void write_cocycle_table(std::ostream& os, const std::vector<CocycleRow>& rows);

struct WongZakaiPath {
    TimeGrid grid;   // nodes of level n inside [0, t_end]
    Mat y;           // d x nodes
    Vec terminal() const { return y.col(y.cols() - 1); }
};
/// ODE dY = (b - [corrected] 1/2 (grad sigma) sigma) dt + sigma dW^n/dt dt
/// along the piecewise-linear interpolation W^n at level n, with the law
/// frozen along the run's curve. Solved cell by cell with Dormand-Prince.
WongZakaiPath wong_zakai_run(const FlowRun& run, const JointState& e0, int level, bool corrected,
                             double t_end = -1.0);

/// Point component driven by a lift of the run's noise on the RDE grid:
/// Stratonovich lift with or without the drift correction, or the Ito lift
/// without it.
RdeSolution point_solution(const FlowRun& run, const JointState& e0, double t, LiftMode mode, bool ito_correction);

enum class PerturbationChannel { Point, Law, Noise };

struct ContinuityChannel {
    PerturbationChannel channel;
    std::vector<double> eps;
    std::vector<double> distance;   // joint_distance of the flows at t
    double slope = 0.0;             // least squares, log distance vs log eps
    bool degenerate = false;        // every distance is zero
    bool ok = true;                 // slope >= min_slope, or degenerate
};
struct ContinuityReport {
    std::vector<ContinuityChannel> channels;
    bool ok = true;
};
struct ContinuityOptions {
    std::vector<double> eps{1e-1, 1e-2, 1e-3, 1e-4};
    double min_slope = 0.9;
    double p = 2.0;
    /// Noise bump with sup norm 1; default sin(pi t / T) e_1 on [0, T].
    std::function<Vec(double)> bump;
};
/// Perturbs the initial point along (1, .., 1)/sqrt(d), translates the
/// initial cloud by eps e_1, and adds eps * bump to the noise.
ContinuityReport continuity_probe(const FlowRun& run, const JointState& e0, double t, const ContinuityOptions& opt = {});

}  // namespace mvrds
