#pragma once

#include "mvrds/controlled.hpp"
#include "mvrds/rough_path.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace mvrds {

/// Declared regularity data of a coefficient field. NaN means "not declared".
struct CoefficientMetadata {
    double drift_lipschitz = std::numeric_limits<double>::quiet_NaN();
    double drift_growth = std::numeric_limits<double>::quiet_NaN();
    double sigma_lipschitz = std::numeric_limits<double>::quiet_NaN();
    double sigma_sup = std::numeric_limits<double>::quiet_NaN();
    bool sigma_state_independent = false;
    bool sigma_affine = false;  // D^2 sigma = 0
};

/// Time-dependent coefficients b(t, y) in R^d and sigma(t, y) in R^{d x e}
/// with analytic derivatives. Callbacks write into caller-owned outputs so
/// solvers can reuse buffers.
struct CoefficientField {
    int dim = 0;
    int noise_dim = 0;
    std::function<void(double, const Vec&, Vec&)> drift;                     // empty: b = 0
    std::function<void(double, const Vec&, Mat&)> diffusion;                 // d x e
    std::function<void(double, const Vec&, Mat&)> diffusion_dt;              // empty: 0
    std::function<void(double, const Vec&, std::vector<Mat>&)> diffusion_grad;  // d entries d sigma / d y_j
    std::function<void(double, const Vec&, std::vector<Mat>&)> diffusion_hess;  // d*d entries, index j*d+k
    std::function<void(double, const Vec&, std::vector<Mat>&)> diffusion_grad_dt;  // optional, d entries
    std::function<void(double, const Vec&, Mat&)> drift_jacobian;            // d x d
    CoefficientMetadata meta;

    bool has_drift() const { return static_cast<bool>(drift); }

    Vec eval_drift(double t, const Vec& y) const;
    Mat eval_diffusion(double t, const Vec& y) const;
    std::vector<Mat> eval_grad(double t, const Vec& y) const;

    /// b = 0, sigma = 0.
    static CoefficientField zero(int d, int e);
    /// sigma(t, y) = a y (scalar state and noise), optional drift c y.
    static CoefficientField scalar_linear(double a, double drift_rate = 0.0);
    /// State-independent diffusion a1(t) with derivative a1_dot(t).
    static CoefficientField state_independent(int d, int e, std::function<Mat(double)> a1,
                                              std::function<Mat(double)> a1_dot);
};

/// Largest relative deviation between the analytic derivatives of `c` and
/// central finite differences with step h at the given points.
double derivative_consistency(const CoefficientField& c, const std::vector<std::pair<double, Vec>>& points,
                              double h = 1e-5);

struct RdeConfig {
    double blowup = 1e8;          // abort when |Y| exceeds this
    bool compute_defect = true;
    std::size_t defect_coarsening = 2;
};

struct RdeDiagnostics {
    std::size_t steps = 0;
    double max_abs = 0.0;
    double integral_defect = std::numeric_limits<double>::quiet_NaN();
};

enum class FlowDirection { Forward, Backward };

/// Solution path on a contiguous slice [i0, i1] of the driver grid together
/// with its Gubinelli derivative Y' = sigma(t, Y).
struct RdeSolution {
    RoughPathPtr base;        // driver restricted to the solution window
    Mat y;                    // d x n
    Mat yprime;               // (d*e) x n, column-major d x e blocks
    RdeDiagnostics diag;
    FlowDirection direction = FlowDirection::Forward;

    std::size_t size() const { return static_cast<std::size_t>(y.cols()); }
    const TimeGrid& grid() const { return base->grid(); }
    Vec at(double t) const { return y.col(static_cast<long>(grid().index_of(t))); }
    Vec terminal() const { return y.col(y.cols() - 1); }
    ControlledPath controlled() const { return ControlledPath(base, y, yprime); }
};

/// Rough Milstein/Davie step driver for dY = b dt + sigma dX on [s, t].
RdeSolution solve_forward(const CoefficientField& c, RoughPathPtr rp, const Vec& xi, const RdeConfig& cfg = {});
RdeSolution solve_forward(const CoefficientField& c, RoughPathPtr rp, const Vec& xi, double s, double t,
                          const RdeConfig& cfg = {});
/// Same scheme with b required to be absent.
RdeSolution solve_driftless(const CoefficientField& c, RoughPathPtr rp, const Vec& xi, const RdeConfig& cfg = {});

/// Backward RDE on [s, t] with terminal value delta at t; y.col(0) is the
/// value Psi(s, t, delta).
RdeSolution solve_backward(const CoefficientField& c, RoughPathPtr rp, const Vec& delta, double s, double t,
                           const RdeConfig& cfg = {});

struct JacobianSolution {
    RdeSolution state;
    std::vector<Mat> zeta;   // d x d per grid point of the window
};

/// Linearised RDE d zeta = (grad sigma) zeta dX (+ grad b zeta dt) along the
/// flow. Forward: zeta_s = Id and the state starts at xi at time s.
/// Backward: zeta_t = Id and the state ends at xi at time t.
JacobianSolution flow_jacobian(const CoefficientField& c, RoughPathPtr rp, const Vec& xi, FlowDirection dir,
                               double s, double t, const RdeConfig& cfg = {});
JacobianSolution flow_jacobian(const CoefficientField& c, RoughPathPtr rp, const Vec& xi, FlowDirection dir,
                               const RdeConfig& cfg = {});

struct DossSussmannConfig {
    double atol = 1e-8;
    double rtol = 1e-6;
    std::size_t max_cells_per_step = 64;
    double blowup = 1e8;
};

struct DossSussmannDiagnostics {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t field_evaluations = 0;
    std::size_t forced_min_steps = 0;   // accepted at one cell despite the tolerance
};

struct DossSussmannResult {
    RdeSolution solution;
    Mat z;   // transformed ODE state at every grid point
    DossSussmannDiagnostics ds;
};

/// Doss-Sussmann route: solve dz/dt = (grad Psi)(0, t, Phi(0, t, z)) b(t, Phi(0, t, z)),
/// z_0 = xi, then Y_t = Phi(0, t, z_t). Phi is recomputed from time 0 for
/// every field evaluation.
DossSussmannResult doss_sussmann_solve(const CoefficientField& c, RoughPathPtr rp, const Vec& xi,
                                       const DossSussmannConfig& cfg = {});

/// sigma(t, y) = [a0[0] y, ..., a0[e-1] y] + a1(t).
struct LinearDiffusion {
    std::vector<Mat> a0;                    // e matrices, d x d
    std::function<Mat(double)> a1;          // d x e
    std::function<Mat(double)> a1_dot;      // optional, used for metadata only
};

RdeSolution solve_linear_sigma(const std::function<Vec(double, const Vec&)>& b, const LinearDiffusion& sigma,
                               RoughPathPtr rp, const Vec& xi, const RdeConfig& cfg = {});

/// Coefficient field of the linear-diffusion case (exact time increments are
/// not representable here; used for comparisons).
CoefficientField linear_sigma_field(const std::function<Vec(double, const Vec&)>& b, const LinearDiffusion& sigma,
                                    int dim);

/// Picard iteration of the integral equation on the whole driver window,
/// with the compensated sum used for the rough integral.
struct PicardResult {
    Mat y;
    std::vector<double> increments;   // sup |Y^{k+1} - Y^k| per sweep
    double distance_to_stepper = 0.0;
};
PicardResult picard_validate(const CoefficientField& c, RoughPathPtr rp, const Vec& xi, int sweeps);

/// Integral-equation defect |Y_t - xi - int b - int sigma dX| on the grid
/// coarsened by `factor`.
double integral_defect(const CoefficientField& c, const RdeSolution& sol, std::size_t factor = 2);

struct StabilityInputs {
    const CoefficientField* coeff1 = nullptr;
    const CoefficientField* coeff2 = nullptr;
};

struct StabilityReport {
    double lhs = 0.0;            // ||Y, Y'; Y~, Y~'||
    double xi_term = 0.0;
    double rough_term = 0.0;
    double coefficient_term = 0.0;
    double drift_term = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;          // lhs / rhs (0 when both vanish)
};

StabilityReport stability_probe(const RdeSolution& sol1, const RdeSolution& sol2, const StabilityInputs& in);

/// Columnar export: rough path columns followed by Y and Y' columns.
void write_rde_solution(std::ostream& os, const RdeSolution& sol);

}  // namespace mvrds
