#pragma once

#include "mvrds/measure.hpp"
#include "mvrds/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mvrds {

/// Population covariance, symmetrised exactly.
Mat covariance(const EmpiricalMeasure& mu);

/// Symmetric square root of a PSD matrix. Eigenvalues down to
/// -1e-12 * trace are clipped to 0; anything more negative is a DomainError.
Mat psd_sqrt(const Mat& a);

/// Statistics of a frozen law, computed once and shared by every particle.
struct LawContext {
    Vec mean;
    Mat cov;
    Mat root;          // model-specific cached matrix (EKS: sqrt(2 C))
    double m2 = 0.0;   // second moment
    double mk = 0.0;   // moment of order kappa of the owning model
    std::size_t size = 0;
};

/// Constants declared for the structural assumptions on (b, sigma).
struct ModelConstants {
    double kappa = 2.0;
    /// Monotone envelope F(kappa, M_kappa(mu), M_kappa(nu)).
    std::function<double(double, double, double)> F;
    /// Coercivity / growth constant.
    double C = 0.0;
    /// Modulus G with G(0) = 0.
    std::function<double(double)> G;
};

struct MeanFieldModel {
    std::string name;
    int dim = 0;
    int noise_dim = 0;

    std::function<void(LawContext&)> prepare;  // optional
    std::function<void(const Vec&, const LawContext&, Eigen::Ref<Vec>)> drift;
    std::function<void(const Vec&, const LawContext&, Eigen::Ref<Mat>)> diffusion;        // dim x noise_dim
    std::function<void(const Vec&, const LawContext&, Eigen::Ref<Mat>)> drift_jacobian;   // dim x dim
    std::function<void(const Vec&, const LawContext&, std::vector<Mat>&)> diffusion_grad;  // dim entries d_j sigma
    std::function<void(const Vec&, const LawContext&, std::vector<Mat>&)> diffusion_hess;  // dim^2 entries, j*dim+k

    bool diffusion_state_independent = false;
    bool diffusion_affine = false;
    ModelConstants constants;

    LawContext law(const EmpiricalMeasure& mu) const;
    Vec eval_drift(const Vec& y, const LawContext& law) const;
    Mat eval_diffusion(const Vec& y, const LawContext& law) const;
    Mat eval_drift_jacobian(const Vec& y, const LawContext& law) const;
    std::vector<Mat> eval_diffusion_grad(const Vec& y, const LawContext& law) const;
    std::vector<Mat> eval_diffusion_hess(const Vec& y, const LawContext& law) const;
    /// ((grad sigma) sigma)_i = sum_{j,k} sigma_jk d_j sigma_ik.
    Vec ito_correction(const Vec& y, const LawContext& law) const;
};

// ---------------------------------------------------------------- potentials

struct Potential {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> grad;
    std::function<Mat(const Vec&)> hess;
    /// Third derivative as dim slices: slice k holds d_k D^2 V.
    std::function<std::vector<Mat>(const Vec&)> third;
    /// Bound on |grad V(0)| + |D^2 V| + |D^3 V|.
    double bound = 0.0;
};

/// V(y) = 1/2 y^T Sigma^{-1} y.
Potential gaussian_potential(const Mat& sigma);
/// Gaussian potential plus sum_i w_i log cosh(y_i - c_i).
Potential log_cosh_potential(const Mat& sigma, const Vec& weights, const Vec& centres);

// ---------------------------------------------------------------- models

/// b = -C(mu) grad V(y), sigma = sqrt(2 C(mu)).
MeanFieldModel eks_model(Potential v, int dim, std::string name = "eks-custom");
MeanFieldModel eks_gaussian_model(const Mat& sigma);

/// Matrix sigma_0(y) for Maxwell molecules in d = 3.
Mat landau_sigma0(const Vec& y);
/// b = -2y + 2 m(mu), sigma = sigma_0(y) - sigma_0(m(mu)).
MeanFieldModel landau_maxwell_model();

MeanFieldModel zero_model(int dim);
/// b = 0, sigma = Identity.
MeanFieldModel brownian_model(int dim);
/// b = -k y, sigma = s Identity.
MeanFieldModel linear_model(int dim, double k, double s);

struct EksCoefficients {
    Vec b;
    Mat sigma;
};
EksCoefficients eks_coefficients(const MeanFieldModel& eks, const Vec& y, const EmpiricalMeasure& mu);
struct LandauCoefficients {
    Vec b;
    Mat sigma;
};
LandauCoefficients landau_coefficients(const Vec& y, const EmpiricalMeasure& mu);

/// Registry: "eks-gaussian", "eks-custom", "landau-maxwell", "brownian", "zero", "linear".
struct ModelParameters {
    int dim = 2;
    std::vector<double> sigma_diag{1.0, 4.0};    // eks: prior covariance diagonal
    std::vector<double> logcosh_weights;         // eks-custom
    std::vector<double> logcosh_centres;         // eks-custom
    double rate = 1.0;                           // linear: k
    double noise = 1.0;                          // linear: s
};
MeanFieldModel make_model(const std::string& name, const ModelParameters& params);
std::vector<std::string> model_names();

// ---------------------------------------------------------------- audit

struct AuditSample {
    Vec x;
    Vec y;
    EmpiricalMeasure mu;
    EmpiricalMeasure nu;
};

struct AuditCheck {
    std::string name;
    std::size_t evaluations = 0;
    std::size_t violations = 0;
    double worst_ratio = 0.0;   // max lhs / rhs
};

struct AuditReport {
    std::vector<AuditCheck> checks;
    bool ok = true;
    const AuditCheck& check(const std::string& name) const;
};

/// Evaluates the Lipschitz, coercivity/growth, derivative-bound and
/// measurability inequalities on the corpus with the declared constants.
/// Distances between laws use the dp_bracket upper bound.
AuditReport assumption_audit(const MeanFieldModel& model, const std::vector<AuditSample>& corpus);

}  // namespace mvrds
