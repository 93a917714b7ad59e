#pragma once

#include "mvrds/types.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace mvrds {

/// Weighted particle cloud sum_i w_i delta_{x_i} in R^d.
class EmpiricalMeasure {
public:
    /// atoms: d x N; weights: N nonnegative entries summing to 1 within 1e-12.
    EmpiricalMeasure(Mat atoms, Vec weights);
    static EmpiricalMeasure uniform(Mat atoms);
    static EmpiricalMeasure dirac(const Vec& x);

    int dim() const { return static_cast<int>(x_.rows()); }
    std::size_t size() const { return static_cast<std::size_t>(x_.cols()); }
    const Mat& atoms() const { return x_; }
    const Vec& weights() const { return w_; }
    Eigen::Ref<const Vec> atom(std::size_t i) const { return x_.col(static_cast<long>(i)); }
    double weight(std::size_t i) const { return w_(static_cast<long>(i)); }
    bool has_uniform_weights() const { return uniform_; }

    Vec mean() const;
    /// Population covariance sum_i w_i (x_i - m)(x_i - m)^T.
    Mat covariance() const;
    double integrate(const std::function<double(const Vec&)>& f) const;

    EmpiricalMeasure translated(const Vec& v) const;
    EmpiricalMeasure dilated(double lambda) const;

private:
    Mat x_;
    Vec w_;
    bool uniform_ = false;
};

/// M_p(mu) = sum_i w_i |x_i|^p.
double moment(const EmpiricalMeasure& mu, double p);

struct CouplingEntry {
    std::size_t i;
    std::size_t j;
    double mass;
};

struct TransportConfig {
    std::size_t exact_limit = 512;        // Hungarian up to this many atoms
    std::size_t dense_cost_limit = 2048;  // auction keeps the cost matrix below this size
    double sinkhorn_epsilon = 1e-3;       // relative to the largest cost
    int sinkhorn_iterations = 20000;
    double sinkhorn_tolerance = 1e-10;    // marginal violation before rounding
    double auction_relative_gap = 1e-9;   // final epsilon, relative to the largest cost
};

struct WassersteinResult {
    double value = 0.0;        // d_p
    bool exact = true;
    std::string method;        // identical, dirac, quantile, hungarian, auction, sinkhorn
    double duality_gap = 0.0;  // upper - lower bound on d_p^p (0 when exact)
    std::vector<CouplingEntry> coupling;
};

/// p-Wasserstein distance. Exact in d = 1 (quantile coupling) and for
/// equal-size uniform clouds up to `exact_limit` atoms (assignment problem);
/// otherwise auction or entropic approximation with a reported gap.
WassersteinResult wasserstein_p(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p,
                                const TransportConfig& cfg = {});
double wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p);

/// Minimum-cost perfect matching for a square cost matrix; returns the
/// column assigned to each row.
std::vector<std::size_t> solve_assignment(const Mat& cost);

// ---------------------------------------------------------------- test functions

struct TestFunction {
    std::string name;
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> grad;
    std::function<Mat(const Vec&)> hess;
};

struct CertificateReport {
    bool ok = true;
    std::size_t samples = 0;
    std::size_t violations = 0;
    double worst_ratio = 0.0;   // max of |grad| / (1 + |y|^{p-1}) and ||D^2|| / (1 + |y|^{p-1})
    std::string worst_function;
};

/// Finite subset of the class of C^2 functions with |grad phi|, ||D^2 phi||
/// bounded by 1 + |y|^{p-1}.
class TestFunctionFamily {
public:
    TestFunctionFamily(int dim, double p) : dim_(dim), p_(p) {}

    int dim() const { return dim_; }
    double p() const { return p_; }
    const std::vector<TestFunction>& functions() const { return fns_; }
    void add(TestFunction f) { fns_.push_back(std::move(f)); }

    /// Coordinates, |y|^p / p (smoothed for p < 2, scaled for p > 3), bumps
    /// at data-driven centres and soft-absolute / linear witnesses along the
    /// directions separating the two clouds.
    static TestFunctionFamily standard(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p,
                                       std::size_t max_centres = 16);
    /// Sampled check on the ball of radius `radius` (at least `samples`
    /// random points plus the origin).
    CertificateReport certify(double radius, std::size_t samples = 1000, std::uint64_t seed = 1) const;

private:
    int dim_;
    double p_;
    std::vector<TestFunction> fns_;
};

TestFunction coordinate_function(int dim, int i, double sign = 1.0);
TestFunction power_function(int dim, double p);
TestFunction bump_function(const Vec& centre, double radius, double height);
/// Largest admissible bump height for radius r under the unit bounds
/// |grad| <= 1, ||D^2|| <= 1.
double bump_height(double radius);
TestFunction soft_abs_function(const Vec& centre, const Vec& direction);
TestFunction linear_function(const Vec& direction);

struct DpBracket {
    double lower = 0.0;
    double upper = 0.0;
    bool approximate = false;   // coupling for the upper bound was not optimal
    double wasserstein = 0.0;   // d_p of the coupling used for the upper bound
    std::string witness;        // test function attaining the lower bound
};

/// lower = max_phi |int phi d(mu - nu)| over the family; upper = the
/// mean-value coupling bound sum pi (1 + c_p (|x|^{p-1} + |x - y|^{p-1})) |x - y|
/// with c_p = max(1, 2^{p-2}).
DpBracket dp_bracket(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p, const TestFunctionFamily& fam,
                     const TransportConfig& cfg = {});
DpBracket dp_bracket(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p);

/// d_1(mu, nu), an upper bound for the bounded-Lipschitz metric.
double flat_metric_bound(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);
/// Lower estimate of the bounded-Lipschitz metric from functions with
/// |phi| <= 1 and |grad phi| <= 1.
double flat_metric_lower(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

struct TopologyProbeEntry {
    double wasserstein = 0.0;
    DpBracket bracket;
    bool wasserstein_small = false;
    bool bracket_small = false;
};

struct TopologyProbeReport {
    std::vector<TopologyProbeEntry> entries;
    bool consistent = true;   // small together in every entry
};

TopologyProbeReport topology_equivalence_probe(const std::vector<EmpiricalMeasure>& sequence,
                                               const EmpiricalMeasure& limit, double p, double tol_wasserstein,
                                               double tol_bracket);

/// Rows "weight x_1 .. x_d".
void write_measure(std::ostream& os, const EmpiricalMeasure& mu);
EmpiricalMeasure read_measure(std::istream& is);

}  // namespace mvrds
