#pragma once

// Stepper building blocks shared by the RDE, Doss-Sussmann and mean-field
// solvers.

#include "mvrds/rde.hpp"

namespace mvrds::detail {

/// Vector field z -> sigma(t, z) in R^{n x e} with directional derivative
/// D sigma[v] = sum_j v_j d_j sigma.
class StepSystem {
public:
    virtual ~StepSystem() = default;
    virtual int n() const = 0;
    virtual int e() const = 0;
    /// Evaluate sigma (and whatever the derivative needs) at (t, z).
    virtual void prepare(double t, const Vec& z) = 0;
    virtual const Mat& sigma() const = 0;
    /// Requires a preceding prepare().
    virtual void direction(const Vec& v, Mat& out) const = 0;
    /// sigma(t1, z) - sigma(t0, z) to first order; false when sigma does not
    /// depend on time.
    virtual bool time_increment(double t0, double t1, const Vec& z, Mat& out) = 0;
    virtual bool drift(double t, const Vec& z, Vec& out) = 0;
};

class FieldSystem final : public StepSystem {
public:
    explicit FieldSystem(const CoefficientField& c, bool with_drift = true);
    int n() const override { return n_; }
    int e() const override { return e_; }
    void prepare(double t, const Vec& z) override;
    const Mat& sigma() const override { return s_; }
    void direction(const Vec& v, Mat& out) const override;
    bool time_increment(double t0, double t1, const Vec& z, Mat& out) override;
    bool drift(double t, const Vec& z, Vec& out) override;

private:
    const CoefficientField& c_;
    bool with_drift_;
    int n_, e_;
    Mat s_;
    std::vector<Mat> grad_;
};

/// State (y, vec zeta) with d zeta = (grad sigma)(t, y) zeta dX (+ grad b zeta dt).
class JacobianSystem final : public StepSystem {
public:
    JacobianSystem(const CoefficientField& c, bool with_drift);
    int n() const override { return d_ + d_ * d_; }
    int e() const override { return e_; }
    void prepare(double t, const Vec& z) override;
    const Mat& sigma() const override { return s_; }
    void direction(const Vec& v, Mat& out) const override;
    bool time_increment(double t0, double t1, const Vec& z, Mat& out) override;
    bool drift(double t, const Vec& z, Vec& out) override;

private:
    const CoefficientField& c_;
    bool with_drift_;
    int d_, e_;
    Vec y_;
    Mat zeta_;
    Mat s0_, s_, bj_;
    Vec b0_;
    std::vector<Mat> grad_, hess_, gdt_;
};

class LinearSystem final : public StepSystem {
public:
    LinearSystem(const std::function<Vec(double, const Vec&)>& b, const LinearDiffusion& s, int dim);
    int n() const override { return n_; }
    int e() const override { return e_; }
    void prepare(double t, const Vec& z) override;
    const Mat& sigma() const override { return s_; }
    void direction(const Vec& v, Mat& out) const override;
    bool time_increment(double t0, double t1, const Vec& z, Mat& out) override;
    bool drift(double t, const Vec& z, Vec& out) override;

private:
    const std::function<Vec(double, const Vec&)>& b_;
    const LinearDiffusion& sig_;
    int n_, e_;
    Mat s_;
};

struct StepWorkspace {
    StepWorkspace(int n, int e);
    Mat dir, tmat;
    Vec bvec, dx;
    Mat dxx;
};

/// One Davie step with coefficients frozen at time tc:
/// z += b hd + sigma dx + sum_m D sigma[sigma_m] dxx(m, .) + 1/2 (sigma(t_other) - sigma(tc)) dx.
void davie_step(StepSystem& sys, Vec& z, double tc, double t_other, double hd, const Vec& dx, const Mat& dxx,
                StepWorkspace& w);
/// Cell k of rp traversed forwards (t_k -> t_{k+1}) or backwards.
void step_forward(StepSystem& sys, const RoughPath& rp, std::size_t k, Vec& z, StepWorkspace& w);
void step_backward(StepSystem& sys, const RoughPath& rp, std::size_t k, Vec& z, StepWorkspace& w);

void guard(const Vec& z, double t, double bound);
RoughPathPtr window(const RoughPathPtr& rp, std::size_t i0, std::size_t i1);
/// Rough path on every factor-th grid point with Chen-composed second level.
RoughPath coarsen_path(const RoughPath& rp, std::size_t factor);

}  // namespace mvrds::detail
