#pragma once

#include "mvrds/rough_path.hpp"

#include <functional>

namespace mvrds {

/// Controlled path (Y, Y') over a rough path X: Y takes values in R^m and
/// Y' in the m x d matrices, stored column-wise per grid point.
class ControlledPath {
public:
    /// y: m x (M+1); yprime: (m*d) x (M+1), column i = vec(Y'_i) column-major.
    ControlledPath(RoughPathPtr base, Mat y, Mat yprime);

    const RoughPath& base() const { return *base_; }
    RoughPathPtr base_ptr() const { return base_; }
    int value_dim() const { return static_cast<int>(y_.rows()); }
    int noise_dim() const { return base_->dim(); }
    std::size_t size() const { return static_cast<std::size_t>(y_.cols()); }

    const Mat& y() const { return y_; }
    const Mat& yprime_raw() const { return yp_; }
    Eigen::Ref<const Vec> value(std::size_t i) const { return y_.col(static_cast<long>(i)); }
    Mat derivative(std::size_t i) const;  // m x d

    ControlledPath scaled(double lambda) const;

private:
    RoughPathPtr base_;
    Mat y_;
    Mat yp_;
};

/// R^Y_{s,t} = Y_{s,t} - Y'_s X_{s,t}.
Vec gubinelli_remainder(const ControlledPath& cp, double s, double t);
Vec gubinelli_remainder_index(const ControlledPath& cp, std::size_t i, std::size_t j);

struct ControlledNorms {
    double derivative_holder = 0.0;   // ||Y'||_alpha
    double remainder_holder = 0.0;    // ||R^Y||_{2 alpha}
    double seminorm = 0.0;            // sum of the two
    double full_norm = 0.0;           // |Y_0| + |Y'_0| + seminorm
    bool subsampled = false;
};

ControlledNorms controlled_norms(const ControlledPath& cp);
ControlledNorms controlled_norms(const ControlledPath& cp, std::size_t i0, std::size_t i1);
/// ||Y'||_alpha + ||R^Y||_{2 alpha} (no initial values).
double controlled_seminorm(const ControlledPath& cp);
/// |Y_0| + |Y'_0| + controlled_seminorm.
double controlled_full_norm(const ControlledPath& cp);

/// ||Y' - Y~'||_alpha + ||R^Y - R^Y~||_{2 alpha}; the two paths may live on
/// different rough paths over the same grid.
double controlled_distance(const ControlledPath& cp, const ControlledPath& cq);

/// Compensated Riemann sum  sum (Y_u X_{u,v} + Y'_u XX_{u,v}) over the cells of
/// [s, t]. Y is read as a k x d matrix (row-major in the m = k d entries),
/// the result has k entries.
Vec rough_integral(const ControlledPath& cp, double s, double t);
Vec rough_integral_index(const ControlledPath& cp, std::size_t i, std::size_t j);
/// Running integral I_j = int_{t_0}^{t_j} (k x (M+1)).
Mat rough_integral_path(const ControlledPath& cp);

/// Standard sewing constant 2^{3a} / (1 - 2^{1-3a}).
double sewing_constant(double alpha);

struct LocalErrorCertificate {
    double error = 0.0;      // |int_s^t Y dX - Y_s X_{s,t} - Y'_s XX_{s,t}|
    double bound = 0.0;      // C (|X| |R| + |XX| |Y'|) |t - s|^{3 alpha}
    double constant = 0.0;
    bool holds = false;
};

LocalErrorCertificate local_error_certificate(const ControlledPath& cp, double s, double t);
LocalErrorCertificate local_error_certificate_index(const ControlledPath& cp, std::size_t i, std::size_t j);

/// Time-dependent map f(t, y): R x R^m -> R^r with analytic derivatives.
struct TimeDependentMap {
    int out_dim = 0;
    std::function<Vec(double, const Vec&)> value;
    std::function<Mat(double, const Vec&)> jacobian;          // r x m
    std::function<Vec(double, const Vec&)> time_derivative;   // optional
    std::function<std::vector<Mat>(double, const Vec&)> hessian;  // optional, r entries of m x m
};

/// (f(t, Y_t), grad f(t, Y_t) Y'_t). Throws DomainError when f or its
/// derivative is not finite at a visited point.
ControlledPath compose(const TimeDependentMap& f, const ControlledPath& cp);

/// Pointwise product of two scalar controlled paths on the same base:
/// (g h, g' h + g h').
ControlledPath controlled_product(const ControlledPath& g, const ControlledPath& h);

}  // namespace mvrds
