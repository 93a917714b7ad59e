#include "mvrds/controlled.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace mvrds {

ControlledPath::ControlledPath(RoughPathPtr base, Mat y, Mat yprime)
    : base_(std::move(base)), y_(std::move(y)), yp_(std::move(yprime)) {
    if (!base_) throw std::invalid_argument("controlled path needs a base rough path");
    if (y_.cols() != static_cast<long>(base_->size()) || yp_.cols() != y_.cols())
        throw DomainError("controlled path grid differs from the base grid");
    if (yp_.rows() != y_.rows() * base_->dim()) throw std::invalid_argument("Gubinelli derivative has the wrong shape");
}

Mat ControlledPath::derivative(std::size_t i) const {
    return Eigen::Map<const Mat>(yp_.col(static_cast<long>(i)).data(), y_.rows(), base_->dim());
}

ControlledPath ControlledPath::scaled(double lambda) const { return ControlledPath(base_, lambda * y_, lambda * yp_); }

// ---------------------------------------------------------------- remainders

namespace {

// R_{i,j} into `out` (m entries) without allocation.
inline void remainder_into(const Mat& y, const Mat& yp, const Mat& x, std::size_t i, std::size_t j, double* out) {
    const long m = y.rows();
    const long d = x.rows();
    const long li = static_cast<long>(i), lj = static_cast<long>(j);
    for (long a = 0; a < m; ++a) {
        double v = y(a, lj) - y(a, li);
        for (long l = 0; l < d; ++l) v -= yp(a + l * m, li) * (x(l, lj) - x(l, li));
        out[a] = v;
    }
}

}  // namespace

Vec gubinelli_remainder_index(const ControlledPath& cp, std::size_t i, std::size_t j) {
    Vec r(cp.value_dim());
    remainder_into(cp.y(), cp.yprime_raw(), cp.base().values(), i, j, r.data());
    return r;
}

Vec gubinelli_remainder(const ControlledPath& cp, double s, double t) {
    const auto& g = cp.base().grid();
    return gubinelli_remainder_index(cp, g.index_of(s), g.index_of(t));
}

// ---------------------------------------------------------------- norms

ControlledNorms controlled_norms(const ControlledPath& cp, std::size_t i0, std::size_t i1) {
    if (i1 <= i0 || i1 >= cp.size()) throw DomainError("invalid window for controlled_norms");
    const auto& g = cp.base().grid();
    const double alpha = cp.base().alpha();
    const Mat& y = cp.y();
    const Mat& yp = cp.yprime_raw();
    const Mat& x = cp.base().values();
    std::vector<double> r(static_cast<std::size_t>(cp.value_dim()));
    double nd = 0.0, nr = 0.0;
    for_each_pair(i1 - i0, [&](std::size_t a, std::size_t b) {
        const std::size_t i = i0 + a, j = i0 + b;
        const double dt = g[j] - g[i];
        const double dn = (yp.col(static_cast<long>(j)) - yp.col(static_cast<long>(i))).norm();
        remainder_into(y, yp, x, i, j, r.data());
        double rn = 0.0;
        for (double v : r) rn += v * v;
        nd = std::max(nd, dn / std::pow(dt, alpha));
        nr = std::max(nr, std::sqrt(rn) / std::pow(dt, 2.0 * alpha));
    });
    ControlledNorms out;
    out.derivative_holder = nd;
    out.remainder_holder = nr;
    out.seminorm = nd + nr;
    out.full_norm = y.col(static_cast<long>(i0)).norm() + yp.col(static_cast<long>(i0)).norm() + out.seminorm;
    out.subsampled = pairs_subsampled(i1 - i0);
    return out;
}

ControlledNorms controlled_norms(const ControlledPath& cp) { return controlled_norms(cp, 0, cp.size() - 1); }

double controlled_seminorm(const ControlledPath& cp) { return controlled_norms(cp).seminorm; }
double controlled_full_norm(const ControlledPath& cp) { return controlled_norms(cp).full_norm; }

double controlled_distance(const ControlledPath& cp, const ControlledPath& cq) {
    if (!cp.base().grid().same_as(cq.base().grid())) throw DomainError("controlled_distance needs identical grids");
    if (cp.value_dim() != cq.value_dim() || cp.noise_dim() != cq.noise_dim())
        throw DomainError("controlled_distance needs matching dimensions");
    const auto& g = cp.base().grid();
    const double alpha = cp.base().alpha();
    const std::size_t m = static_cast<std::size_t>(cp.value_dim());
    std::vector<double> r1(m), r2(m);
    double nd = 0.0, nr = 0.0;
    const Mat& yp1 = cp.yprime_raw();
    const Mat& yp2 = cq.yprime_raw();
    for_each_pair(g.cells(), [&](std::size_t i, std::size_t j) {
        const double dt = g[j] - g[i];
        const long li = static_cast<long>(i), lj = static_cast<long>(j);
        const double dn = ((yp1.col(lj) - yp1.col(li)) - (yp2.col(lj) - yp2.col(li))).norm();
        remainder_into(cp.y(), yp1, cp.base().values(), i, j, r1.data());
        remainder_into(cq.y(), yp2, cq.base().values(), i, j, r2.data());
        double rn = 0.0;
        for (std::size_t a = 0; a < m; ++a) rn += (r1[a] - r2[a]) * (r1[a] - r2[a]);
        nd = std::max(nd, dn / std::pow(dt, alpha));
        nr = std::max(nr, std::sqrt(rn) / std::pow(dt, 2.0 * alpha));
    });
    return nd + nr;
}

// ---------------------------------------------------------------- integral

namespace {

long integral_rows(const ControlledPath& cp) {
    const long m = cp.value_dim();
    const long d = cp.noise_dim();
    if (m % d != 0) throw DomainError(fmt::format("integrand dimension {} is not a multiple of the noise dimension {}", m, d));
    return m / d;
}

// Adds Y_u X_{u,v} + Y'_u XX_{u,v} for cell k to acc (k entries).
inline void add_cell(const ControlledPath& cp, std::size_t k, long rows, double* acc) {
    const Mat& y = cp.y();
    const Mat& yp = cp.yprime_raw();
    const Mat& x = cp.base().values();
    const Mat& xx = cp.base().cell_second_raw();
    const long d = cp.noise_dim();
    const long m = cp.value_dim();
    const long lk = static_cast<long>(k);
    for (long a = 0; a < rows; ++a) {
        double v = 0.0;
        for (long j = 0; j < d; ++j) {
            const long row = a * d + j;
            v += y(row, lk) * (x(j, lk + 1) - x(j, lk));
            for (long l = 0; l < d; ++l) v += yp(row + l * m, lk) * xx(l + j * d, lk);
        }
        acc[a] += v;
    }
}

}  // namespace

Vec rough_integral_index(const ControlledPath& cp, std::size_t i, std::size_t j) {
    if (i > j) throw DomainError("rough_integral over a reversed interval");
    if (j >= cp.size()) throw DomainError("rough_integral interval outside the grid");
    const long rows = integral_rows(cp);
    Vec acc = Vec::Zero(rows);
    for (std::size_t k = i; k < j; ++k) add_cell(cp, k, rows, acc.data());
    return acc;
}

Vec rough_integral(const ControlledPath& cp, double s, double t) {
    const auto& g = cp.base().grid();
    const auto i = g.index_of(s), j = g.index_of(t);
    if (i > j) throw DomainError("rough_integral over a reversed interval");
    return rough_integral_index(cp, i, j);
}

Mat rough_integral_path(const ControlledPath& cp) {
    const long rows = integral_rows(cp);
    Mat out = Mat::Zero(rows, static_cast<long>(cp.size()));
    Vec acc = Vec::Zero(rows);
    for (std::size_t k = 0; k + 1 < cp.size(); ++k) {
        add_cell(cp, k, rows, acc.data());
        out.col(static_cast<long>(k) + 1) = acc;
    }
    return out;
}

double sewing_constant(double alpha) {
    return std::pow(2.0, 3.0 * alpha) / (1.0 - std::pow(2.0, 1.0 - 3.0 * alpha));
}

LocalErrorCertificate local_error_certificate_index(const ControlledPath& cp, std::size_t i, std::size_t j) {
    if (!(i < j)) throw DomainError("local_error_certificate needs s < t");
    const RoughPath& rp = cp.base();
    const long rows = integral_rows(cp);
    const long d = cp.noise_dim();
    const long m = cp.value_dim();
    const Vec integral = rough_integral_index(cp, i, j);
    const Vec dx = rp.increment(i, j);
    const Mat dxx = rp.second(i, j);
    const long li = static_cast<long>(i);
    Vec germ = Vec::Zero(rows);
    for (long a = 0; a < rows; ++a)
        for (long q = 0; q < d; ++q) {
            const long row = a * d + q;
            germ(a) += cp.y()(row, li) * dx(q);
            for (long l = 0; l < d; ++l) germ(a) += cp.yprime_raw()(row + l * m, li) * dxx(l, q);
        }
    const HolderNorms hn = holder_norms(rp, i, j);
    const ControlledNorms cn = controlled_norms(cp, i, j);
    LocalErrorCertificate c;
    c.constant = sewing_constant(rp.alpha());
    c.error = (integral - germ).norm();
    const double dt = rp.grid()[j] - rp.grid()[i];
    c.bound = c.constant * (hn.norm_x * cn.remainder_holder + hn.norm_xx * cn.derivative_holder) *
              std::pow(dt, 3.0 * rp.alpha());
    c.holds = c.error <= c.bound * (1.0 + 1e-12) + 1e-14;
    return c;
}

LocalErrorCertificate local_error_certificate(const ControlledPath& cp, double s, double t) {
    const auto& g = cp.base().grid();
    return local_error_certificate_index(cp, g.index_of(s), g.index_of(t));
}

// ---------------------------------------------------------------- compose

ControlledPath compose(const TimeDependentMap& f, const ControlledPath& cp) {
    const auto& g = cp.base().grid();
    const long n = static_cast<long>(cp.size());
    const long d = cp.noise_dim();
    const long r = f.out_dim;
    if (r < 1) throw std::invalid_argument("compose: output dimension must be positive");
    Mat y(r, n), yp(r * d, n);
    for (long i = 0; i < n; ++i) {
        const double t = g[static_cast<std::size_t>(i)];
        const Vec yi = cp.y().col(i);
        const Vec v = f.value(t, yi);
        const Mat jac = f.jacobian(t, yi);
        if (v.size() != r || jac.rows() != r || jac.cols() != cp.value_dim())
            throw std::invalid_argument("compose: map returned values of the wrong shape");
        if (!v.allFinite() || !jac.allFinite())
            throw DomainError(fmt::format("compose: map not differentiable at grid point t = {}", t));
        y.col(i) = v;
        const Mat dp = jac * cp.derivative(static_cast<std::size_t>(i));
        yp.col(i) = Eigen::Map<const Vec>(dp.data(), r * d);
    }
    return ControlledPath(cp.base_ptr(), std::move(y), std::move(yp));
}

ControlledPath controlled_product(const ControlledPath& g, const ControlledPath& h) {
    if (g.value_dim() != 1 || h.value_dim() != 1) throw std::invalid_argument("controlled_product needs scalar paths");
    if (g.base_ptr() != h.base_ptr() && !g.base().grid().same_as(h.base().grid()))
        throw DomainError("controlled_product needs a common base");
    const Mat y = g.y().cwiseProduct(h.y());
    Mat yp(g.yprime_raw().rows(), y.cols());
    for (long i = 0; i < y.cols(); ++i)
        yp.col(i) = g.yprime_raw().col(i) * h.y()(0, i) + g.y()(0, i) * h.yprime_raw().col(i);
    return ControlledPath(g.base_ptr(), y, yp);
}

}  // namespace mvrds
