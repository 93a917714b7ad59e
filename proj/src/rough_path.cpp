#include "mvrds/rough_path.hpp"

#include "mvrds/brownian.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>

namespace mvrds {

namespace {
constexpr std::uint32_t kNoisePurpose = 1;
}

HolderExponent::HolderExponent(double alpha) : alpha_(alpha) {
    if (!(alpha > 1.0 / 3.0 && alpha < 0.5))
        throw std::invalid_argument(fmt::format("Hoelder exponent {} outside (1/3, 1/2)", alpha));
}

std::string to_string(LiftMode m) {
    switch (m) {
        case LiftMode::Ito: return "ito";
        case LiftMode::Stratonovich: return "stratonovich";
        case LiftMode::Dyadic: return "dyadic";
        case LiftMode::Smooth: return "smooth";
        case LiftMode::Custom: return "custom";
    }
    return "custom";
}

LiftMode lift_mode_from_string(const std::string& s) {
    if (s == "ito") return LiftMode::Ito;
    if (s == "stratonovich") return LiftMode::Stratonovich;
    if (s == "dyadic") return LiftMode::Dyadic;
    if (s == "smooth") return LiftMode::Smooth;
    if (s == "custom") return LiftMode::Custom;
    throw std::invalid_argument("unknown lift mode '" + s + "'");
}

// ---------------------------------------------------------------- RoughPath

RoughPath::RoughPath(TimeGrid grid, Mat values, Mat cell_second, HolderExponent alpha, RoughPathInfo info)
    : grid_(std::move(grid)), x_(std::move(values)), xx_cells_(std::move(cell_second)), alpha_(alpha), info_(info) {
    const long d = x_.rows();
    if (d < 1) throw std::invalid_argument("rough path dimension must be positive");
    if (x_.cols() != static_cast<long>(grid_.size()))
        throw std::invalid_argument("rough path values do not match the grid");
    if (xx_cells_.rows() != d * d || xx_cells_.cols() != static_cast<long>(grid_.cells()))
        throw std::invalid_argument("rough path second level does not match the grid");
    const long n = x_.cols();
    prefix_.setZero(d * d, n);
    for (long k = 0; k + 1 < n; ++k) {
        for (long c = 0; c < d; ++c) {
            const double dxc = x_(c, k + 1) - x_(c, k);
            for (long r = 0; r < d; ++r) {
                const double a = x_(r, k) - x_(r, 0);
                prefix_(r + c * d, k + 1) = prefix_(r + c * d, k) + xx_cells_(r + c * d, k) + a * dxc;
            }
        }
    }
}

Vec RoughPath::increment(std::size_t i, std::size_t j) const {
    return x_.col(static_cast<long>(j)) - x_.col(static_cast<long>(i));
}

Mat RoughPath::second(std::size_t i, std::size_t j) const {
    if (i > j) throw DomainError("second level requested for a reversed pair");
    const long d = x_.rows();
    Mat out(d, d);
    const long li = static_cast<long>(i), lj = static_cast<long>(j);
    for (long c = 0; c < d; ++c) {
        const double b = x_(c, lj) - x_(c, li);
        for (long r = 0; r < d; ++r) {
            const double a = x_(r, li) - x_(r, 0);
            out(r, c) = prefix_(r + c * d, lj) - prefix_(r + c * d, li) - a * b;
        }
    }
    return out;
}

Mat RoughPath::cell_second(std::size_t k) const {
    const long d = x_.rows();
    return Eigen::Map<const Mat>(xx_cells_.col(static_cast<long>(k)).data(), d, d);
}

void RoughPath::cell(std::size_t k, Eigen::Ref<Vec> dx, Eigen::Ref<Mat> dxx) const {
    const long d = x_.rows();
    const long lk = static_cast<long>(k);
    dx = x_.col(lk + 1) - x_.col(lk);
    dxx = Eigen::Map<const Mat>(xx_cells_.col(lk).data(), d, d);
}

Vec RoughPath::increment_at(double s, double t) const { return increment(grid_.index_of(s), grid_.index_of(t)); }

Mat RoughPath::second_at(double s, double t) const {
    const auto i = grid_.index_of(s), j = grid_.index_of(t);
    if (i > j) throw DomainError("second level requested for a reversed interval");
    return second(i, j);
}

// ---------------------------------------------------------------- PairTable

PairTable::PairTable(TimeGrid grid, Mat values, std::vector<Mat> pairs)
    : grid_(std::move(grid)), x_(std::move(values)), pairs_(std::move(pairs)) {
    const std::size_t n = grid_.size();
    if (pairs_.size() != n * (n + 1) / 2) throw std::invalid_argument("pair table has the wrong number of entries");
}

PairTable PairTable::materialize(const RoughPath& rp) {
    const std::size_t n = rp.size();
    std::vector<Mat> pairs;
    pairs.reserve(n * (n + 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) pairs.push_back(rp.second(i, j));
    return PairTable(rp.grid(), rp.values(), std::move(pairs));
}

std::size_t PairTable::index(std::size_t i, std::size_t j) const {
    const std::size_t n = grid_.size();
    if (i > j || j >= n) throw DomainError("invalid pair index");
    return i * n - i * (i - 1) / 2 + (j - i);
}

Mat& PairTable::at(std::size_t i, std::size_t j) { return pairs_[index(i, j)]; }
const Mat& PairTable::at(std::size_t i, std::size_t j) const { return pairs_[index(i, j)]; }

// ---------------------------------------------------------------- NoisePath

NoisePath::NoisePath(std::uint64_t seed, TimeGrid fine_grid, Mat values, double horizon, int fine_level)
    : seed_(seed), grid_(std::move(fine_grid)), w_(std::move(values)), horizon_(horizon), fine_level_(fine_level) {
    if (w_.cols() != static_cast<long>(grid_.size())) throw std::invalid_argument("noise values do not match the grid");
}

NoisePath NoisePath::generate(std::uint64_t seed, int dim, double horizon, int fine_level, std::uint64_t stream) {
    if (fine_level < 1 || fine_level > LevyBrownian::kMaxLevel) throw std::invalid_argument("fine level out of range");
    const std::uint64_t half = 1ull << fine_level;
    const LevyBrownian pos(seed, stream, dim, horizon, kNoisePurpose, 0);
    const LevyBrownian neg(seed, stream, dim, horizon, kNoisePurpose, 1);
    const Mat wp = pos.fill(fine_level, 0, half);
    const Mat wn = neg.fill(fine_level, 0, half);
    Mat w(dim, static_cast<long>(2 * half + 1));
    for (std::uint64_t i = 0; i < half; ++i) w.col(static_cast<long>(i)) = wn.col(static_cast<long>(half - i));
    for (std::uint64_t i = 0; i <= half; ++i) w.col(static_cast<long>(half + i)) = wp.col(static_cast<long>(i));
    const double h = std::ldexp(horizon, -fine_level);
    return NoisePath(seed, TimeGrid::uniform(-horizon, h, 2 * half), std::move(w), horizon, fine_level);
}

Mat NoisePath::increments() const {
    return w_.rightCols(w_.cols() - 1) - w_.leftCols(w_.cols() - 1);
}

std::size_t NoisePath::zero_index() const { return grid_.index_of(0.0); }

NoisePath NoisePath::perturbed(const std::function<Vec(double)>& g, double eps) const {
    Mat w = w_;
    for (std::size_t i = 0; i < grid_.size(); ++i) w.col(static_cast<long>(i)) += eps * g(grid_[i]);
    return NoisePath(seed_, grid_, std::move(w), horizon_, fine_level_);
}

TimeGrid dyadic_grid(double a, double b, double horizon, int level) {
    const double h = std::ldexp(horizon, -level);
    const double cells = (b - a) / h;
    const long m = std::lround(cells);
    if (m < 1 || std::abs(cells - static_cast<double>(m)) > 1e-9) throw DomainError("interval is not a union of dyadic cells");
    return TimeGrid::uniform(a, h, static_cast<std::size_t>(m));
}

// ---------------------------------------------------------------- Chen

Mat chen_defect_index(const RoughPath& rp, std::size_t i, std::size_t k, std::size_t j) {
    if (!(i <= k && k <= j)) throw DomainError("chen_defect needs s <= u <= t");
    const Vec a = rp.increment(i, k);
    const Vec b = rp.increment(k, j);
    return rp.second(i, j) - rp.second(i, k) - rp.second(k, j) - a * b.transpose();
}

Mat chen_defect(const RoughPath& rp, double s, double u, double t) {
    const auto& g = rp.grid();
    return chen_defect_index(rp, g.index_of(s), g.index_of(u), g.index_of(t));
}

Mat chen_defect(const PairTable& rp, double s, double u, double t) {
    const auto& g = rp.grid();
    const auto i = g.index_of(s), k = g.index_of(u), j = g.index_of(t);
    if (!(i <= k && k <= j)) throw DomainError("chen_defect needs s <= u <= t");
    const Vec a = rp.values().col(static_cast<long>(k)) - rp.values().col(static_cast<long>(i));
    const Vec b = rp.values().col(static_cast<long>(j)) - rp.values().col(static_cast<long>(k));
    return rp.at(i, j) - rp.at(i, k) - rp.at(k, j) - a * b.transpose();
}

// ---------------------------------------------------------------- norms

bool pairs_subsampled(std::size_t cells) { return cells > kFullPairLimit; }

void for_each_pair(std::size_t cells, const std::function<void(std::size_t, std::size_t)>& f) {
    if (!pairs_subsampled(cells)) {
        for (std::size_t i = 0; i < cells; ++i)
            for (std::size_t j = i + 1; j <= cells; ++j) f(i, j);
        return;
    }
    for (std::size_t step = 1; step <= cells; step *= 2)
        for (std::size_t i = 0; i + step <= cells; ++i) f(i, i + step);
}

namespace {

// Squared norms of X_{i,j} and XX_{i,j} (or of their differences between two
// paths on one grid), evaluated from the prefix table without temporaries.
inline void pair_sq_norms(const RoughPath& a, const RoughPath* b, std::size_t i, std::size_t j, double& n1,
                          double& n2) {
    const long d = a.dim();
    const long li = static_cast<long>(i), lj = static_cast<long>(j);
    const Mat& xa = a.values();
    const Mat& pa = a.prefix();
    n1 = 0.0;
    n2 = 0.0;
    if (b == nullptr) {
        for (long c = 0; c < d; ++c) {
            const double inc = xa(c, lj) - xa(c, li);
            n1 += inc * inc;
            for (long r = 0; r < d; ++r) {
                const double v = pa(r + c * d, lj) - pa(r + c * d, li) - (xa(r, li) - xa(r, 0)) * inc;
                n2 += v * v;
            }
        }
        return;
    }
    const Mat& xb = b->values();
    const Mat& pb = b->prefix();
    for (long c = 0; c < d; ++c) {
        const double inca = xa(c, lj) - xa(c, li);
        const double incb = xb(c, lj) - xb(c, li);
        n1 += (inca - incb) * (inca - incb);
        for (long r = 0; r < d; ++r) {
            const double va = pa(r + c * d, lj) - pa(r + c * d, li) - (xa(r, li) - xa(r, 0)) * inca;
            const double vb = pb(r + c * d, lj) - pb(r + c * d, li) - (xb(r, li) - xb(r, 0)) * incb;
            n2 += (va - vb) * (va - vb);
        }
    }
}

}  // namespace

HolderNorms holder_norms(const RoughPath& rp, std::size_t i0, std::size_t i1) {
    if (i1 <= i0 || i1 >= rp.size()) throw DomainError("invalid window for holder_norms");
    const auto& g = rp.grid();
    const double alpha = rp.alpha();
    double nx = 0.0, nxx = 0.0;
    for_each_pair(i1 - i0, [&](std::size_t a, std::size_t b) {
        const std::size_t i = i0 + a, j = i0 + b;
        const double dt = g[j] - g[i];
        double n1, n2;
        pair_sq_norms(rp, nullptr, i, j, n1, n2);
        nx = std::max(nx, std::sqrt(n1) / std::pow(dt, alpha));
        nxx = std::max(nxx, std::sqrt(n2) / std::pow(dt, 2.0 * alpha));
    });
    HolderNorms out;
    out.norm_x = nx;
    out.norm_xx = nxx;
    out.homogeneous = nx + std::sqrt(nxx);
    out.subsampled = pairs_subsampled(i1 - i0);
    return out;
}

HolderNorms holder_norms(const RoughPath& rp) { return holder_norms(rp, 0, rp.size() - 1); }

double rough_distance(const RoughPath& a, const RoughPath& b) {
    if (!a.grid().same_as(b.grid())) throw DomainError("rough_distance needs identical grids");
    if (a.dim() != b.dim()) throw DomainError("rough_distance needs equal dimensions");
    if (a.alpha().value() != b.alpha().value()) throw DomainError("rough_distance needs equal Hoelder exponents");
    const auto& g = a.grid();
    const double alpha = a.alpha();
    double nx = 0.0, nxx = 0.0;
    for_each_pair(g.cells(), [&](std::size_t i, std::size_t j) {
        const double dt = g[j] - g[i];
        double n1, n2;
        pair_sq_norms(a, &b, i, j, n1, n2);
        nx = std::max(nx, std::sqrt(n1) / std::pow(dt, alpha));
        nxx = std::max(nxx, std::sqrt(n2) / std::pow(dt, 2.0 * alpha));
    });
    return nx + nxx;
}

// ---------------------------------------------------------------- lifts

RoughPath brownian_lift(const NoisePath& noise, const TimeGrid& coarse, LiftMode mode, HolderExponent alpha) {
    if (mode != LiftMode::Ito && mode != LiftMode::Stratonovich)
        throw std::invalid_argument("brownian_lift mode must be Ito or Stratonovich");
    const auto idx = noise.fine_grid().embed(coarse);
    const Mat& w = noise.values();
    const long d = w.rows();
    const long m = static_cast<long>(coarse.cells());
    Mat x(d, m + 1);
    Mat xx(d * d, m);
    for (long c = 0; c <= m; ++c) x.col(c) = w.col(static_cast<long>(idx[static_cast<std::size_t>(c)]));
    Mat s(d, d);
    for (long c = 0; c < m; ++c) {
        const long ia = static_cast<long>(idx[static_cast<std::size_t>(c)]);
        const long ib = static_cast<long>(idx[static_cast<std::size_t>(c) + 1]);
        s.setZero();
        for (long k = ia; k < ib; ++k) {
            for (long q = 0; q < d; ++q) {
                const double dw = w(q, k + 1) - w(q, k);
                for (long r = 0; r < d; ++r) s(r, q) += (0.5 * (w(r, k) + w(r, k + 1)) - w(r, ia)) * dw;
            }
        }
        if (mode == LiftMode::Ito) s.diagonal().array() -= 0.5 * (coarse[static_cast<std::size_t>(c) + 1] - coarse[static_cast<std::size_t>(c)]);
        xx.col(c) = Eigen::Map<const Vec>(s.data(), d * d);
    }
    RoughPathInfo info;
    info.mode = mode;
    info.seed = noise.seed();
    info.fine_cells = noise.fine_grid().cells();
    return RoughPath(coarse, std::move(x), std::move(xx), alpha, info);
}

namespace {

Mat linear_cells(const Mat& x) {
    const long d = x.rows();
    const long m = x.cols() - 1;
    Mat xx(d * d, m);
    for (long c = 0; c < m; ++c) {
        const Vec dx = x.col(c + 1) - x.col(c);
        const Mat s = 0.5 * dx * dx.transpose();
        xx.col(c) = Eigen::Map<const Vec>(s.data(), d * d);
    }
    return xx;
}

}  // namespace

RoughPath dyadic_approximation(const NoisePath& noise, int level, HolderExponent alpha) {
    if (level < 0 || level > noise.fine_level()) throw DomainError("dyadic level finer than the noise grid");
    const TimeGrid g = dyadic_grid(-noise.horizon(), noise.horizon(), noise.horizon(), level);
    const auto idx = noise.fine_grid().embed(g);
    Mat x(noise.dim(), static_cast<long>(g.size()));
    for (std::size_t i = 0; i < g.size(); ++i) x.col(static_cast<long>(i)) = noise.values().col(static_cast<long>(idx[i]));
    Mat xx = linear_cells(x);
    RoughPathInfo info;
    info.mode = LiftMode::Dyadic;
    info.seed = noise.seed();
    info.fine_cells = noise.fine_grid().cells();
    info.dyadic_level = level;
    return RoughPath(g, std::move(x), std::move(xx), alpha, info);
}

RoughPath dyadic_approximation(const NoisePath& noise, int level, const TimeGrid& eval, HolderExponent alpha) {
    if (level < 0 || level > noise.fine_level()) throw DomainError("dyadic level finer than the noise grid");
    const auto& fine = noise.fine_grid();
    const auto idx = fine.embed(eval);
    const std::size_t stride = 1ull << (noise.fine_level() - level);
    const Mat& w = noise.values();
    const long d = w.rows();
    // Every dyadic node strictly inside the span must be an evaluation point.
    for (std::size_t f = idx.front(); f <= idx.back(); ++f) {
        if (f % stride != 0) continue;
        if (!std::binary_search(idx.begin(), idx.end(), f))
            throw DomainError("evaluation grid misses a dyadic node of W^n");
    }
    Mat x(d, static_cast<long>(eval.size()));
    for (std::size_t i = 0; i < eval.size(); ++i) {
        const std::size_t f = idx[i];
        const std::size_t lo = (f / stride) * stride;
        if (lo == f) {
            x.col(static_cast<long>(i)) = w.col(static_cast<long>(f));
            continue;
        }
        const std::size_t hi = lo + stride;
        const double theta = static_cast<double>(f - lo) / static_cast<double>(stride);
        x.col(static_cast<long>(i)) = (1.0 - theta) * w.col(static_cast<long>(lo)) + theta * w.col(static_cast<long>(hi));
    }
    Mat xx = linear_cells(x);
    RoughPathInfo info;
    info.mode = LiftMode::Dyadic;
    info.seed = noise.seed();
    info.fine_cells = fine.cells();
    info.dyadic_level = level;
    return RoughPath(eval, std::move(x), std::move(xx), alpha, info);
}

RoughPath smooth_rough_path(const TimeGrid& grid, const std::function<Vec(double)>& xf,
                            const std::function<Vec(double)>& dxf, HolderExponent alpha) {
    // 8-point Gauss-Legendre nodes and weights on [-1, 1].
    static const std::array<double, 8> nodes = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                                -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                                0.7966664774136267,  0.9602898564975363};
    static const std::array<double, 8> weights = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                                  0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                                  0.2223810344533745, 0.1012285362903763};
    const Vec x0 = xf(grid[0]);
    const long d = x0.size();
    const long m = static_cast<long>(grid.cells());
    Mat x(d, m + 1);
    Mat xx(d * d, m);
    for (long i = 0; i <= m; ++i) x.col(i) = xf(grid[static_cast<std::size_t>(i)]);
    for (long c = 0; c < m; ++c) {
        const double s = grid[static_cast<std::size_t>(c)];
        const double t = grid[static_cast<std::size_t>(c) + 1];
        const double half = 0.5 * (t - s);
        Mat acc = Mat::Zero(d, d);
        for (std::size_t q = 0; q < nodes.size(); ++q) {
            const double r = s + half * (nodes[q] + 1.0);
            acc += weights[q] * half * (xf(r) - x.col(c)) * dxf(r).transpose();
        }
        xx.col(c) = Eigen::Map<const Vec>(acc.data(), d * d);
    }
    RoughPathInfo info;
    info.mode = LiftMode::Smooth;
    return RoughPath(grid, std::move(x), std::move(xx), alpha, info);
}

// ---------------------------------------------------------------- shift etc.

RoughPath shift(const RoughPath& rp, double r) {
    const std::size_t ir = rp.grid().index_of(r);
    Mat x = rp.values();
    const Vec base = x.col(static_cast<long>(ir));
    x.colwise() -= base;
    return RoughPath(rp.grid().shifted(r), std::move(x), rp.cell_second_raw(), rp.alpha(), rp.info());
}

RoughPath restrict(const RoughPath& rp, std::size_t i0, std::size_t i1) {
    if (i1 <= i0 || i1 >= rp.size()) throw DomainError("invalid restriction window");
    const long a = static_cast<long>(i0), n = static_cast<long>(i1 - i0);
    return RoughPath(rp.grid().slice(i0, i1), rp.values().middleCols(a, n + 1), rp.cell_second_raw().middleCols(a, n),
                     rp.alpha(), rp.info());
}

RoughPath restrict_time(const RoughPath& rp, double a, double b) {
    const auto& g = rp.grid();
    const double tol = 1e-9 * g.min_step();
    if (a < g.front() - tol || b > g.back() + tol) throw DomainError("window overflow: interval outside the stored path");
    return restrict(rp, g.index_of(a), g.index_of(b));
}

RoughPath shift(const RoughPath& rp, double r, double a, double b) {
    return restrict_time(shift(rp, r), a, b);
}

RoughPath dilate(const RoughPath& rp, double lambda) {
    return RoughPath(rp.grid(), lambda * rp.values(), lambda * lambda * rp.cell_second_raw(), rp.alpha(), rp.info());
}

}  // namespace mvrds
