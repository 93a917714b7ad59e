#pragma once

#include "mvrds/time_grid.hpp"
#include "mvrds/types.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace mvrds {

/// Hoelder exponent alpha, restricted to the open interval (1/3, 1/2).
class HolderExponent {
public:
    explicit HolderExponent(double alpha = 0.4);
    double value() const { return alpha_; }
    operator double() const { return alpha_; }

private:
    double alpha_;
};

enum class LiftMode { Ito, Stratonovich, Dyadic, Smooth, Custom };
std::string to_string(LiftMode m);
LiftMode lift_mode_from_string(const std::string& s);

/// Provenance recorded alongside a rough path (written to the file header).
struct RoughPathInfo {
    LiftMode mode = LiftMode::Custom;
    std::uint64_t seed = 0;
    std::size_t fine_cells = 0;   // cells of the generating fine grid, 0 if none
    int dyadic_level = -1;
};

/// Level-1 path X on a grid plus the level-2 process on consecutive cells.
/// Level-2 values on arbitrary pairs are obtained by Chen composition via a
/// prefix table P_j = XX_{t_0, t_j}:
///   XX_{i,j} = P_j - P_i - X_{0,i} (x) X_{i,j}.
class RoughPath {
public:
    /// values: d x (M+1), cell_second: (d*d) x M with column k holding the
    /// column-major d x d matrix XX_{t_k, t_{k+1}}.
    RoughPath(TimeGrid grid, Mat values, Mat cell_second, HolderExponent alpha, RoughPathInfo info = {});

    int dim() const { return static_cast<int>(x_.rows()); }
    const TimeGrid& grid() const { return grid_; }
    std::size_t size() const { return grid_.size(); }
    std::size_t cells() const { return grid_.cells(); }
    HolderExponent alpha() const { return alpha_; }
    const RoughPathInfo& info() const { return info_; }

    const Mat& values() const { return x_; }
    const Mat& cell_second_raw() const { return xx_cells_; }
    /// Column j holds vec(XX_{t_0, t_j}).
    const Mat& prefix() const { return prefix_; }

    Eigen::Ref<const Vec> value(std::size_t i) const { return x_.col(static_cast<long>(i)); }
    Vec increment(std::size_t i, std::size_t j) const;   // X_{t_i, t_j}
    Mat second(std::size_t i, std::size_t j) const;      // XX_{t_i, t_j}, i <= j
    Mat cell_second(std::size_t k) const;                // XX_{t_k, t_{k+1}}

    /// Fast per-cell accessors without temporaries.
    void cell(std::size_t k, Eigen::Ref<Vec> dx, Eigen::Ref<Mat> dxx) const;

    /// Time-based versions; throw DomainError off the grid.
    Vec increment_at(double s, double t) const;
    Mat second_at(double s, double t) const;

private:
    TimeGrid grid_;
    Mat x_;
    Mat xx_cells_;
    Mat prefix_;   // (d*d) x (M+1)
    HolderExponent alpha_;
    RoughPathInfo info_;
};

using RoughPathPtr = std::shared_ptr<const RoughPath>;

/// Level-2 values stored for every ordered pair (i <= j). Used for paths
/// imported from outside, where Chen's relation is not guaranteed.
class PairTable {
public:
    PairTable(TimeGrid grid, Mat values, std::vector<Mat> pairs);
    static PairTable materialize(const RoughPath& rp);

    const TimeGrid& grid() const { return grid_; }
    const Mat& values() const { return x_; }
    Mat& at(std::size_t i, std::size_t j);
    const Mat& at(std::size_t i, std::size_t j) const;

private:
    TimeGrid grid_;
    Mat x_;
    std::vector<Mat> pairs_;
    std::size_t index(std::size_t i, std::size_t j) const;
};

/// Brownian sample on the two-sided window [-T, T] with W(0) = 0, stored at
/// the points of a uniform fine grid.
class NoisePath {
public:
    /// Levy construction with 2^fine_level cells per side.
    static NoisePath generate(std::uint64_t seed, int dim, double horizon, int fine_level,
                              std::uint64_t stream = 0);

    NoisePath(std::uint64_t seed, TimeGrid fine_grid, Mat values, double horizon, int fine_level);

    std::uint64_t seed() const { return seed_; }
    const TimeGrid& fine_grid() const { return grid_; }
    const Mat& values() const { return w_; }
    Mat increments() const;
    int dim() const { return static_cast<int>(w_.rows()); }
    double horizon() const { return horizon_; }
    int fine_level() const { return fine_level_; }
    std::size_t zero_index() const;

    /// Path omega + eps * g(t) (g vector-valued). The returned path keeps the
    /// seed for provenance and no longer satisfies W(0) = 0 unless g(0) = 0.
    NoisePath perturbed(const std::function<Vec(double)>& g, double eps) const;

private:
    std::uint64_t seed_;
    TimeGrid grid_;
    Mat w_;
    double horizon_;
    int fine_level_;
};

/// Uniform grid with 2^level cells per unit of `horizon` covering [a, b].
TimeGrid dyadic_grid(double a, double b, double horizon, int level);

/// Chen defect XX_{s,t} - XX_{s,u} - XX_{u,t} - X_{s,u} (x) X_{u,t}.
Mat chen_defect(const RoughPath& rp, double s, double u, double t);
Mat chen_defect(const PairTable& rp, double s, double u, double t);
Mat chen_defect_index(const RoughPath& rp, std::size_t i, std::size_t k, std::size_t j);

struct HolderNorms {
    double norm_x = 0.0;
    double norm_xx = 0.0;
    double homogeneous = 0.0;  // norm_x + sqrt(norm_xx)
    bool subsampled = false;
};

/// Pairs (i, j), i < j, over which discrete suprema are taken: all pairs when
/// the grid has at most `kFullPairLimit` cells, otherwise the dyadic pairs
/// (i, i + 2^k).
inline constexpr std::size_t kFullPairLimit = 2048;
void for_each_pair(std::size_t cells, const std::function<void(std::size_t, std::size_t)>& f);
bool pairs_subsampled(std::size_t cells);

HolderNorms holder_norms(const RoughPath& rp);
/// Norms restricted to grid indices [i0, i1].
HolderNorms holder_norms(const RoughPath& rp, std::size_t i0, std::size_t i1);

/// Inhomogeneous alpha-Hoelder rough path metric.
double rough_distance(const RoughPath& a, const RoughPath& b);

/// Levy-area / iterated integral lift from the fine grid. Stratonovich uses
/// midpoint sums; the Ito lift is Stratonovich minus (t - s)/2 Id per cell.
RoughPath brownian_lift(const NoisePath& noise, const TimeGrid& coarse, LiftMode mode,
                        HolderExponent alpha = HolderExponent(0.4));

/// Piecewise-linear interpolation W^n of the noise at the nodes k T 2^-n of
/// the window, on its own dyadic grid.
RoughPath dyadic_approximation(const NoisePath& noise, int level, HolderExponent alpha = HolderExponent(0.4));
/// The same path W^n sampled on `eval` (a subgrid of the fine grid that
/// contains every dyadic node inside its span).
RoughPath dyadic_approximation(const NoisePath& noise, int level, const TimeGrid& eval,
                               HolderExponent alpha = HolderExponent(0.4));

/// Smooth path x(t) with exact iterated integrals computed by Gauss-Legendre
/// quadrature on each cell. dx is the derivative of x.
RoughPath smooth_rough_path(const TimeGrid& grid, const std::function<Vec(double)>& x,
                            const std::function<Vec(double)>& dx, HolderExponent alpha = HolderExponent(0.4));

/// Time shift theta_r: the path tau -> X(tau + r) - X(r) on the translated
/// grid.
RoughPath shift(const RoughPath& rp, double r);
/// Shift restricted to the window [a, b] (times of the shifted path).
RoughPath shift(const RoughPath& rp, double r, double a, double b);

/// Restriction to the grid indices [i0, i1].
RoughPath restrict(const RoughPath& rp, std::size_t i0, std::size_t i1);
RoughPath restrict_time(const RoughPath& rp, double a, double b);

/// Scaling X -> lambda X, XX -> lambda^2 XX.
RoughPath dilate(const RoughPath& rp, double lambda);

/// Columnar text serialisation; lossless for finite values.
void write_rough_path(std::ostream& os, const RoughPath& rp);
RoughPath read_rough_path(std::istream& is);
void save_rough_path(const std::string& path, const RoughPath& rp);
RoughPath load_rough_path(const std::string& path);

}  // namespace mvrds
