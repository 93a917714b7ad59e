#pragma once

#include <cstddef>
#include <vector>

namespace mvrds {

/// Strictly increasing sequence of times t_0 < ... < t_M.
class TimeGrid {
public:
    TimeGrid() = default;
    explicit TimeGrid(std::vector<double> points);

    /// M + 1 equally spaced points t0, t0 + h, ..., t0 + M h.
    static TimeGrid uniform(double t0, double h, std::size_t cells);
    static TimeGrid uniform_span(double t0, double t1, std::size_t cells);

    std::size_t size() const { return points_.size(); }
    std::size_t cells() const { return points_.size() - 1; }
    double operator[](std::size_t i) const { return points_[i]; }
    double front() const { return points_.front(); }
    double back() const { return points_.back(); }
    const std::vector<double>& points() const { return points_; }
    bool is_uniform() const { return uniform_; }
    double step() const;  // uniform grids only
    double min_step() const;

    /// Index of a grid time, matched up to a tolerance of 1e-9 of the
    /// smallest cell. Throws DomainError when t is not a grid point.
    std::size_t index_of(double t) const;
    bool contains(double t) const;

    /// Indices of `sub` inside this grid; throws DomainError if `sub` is not
    /// a subgrid.
    std::vector<std::size_t> embed(const TimeGrid& sub) const;

    /// Grid translated by -r (same spacing, same uniform flag).
    TimeGrid shifted(double r) const;

    /// Points with index in [i0, i1].
    TimeGrid slice(std::size_t i0, std::size_t i1) const;

    /// Every `factor`-th point (the last point is always kept).
    TimeGrid coarsen(std::size_t factor) const;

    bool same_as(const TimeGrid& other, double tol = 1e-12) const;

private:
    std::vector<double> points_;
    bool uniform_ = false;
    double h_ = 0.0;
    double tol_ = 0.0;
    long find(double t) const;
};

}  // namespace mvrds
