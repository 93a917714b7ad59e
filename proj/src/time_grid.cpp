#include "mvrds/time_grid.hpp"

#include "mvrds/types.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace mvrds {

TimeGrid::TimeGrid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw std::invalid_argument("TimeGrid needs at least 2 points");
    double hmin = points_[1] - points_[0];
    double hmax = hmin;
    for (std::size_t i = 1; i < points_.size(); ++i) {
        const double h = points_[i] - points_[i - 1];
        if (!(h > 0.0)) throw std::invalid_argument("TimeGrid points must be strictly increasing");
        hmin = std::min(hmin, h);
        hmax = std::max(hmax, h);
    }
    uniform_ = (hmax - hmin) <= 1e-12 * std::max(1.0, std::abs(hmax));
    h_ = uniform_ ? (points_.back() - points_.front()) / static_cast<double>(cells()) : 0.0;
    tol_ = 1e-9 * hmin;
}

TimeGrid TimeGrid::uniform(double t0, double h, std::size_t cells) {
    if (cells == 0 || !(h > 0.0)) throw std::invalid_argument("uniform grid needs cells > 0 and h > 0");
    std::vector<double> pts(cells + 1);
    for (std::size_t i = 0; i <= cells; ++i) pts[i] = t0 + static_cast<double>(i) * h;
    TimeGrid g;
    g.points_ = std::move(pts);
    g.uniform_ = true;
    g.h_ = h;
    g.tol_ = 1e-9 * h;
    return g;
}

TimeGrid TimeGrid::uniform_span(double t0, double t1, std::size_t cells) {
    if (!(t1 > t0)) throw std::invalid_argument("uniform_span needs t1 > t0");
    return uniform(t0, (t1 - t0) / static_cast<double>(cells), cells);
}

double TimeGrid::step() const {
    if (!uniform_) throw DomainError("step() called on a non-uniform grid");
    return h_;
}

double TimeGrid::min_step() const {
    double h = points_[1] - points_[0];
    for (std::size_t i = 2; i < points_.size(); ++i) h = std::min(h, points_[i] - points_[i - 1]);
    return h;
}

long TimeGrid::find(double t) const {
    if (uniform_) {
        const double x = (t - points_.front()) / h_;
        const long i = std::lround(x);
        if (i < 0 || i >= static_cast<long>(points_.size())) return -1;
        return std::abs(points_[static_cast<std::size_t>(i)] - t) <= tol_ ? i : -1;
    }
    auto it = std::lower_bound(points_.begin(), points_.end(), t - tol_);
    if (it == points_.end() || std::abs(*it - t) > tol_) return -1;
    return static_cast<long>(it - points_.begin());
}

std::size_t TimeGrid::index_of(double t) const {
    const long i = find(t);
    if (i < 0) throw DomainError(fmt::format("time {} is not a grid point", t));
    return static_cast<std::size_t>(i);
}

bool TimeGrid::contains(double t) const { return find(t) >= 0; }

std::vector<std::size_t> TimeGrid::embed(const TimeGrid& sub) const {
    std::vector<std::size_t> idx(sub.size());
    for (std::size_t k = 0; k < sub.size(); ++k) {
        const long i = find(sub[k]);
        if (i < 0) throw DomainError(fmt::format("grid point {} is not nested in the finer grid", sub[k]));
        idx[k] = static_cast<std::size_t>(i);
    }
    return idx;
}

TimeGrid TimeGrid::shifted(double r) const {
    if (uniform_) return uniform(points_.front() - r, h_, cells());
    std::vector<double> pts(points_);
    for (auto& p : pts) p -= r;
    return TimeGrid(std::move(pts));
}

TimeGrid TimeGrid::slice(std::size_t i0, std::size_t i1) const {
    if (i1 <= i0 || i1 >= points_.size()) throw DomainError("invalid grid slice");
    if (uniform_) return uniform(points_[i0], h_, i1 - i0);
    return TimeGrid(std::vector<double>(points_.begin() + static_cast<long>(i0),
                                        points_.begin() + static_cast<long>(i1) + 1));
}

TimeGrid TimeGrid::coarsen(std::size_t factor) const {
    if (factor == 0) throw std::invalid_argument("coarsen factor must be positive");
    if (uniform_ && cells() % factor == 0) return uniform(points_.front(), h_ * static_cast<double>(factor), cells() / factor);
    std::vector<double> pts;
    for (std::size_t i = 0; i < points_.size(); i += factor) pts.push_back(points_[i]);
    if (pts.back() != points_.back()) pts.push_back(points_.back());
    return TimeGrid(std::move(pts));
}

bool TimeGrid::same_as(const TimeGrid& other, double tol) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
        if (std::abs(points_[i] - other.points_[i]) > tol * std::max(1.0, std::abs(points_[i]))) return false;
    return true;
}

}  // namespace mvrds
