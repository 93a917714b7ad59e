#pragma once

#include "mvrds/types.hpp"

#include <cstdint>

namespace mvrds {

/// d-dimensional Brownian motion on [0, H] built by the Levy (midpoint
/// bridge) construction. The value at a dyadic time k H 2^-L depends only on
/// (seed, stream, side, component, level, index), so sampling at a finer
/// level refines the same path and any sub-range can be filled on its own.
class LevyBrownian {
public:
    static constexpr int kMaxLevel = 30;

    LevyBrownian(std::uint64_t seed, std::uint64_t stream, int dim, double horizon,
                 std::uint32_t purpose = 0, std::uint32_t side = 0);

    int dim() const { return dim_; }
    double horizon() const { return horizon_; }

    /// W at times j H 2^-level for j = j0..j1 (columns of a dim x (j1-j0+1)
    /// matrix). Cost O(j1 - j0 + level).
    Mat fill(int level, std::uint64_t j0, std::uint64_t j1) const;

    /// W at a single dyadic time.
    Vec value(int level, std::uint64_t j) const;

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    int dim_;
    double horizon_;
    std::uint32_t purpose_;
    std::uint32_t side_;

    double z(int component, int level, std::uint64_t index) const;
    void descend(int component, int l, std::uint64_t k, double a, double b, int level,
                 std::uint64_t j0, std::uint64_t j1, Mat& out) const;
};

}  // namespace mvrds
