#include "mvrds/brownian.hpp"

#include "mvrds/rng.hpp"

#include <cmath>

namespace mvrds {

LevyBrownian::LevyBrownian(std::uint64_t seed, std::uint64_t stream, int dim, double horizon,
                           std::uint32_t purpose, std::uint32_t side)
    : seed_(seed), stream_(stream), dim_(dim), horizon_(horizon), purpose_(purpose), side_(side) {
    if (dim < 1) throw std::invalid_argument("Brownian dimension must be positive");
    if (!(horizon > 0.0)) throw std::invalid_argument("Brownian horizon must be positive");
}

double LevyBrownian::z(int component, int level, std::uint64_t index) const {
    NoiseAddress a;
    a.stream = stream_;
    a.tag = make_tag(purpose_, side_, static_cast<std::uint32_t>(component), static_cast<std::uint32_t>(level));
    a.index = static_cast<std::uint32_t>(index);
    return keyed_normal(seed_, a);
}

// Node (l, k) spans [k, k+1] H 2^-l with endpoint values a, b. Its midpoint
// is node index 2k+1 at level l+1.
void LevyBrownian::descend(int c, int l, std::uint64_t k, double a, double b, int level,
                           std::uint64_t j0, std::uint64_t j1, Mat& out) const {
    const int shift = level - l;
    const std::uint64_t lo = k << shift;
    const std::uint64_t hi = (k + 1) << shift;
    if (hi < j0 || lo > j1) return;
    if (lo >= j0) out(c, static_cast<long>(lo - j0)) = a;
    if (hi <= j1) out(c, static_cast<long>(hi - j0)) = b;
    if (shift == 0) return;
    const double width = std::ldexp(horizon_, -l);
    const double mid = 0.5 * (a + b) + 0.5 * std::sqrt(width) * z(c, l + 1, 2 * k + 1);
    descend(c, l + 1, 2 * k, a, mid, level, j0, j1, out);
    descend(c, l + 1, 2 * k + 1, mid, b, level, j0, j1, out);
}

Mat LevyBrownian::fill(int level, std::uint64_t j0, std::uint64_t j1) const {
    if (level < 0 || level > kMaxLevel) throw std::invalid_argument("Brownian level out of range");
    if (j1 < j0 || j1 > (1ull << level)) throw std::invalid_argument("Brownian index range out of range");
    Mat out(dim_, static_cast<long>(j1 - j0 + 1));
    for (int c = 0; c < dim_; ++c) {
        const double end = std::sqrt(horizon_) * z(c, 0, 1);
        descend(c, 0, 0, 0.0, end, level, j0, j1, out);
    }
    return out;
}

Vec LevyBrownian::value(int level, std::uint64_t j) const { return fill(level, j, j).col(0); }

}  // namespace mvrds
