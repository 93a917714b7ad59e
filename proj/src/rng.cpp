#include "mvrds/rng.hpp"

#include <cmath>
#include <numbers>

namespace mvrds {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

Philox4x32::Counter Philox4x32::generate(Counter c, Key k) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kM0, c[0], hi0, lo0);
        mulhilo(kM1, c[2], hi1, lo1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
        k[0] += kW0;
        k[1] += kW1;
    }
    return c;
}

namespace {

Philox4x32::Counter draw(std::uint64_t seed, const NoiseAddress& a) {
    const Philox4x32::Counter ctr = {a.index, a.tag, static_cast<std::uint32_t>(a.stream),
                                     static_cast<std::uint32_t>(a.stream >> 32)};
    const Philox4x32::Key key = {static_cast<std::uint32_t>(seed),
                                 static_cast<std::uint32_t>(seed >> 32)};
    return Philox4x32::generate(ctr, key);
}

inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits =
        (static_cast<std::uint64_t>(hi) << 21) ^ (static_cast<std::uint64_t>(lo) >> 11);
    return (static_cast<double>(bits & ((1ull << 53) - 1)) + 0.5) * 0x1p-53;
}

}  // namespace

double keyed_uniform(std::uint64_t seed, const NoiseAddress& a, int slot) {
    const auto w = draw(seed, a);
    return slot == 0 ? to_unit(w[0], w[1]) : to_unit(w[2], w[3]);
}

double keyed_normal(std::uint64_t seed, const NoiseAddress& a) {
    const auto w = draw(seed, a);
    const double u1 = to_unit(w[0], w[1]);
    const double u2 = to_unit(w[2], w[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (label + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace mvrds
