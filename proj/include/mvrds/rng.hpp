#pragma once

#include <array>
#include <cstdint>

namespace mvrds {

/// Philox4x32-10 counter-based generator (Salmon et al. 2011 parameters).
/// A (counter, key) pair maps to four 32-bit words; no internal state.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key);
};

/// Address of one Gaussian draw. All randomness in the library is a pure
/// function of (seed, address), so results do not depend on call order.
struct NoiseAddress {
    std::uint64_t stream = 0;   // particle index, path id, ...
    std::uint32_t tag = 0;      // purpose / side / component / level
    std::uint32_t index = 0;    // position inside the stream
};

/// Uniform variate in (0, 1) with 53 random bits.
double keyed_uniform(std::uint64_t seed, const NoiseAddress& a, int slot = 0);

/// Standard normal variate (Box-Muller on two keyed uniforms).
double keyed_normal(std::uint64_t seed, const NoiseAddress& a);

/// Packs the sub-fields of a tag. Level < 64, component < 4096, side < 2,
/// purpose < 128.
constexpr std::uint32_t make_tag(std::uint32_t purpose, std::uint32_t side,
                                 std::uint32_t component, std::uint32_t level) {
    return (purpose << 25) | (side << 24) | (component << 6) | level;
}

/// Derives an independent 64-bit seed from a parent seed and a label
/// (SplitMix64 finaliser).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label);

}  // namespace mvrds
