#ifndef RDW_RNG_HPP
#define RDW_RNG_HPP

#include <cstdint>

namespace rdw::rng {

// splitmix64 finalizer.  Used as an avalanche step so that every lattice
// site, replica and realization gets a statistically independent stream
// from a handful of integer labels.
constexpr std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Order-sensitive combiner: combine(a, x) != combine(x, a) in general.
constexpr std::uint64_t combine(std::uint64_t seed, std::uint64_t v) {
    return mix(seed ^ (mix(v) + 0x9E3779B97F4A7C15ull + (seed << 6) + (seed >> 2)));
}

constexpr std::uint64_t signed_bits(long long v) {
    return static_cast<std::uint64_t>(v);
}

// Uniform double in [0, 1) with 53 random bits.
constexpr double uniform01(std::uint64_t u) {
    return static_cast<double>(u >> 11) * 0x1.0p-53;
}

// Uniform double in [-half_width, half_width).
constexpr double uniform_symmetric(std::uint64_t u, double half_width) {
    return half_width * (2.0 * uniform01(u) - 1.0);
}

}  // namespace rdw::rng

#endif
