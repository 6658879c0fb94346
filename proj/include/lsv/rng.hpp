#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

// Counter-based random numbers. Every draw is a pure function of
// (key, counter), so substreams can be evaluated in any order, from any
// worker, and still produce identical values. Keys are derived from the
// experiment seed plus a purpose tag; per-particle streams hash the
// particle index into the key.

namespace lsv::rng {

inline constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Key for a named substream of a top-level seed.
inline std::uint64_t derive_key(std::uint64_t seed, std::uint64_t tag) {
    return mix64(seed + golden * mix64(tag + golden));
}

inline std::uint64_t derive_key(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    return derive_key(derive_key(seed, tag), index);
}

// Weyl-sequence SplitMix64 step at an arbitrary counter.
inline std::uint64_t at(std::uint64_t key, std::uint64_t counter) {
    return mix64(key + golden * counter);
}

// Uniform on the open interval (0, 1); never returns an endpoint.
inline double uniform01(std::uint64_t key, std::uint64_t counter) {
    return (static_cast<double>(at(key, counter) >> 11) + 0.5) * 0x1.0p-53;
}

inline double uniform(std::uint64_t key, std::uint64_t counter, double lo, double hi) {
    return lo + (hi - lo) * uniform01(key, counter);
}

// Standard normal via Box-Muller; one draw consumes counters 2c and 2c+1.
inline double normal(std::uint64_t key, std::uint64_t counter) {
    const double u1 = uniform01(key, 2 * counter);
    const double u2 = uniform01(key, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Substream purpose tags.
namespace tag {
inline constexpr std::uint64_t initial   = 0x11;
inline constexpr std::uint64_t path      = 0x22;
inline constexpr std::uint64_t local_vol = 0x33;
inline constexpr std::uint64_t verify    = 0x44;
inline constexpr std::uint64_t guard     = 0x55;
inline constexpr std::uint64_t chaos     = 0x66;
} // namespace tag

} // namespace lsv::rng
