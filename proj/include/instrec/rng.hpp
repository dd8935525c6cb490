#pragma once

// Seeded random streams.
//
// Every random decision in the library is drawn from a std::mt19937_64 whose
// seed is derived from (root seed, stream key...) by SplitMix64 mixing. Each
// ensemble member, training mix and target gets its own stream, so results do
// not depend on the order or the thread in which streams are consumed.
//
// The helpers below are used instead of <random> distributions, whose output
// is implementation-defined; this keeps models bit-identical across standard
// libraries.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace instrec {

using Engine = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// FNV-1a, used to key streams by label.
constexpr std::uint64_t hash_label(std::string_view label) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Seed of the substream keyed by `keys` under `root`.
template <class... Keys>
constexpr std::uint64_t derive_seed(std::uint64_t root, Keys... keys) noexcept {
    std::uint64_t s = splitmix64(root);
    ((s = splitmix64(s ^ static_cast<std::uint64_t>(keys))), ...);
    return s;
}

template <class... Keys>
Engine make_stream(std::uint64_t root, Keys... keys) {
    return Engine(derive_seed(root, keys...));
}

/// Uniform integer in [0, n). Rejection sampling, no modulo bias. n > 0.
inline std::uint64_t uniform_index(Engine& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return v % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(Engine& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in (0, 1].
inline double uniform_open_closed(Engine& rng) { return 1.0 - uniform_unit(rng); }

inline double uniform_range(Engine& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
}

/// Standard normal via Box-Muller (one draw per call).
inline double standard_normal(Engine& rng) {
    const double u1 = uniform_open_closed(rng);
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace instrec
