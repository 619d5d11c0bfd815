#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace ptne {

using rng_engine = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Derives an independent stream seed from a base seed and a stream id.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t s = base;
    std::uint64_t a = detail::splitmix64(s);
    s ^= stream * 0xda942042e4dd58b5ULL;
    std::uint64_t b = detail::splitmix64(s);
    return a ^ (b + 0x9e3779b97f4a7c15ULL);
}

/// Named-stream variant so call sites stay readable (FNV-1a over the label).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return derive_seed(base, h);
}

/// Uniform double in [0, 1) with 53 random bits. Implemented directly so the
/// draw count per variate is fixed (exactly one engine call) and the upper
/// bound is strictly exclusive on every platform.
inline double uniform01(rng_engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller. Consumes exactly two engine calls.
inline double normal01(rng_engine& eng) {
    double u1 = uniform01(eng);
    double u2 = uniform01(eng);
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
}

} // namespace ptne
