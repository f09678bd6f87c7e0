#pragma once

#include <cstdint>
#include <random>

namespace voltcast {

/// Deterministic seeded randomness.
///
/// std::mt19937_64 output is fully specified by the standard, but the
/// standard distributions are not, so every draw here goes through explicit
/// bit arithmetic. Results are therefore identical across compilers, which
/// keeps seeded pipelines byte-reproducible.
namespace rng {

/// SplitMix64 mixing step, used to derive independent seed streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed stream `stream` derived from a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t s = master ^ (0xa5a5a5a5deadbeefULL * (stream + 1));
    std::uint64_t a = splitmix64(s);
    std::uint64_t b = splitmix64(s);
    return a ^ (b << 1);
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
    return std::mt19937_64{seed};
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Uniform double in [-1, 1).
inline double uniform_pm1(std::mt19937_64& gen) {
    return 2.0 * uniform01(gen) - 1.0;
}

/// Uniform double in [lo, hi).
inline double uniform_range(std::mt19937_64& gen, double lo, double hi) {
    return lo + (hi - lo) * uniform01(gen);
}

}  // namespace rng
}  // namespace voltcast
