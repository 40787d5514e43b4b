#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "volta/error.hpp"

namespace volta {

// Deterministic random stream. All distribution transforms are written out
// explicitly (instead of std::*_distribution) so that draws are bit-identical
// across standard library implementations.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // (0, 1); safe for log()
    double uniform_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; consumes two engine draws per call.
    double normal() {
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; // (0,1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Standard Gumbel(0,1) via -log(-log U).
    double gumbel() { return -std::log(-std::log(uniform_open())); }

    // Unbiased integer in [0, n); rejection sampling keeps it exact.
    int uniform_int(int n) {
        if (n <= 0) throw ContractError("uniform_int: n must be positive");
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = (~std::uint64_t{0} / un) * un;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return static_cast<int>(x % un);
    }

private:
    static constexpr double kPi = 3.14159265358979323846;
    std::mt19937_64 engine_;
};

// splitmix64 finalizer; used to derive independent streams from (seed, salt).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

inline RandomStream derive_stream(std::uint64_t seed, std::uint64_t salt) {
    return RandomStream(mix_seed(seed, salt));
}

} // namespace volta
