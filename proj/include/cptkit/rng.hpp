#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace cptkit {

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stateless mix of a single 64-bit value (splitmix64 finalizer).
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based RNG keyed by (seed, key). Every draw is a pure function of
// (seed, key, counter), so per-document decisions are reproducible no matter
// how the documents are scheduled across shards.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::string_view key)
        : key_(mix64(seed ^ fnv1a64(key))) {}
    CounterRng(std::uint64_t seed, std::uint64_t key) : key_(mix64(seed ^ key)) {}

    std::uint64_t next_u64() { return mix64(key_ ^ 0x2545f4914f6cdd1dULL * ++counter_); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; never returns 0, so it is safe under pow(u, -x).
    double uniform_open0() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// One draw from the Lomax distribution: support [0, inf), CCDF (1+t)^-alpha.
// This is the distribution behind the quality-resampling rule.
inline double lomax_sample(double u_open0, double alpha) {
    return std::pow(u_open0, -1.0 / alpha) - 1.0;
}

} // namespace cptkit
