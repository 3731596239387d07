#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace slahan {

// Malformed input data (files, records, trees). CLI maps this to exit code 2.
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite value produced or consumed by numerics. CLI maps this to exit code 3.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline uint64_t fnv1a(std::string_view s, uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// All randomness in the project flows through this wrapper so that results
// are a deterministic function of the configured seed, independent of the
// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(splitmix64(seed)) {}

    uint64_t bits() { return eng_(); }

    // uniform double in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, bound)
    uint64_t below(uint64_t bound) { return eng_() % bound; }

private:
    std::mt19937_64 eng_;
};

} // namespace slahan
