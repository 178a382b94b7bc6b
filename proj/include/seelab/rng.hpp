#pragma once

#include <cmath>
#include <cstdint>

namespace seelab {

// Counter-based generator: every variate is a pure function of
// (seed, stream, counter), so draws are random-access and identical no matter
// how the surrounding loops are scheduled. Streams index Monte Carlo paths.
namespace rng {

inline std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic sub-seed for a named purpose (ensembles, probes, ...).
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) noexcept {
    return mix64(seed ^ mix64(tag));
}

}  // namespace rng

class CounterRng {
  public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_(rng::mix64(seed ^ (stream * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull))) {}

    // Uniform on (0,1), never exactly 0 or 1.
    double uniform(std::uint64_t counter) const noexcept {
        const std::uint64_t bits = rng::mix64(key_ + counter * 0x9e3779b97f4a7c15ull);
        return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; one variate per counter.
    double normal(std::uint64_t counter) const noexcept {
        const double u1 = uniform(2 * counter);
        const double u2 = uniform(2 * counter + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

  private:
    std::uint64_t key_;
};

}  // namespace seelab
