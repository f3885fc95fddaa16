#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace sni_sight {

/// Seeded random source. Wraps std::mt19937_64 (whose output sequence is fixed
/// by the standard) and draws bounded integers and doubles with explicit
/// arithmetic, so results are identical across standard library vendors.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t uniform_index(std::uint64_t bound);

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    bool bernoulli(double p) { return uniform01() < p; }

    /// Exponential variate with the given mean.
    double exponential(double mean);

    std::string state() const;
    void restore(const std::string& state);

private:
    std::mt19937_64 engine_;
};

/// Child seed for a named sub-stream; splitmix64 over the parent seed and a
/// hash of the tag and index.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace sni_sight
