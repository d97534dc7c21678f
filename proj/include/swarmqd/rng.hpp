#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace swarmqd {

/// Pseudo-random source used throughout the library.
///
/// Wraps std::mt19937_64 but converts raw words to doubles and bounded
/// integers with fixed bit manipulations, so a given seed yields the same
/// stream on every standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// A degenerate source returning the same word forever (tests only).
    static Rng constant(std::uint64_t word)
    {
        Rng r(0);
        r.fixed_ = true;
        r.word_ = word;
        return r;
    }

    std::uint64_t next() { return fixed_ ? word_ : engine_(); }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t below(std::size_t n)
    {
        return static_cast<std::size_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
    bool fixed_ = false;
    std::uint64_t word_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Sub-seed for (stage, counter) under a master seed. Stable across runs and
/// platforms; independent of evaluation order.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage, std::uint64_t counter);

} // namespace swarmqd
