#pragma once

#include <cstdint>
#include <random>

namespace nextact {

// Seeded generator passed explicitly to every stochastic operation.
// Draw helpers avoid std distributions so that a given seed yields the
// same stream on every standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Rejection-free modulo bias is irrelevant
    // here (n is tiny against 2^64), so plain reduction is fine.
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

}  // namespace nextact
