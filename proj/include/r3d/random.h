#pragma once

#include <cstdint>

namespace r3d {

/// xoshiro256** seeded through splitmix64.
///
/// The output sequence for a given seed is part of the public contract:
/// RANSAC and the reconstruction pipeline derive every stochastic choice
/// from it, so results reproduce across platforms and standard libraries.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(std::uint64_t seed);

    std::uint64_t operator()();

    /// Uniform integer in [0, bound) without modulo bias. bound > 0.
    std::uint64_t uniform(std::uint64_t bound);

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01();

    static constexpr std::uint64_t min() { return 0; }
    static constexpr std::uint64_t max() { return ~std::uint64_t{0}; }

private:
    std::uint64_t s_[4];
};

}  // namespace r3d
