#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace rvrecon {

/// SplitMix64 mix of (master, index); used to derive independent streams.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/**
 * mt19937_64 with hand-written conversions. The engine's output sequence is
 * fixed by the standard, so draws are identical across standard libraries
 * (the std distributions are not).
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    /// Uniform on {0, ..., n-1}, unbiased.
    std::size_t index(std::size_t n);
    /// Standard normal (Marsaglia polar method).
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace rvrecon
