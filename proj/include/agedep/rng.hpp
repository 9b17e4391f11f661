#pragma once

#include <cstdint>
#include <random>

namespace agedep {

/// Per-path random stream.
///
/// Seeding scheme: the engine is std::mt19937_64 seeded through std::seed_seq with
/// the 32-bit halves of (seed, stream, substream). A Monte Carlo run assigns
/// stream = path index and substream = role (0 regime chain, 1 asset), so every
/// path is reproducible on its own and paths can be generated in any order or in
/// parallel. Uniform, exponential and normal variates are derived here from raw
/// 64-bit draws rather than through <random> distributions, whose algorithms are
/// implementation-defined, so streams are identical across standard libraries.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0);

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    /// Standard exponential.
    double exponential();
    /// Standard normal (Box-Muller, caching the second variate).
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace agedep
