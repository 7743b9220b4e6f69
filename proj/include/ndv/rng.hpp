#pragma once

#include <cstdint>
#include <random>

namespace ndv {

// Mixes a base seed with stream/index tags so independent consumers
// (data batches, noise, per-video samples) never share a generator state.
// SplitMix64 finalizer.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

// Portable generator: std::mt19937_64 (sequence fixed by the standard) with
// our own uniform and Box-Muller transforms, so draws are identical across
// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    // Standard normal via Box-Muller; the second variate of each pair is cached.
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ndv
