#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ndv/gradcheck.hpp"
#include "ndv/temporal.hpp"
#include "ndv/video_gan.hpp"

namespace ndv {

struct GradCheckSuiteOptions {
    std::size_t latent_dim = 3;
    std::size_t num_frames = 16;
    std::size_t batch = 1;
    std::size_t height = 8;
    std::size_t width = 8;
    NetworkWidths widths{2, 2, {2, 2, 2}};
    std::uint64_t seed = 5;
    double eps = 1e-5;
    // Test hook: corrupt the first analytic entry of this parameter block
    // (e.g. "temporal.f.0.weight") in every check that has it.
    std::optional<std::string> fault_block;
};

struct GradCheckEntry {
    std::string label;
    GradCheckReport report;
};

// One check per composite: "G_t:<label>" per family (a fixed random
// projection of all T latents, so gradients pass through the whole solver
// unroll), then "G_i" and "D" on random inputs with fixed projections.
std::vector<GradCheckEntry> gradcheck_suite(const std::vector<TemporalGeneratorSpec>& families,
                                            const SolverSettings& solver, const GradCheckSuiteOptions& options);

constexpr double kGradCheckTolerance = 1e-6;

}  // namespace ndv
