#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ndv/autodiff.hpp"
#include "ndv/parameters.hpp"
#include "ndv/temporal.hpp"

namespace ndv {

// Frame geometry; channels fixed at 1.
struct VideoGeometry {
    std::size_t frames = 8;
    std::size_t height = 16;
    std::size_t width = 16;
};

// Channel widths of G_i and D. Training uses the defaults; gradient checks
// shrink them so finite differences stay cheap.
struct NetworkWidths {
    std::size_t image_seed = 32;
    std::size_t image_mid = 16;
    std::array<std::size_t, 3> disc{8, 16, 32};
};

// G_i: linear 2d -> C0 x (H/4) x (W/4), ReLU, convT(k4 s2 p1) -> C1, ReLU,
// convT(k4 s2 p1) -> 1, sigmoid.
class ImageGenerator {
public:
    ImageGenerator(std::size_t latent_dim, std::size_t height, std::size_t width, std::uint64_t seed,
                   const NetworkWidths& widths = {});

    // input [N, 2d] -> images [N, 1, H, W].
    Var forward(Tape& tape, const std::vector<Var>& bound, const Var& input) const;

    std::size_t latent_dim() const noexcept { return d_; }
    ParameterStore& params() noexcept { return params_; }
    const ParameterStore& params() const noexcept { return params_; }

private:
    std::size_t d_, height_, width_, seed_channels_;
    ParameterStore params_;
};

// D: three conv3d(k3 s2 p1) with leaky ReLU 0.2, then a linear logit.
class Discriminator {
public:
    Discriminator(const VideoGeometry& geometry, std::uint64_t seed, const NetworkWidths& widths = {});

    // videos [B, 1, T, H, W] -> raw logits [B].
    Var forward(Tape& tape, const std::vector<Var>& bound, const Var& videos) const;

    const VideoGeometry& geometry() const noexcept { return geometry_; }
    ParameterStore& params() noexcept { return params_; }
    const ParameterStore& params() const noexcept { return params_; }

private:
    VideoGeometry geometry_;
    std::size_t flat_ = 0;
    ParameterStore params_;
};

// Renders frame i as G_i(concat(z_c, z_i)). Output [B, 1, len(latents), H, W].
Var generate_video(const ImageGenerator& image, const std::vector<Var>& image_bound, const Var& content,
                   const std::vector<Var>& latents);

enum class Phi { bce, hinge, identity };

std::string to_string(Phi phi);
Phi parse_phi(const std::string& name);

struct GanLosses {
    Var loss_d;
    Var loss_g;
};

// bce: loss_d = mean softplus(-real) + mean softplus(fake), loss_g = mean softplus(-fake).
// hinge: loss_d = mean relu(1 - real) + mean relu(1 + fake), loss_g = -mean fake.
// identity: loss_d = -mean real + mean fake, loss_g = -mean fake.
GanLosses gan_losses(Phi phi, const Var& d_real, const Var& d_fake);
// The loss_g half alone.
Var generator_loss(Phi phi, const Var& d_fake);
std::pair<double, double> gan_losses(Phi phi, std::span<const double> d_real, std::span<const double> d_fake);

// Full generator plus discriminator.
struct VideoGan {
    std::unique_ptr<TemporalGenerator> temporal;
    ImageGenerator image;
    Discriminator disc;

    VideoGan(const TemporalGeneratorSpec& spec, const SolverSettings& solver, const VideoGeometry& geometry,
             std::uint64_t param_seed, const NetworkWidths& widths = {});

    const VideoGeometry& geometry() const noexcept { return disc.geometry(); }
    std::size_t latent_dim() const noexcept { return temporal->spec().latent_dim; }
};

// Per-row latent draws: row r uses derive_seed(seed, r), so a row's sample
// does not depend on how many rows are drawn.
struct LatentBatch {
    Tensor content;                       // [B, d] standard normal
    std::vector<std::uint64_t> noise_seeds;  // Wiener seeds for the sde family
};

LatentBatch draw_latents(std::size_t count, std::size_t latent_dim, std::uint64_t seed);

struct GeneratedVideos {
    Var videos;  // [B, 1, T', H, W]
    LatentTrajectory trajectory;
};

// Forward pass of G = G_i o G_t. With oversample k > 1 the dense latents are
// rendered (k(T-1)+1 frames); backtrack n > 0 prepends n frames at t = -n..-1.
GeneratedVideos generate(Tape& tape, const VideoGan& gan, const std::vector<Var>& temporal_bound,
                         const std::vector<Var>& image_bound, const LatentBatch& latents, std::size_t oversample = 1,
                         std::size_t backtrack = 0);

// Gradient-free sampling: [count, 1, T', H, W].
Tensor sample_videos(const VideoGan& gan, std::size_t count, std::uint64_t seed, std::size_t oversample = 1,
                     std::size_t backtrack = 0);

}  // namespace ndv
