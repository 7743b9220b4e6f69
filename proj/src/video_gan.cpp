#include "ndv/video_gan.hpp"

#include <cmath>

#include "ndv/errors.hpp"
#include "ndv/rng.hpp"

namespace ndv {

namespace {

constexpr double kLeakySlope = 0.2;
const ConvGeometry kUp2d = ConvGeometry::uniform(2, 4, 2, 1);
const ConvGeometry kDown3d = ConvGeometry::uniform(3, 3, 2, 1);

std::size_t down(std::size_t n) { return (n - 1) / 2 + 1; }

}  // namespace

ImageGenerator::ImageGenerator(std::size_t latent_dim, std::size_t height, std::size_t width, std::uint64_t seed,
                               const NetworkWidths& widths)
    : d_(latent_dim), height_(height), width_(width), seed_channels_(widths.image_seed) {
    const std::size_t c0 = widths.image_seed, c1 = widths.image_mid;
    if (c0 == 0 || c1 == 0) throw ConfigError("image generator: channel widths must be positive");
    if (latent_dim == 0) throw ConfigError("image generator: latent_dim must be positive");
    if (height < 4 || width < 4 || height % 4 != 0 || width % 4 != 0)
        throw ConfigError("image generator: height and width must be positive multiples of 4");
    Rng rng(seed);
    const std::size_t seed_size = c0 * (height / 4) * (width / 4);
    params_.add("fc.weight", {2 * d_, seed_size}, 2 * d_, rng);
    params_.add("fc.bias", {seed_size}, 2 * d_, rng);
    params_.add("up0.weight", {c0, c1, 4, 4}, c0 * 16, rng);
    params_.add("up0.bias", {c1}, c0 * 16, rng);
    params_.add("up1.weight", {c1, 1, 4, 4}, c1 * 16, rng);
    params_.add("up1.bias", {1}, c1 * 16, rng);
}

Var ImageGenerator::forward(Tape&, const std::vector<Var>& p, const Var& input) const {
    if (input.shape().size() != 2 || input.dim(1) != 2 * d_)
        throw ShapeError("image generator: expected [N," + std::to_string(2 * d_) + "] input, got " +
                         shape_string(input.shape()));
    const std::size_t n = input.dim(0);
    Var h = apply_activation(add_bias(matmul(input, p[0]), p[1]), Activation::relu);
    h = reshape(h, {n, seed_channels_, height_ / 4, width_ / 4});
    h = apply_activation(conv_transpose(h, p[2], p[3], kUp2d), Activation::relu);
    return apply_activation(conv_transpose(h, p[4], p[5], kUp2d), Activation::sigmoid);
}

Discriminator::Discriminator(const VideoGeometry& geometry, std::uint64_t seed, const NetworkWidths& widths)
    : geometry_(geometry) {
    if (geometry.frames < 1 || geometry.height < 1 || geometry.width < 1)
        throw ConfigError("discriminator: empty video geometry");
    Rng rng(seed);
    std::size_t in = 1;
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t out = widths.disc[i], fan = in * 27;
        if (out == 0) throw ConfigError("discriminator: channel widths must be positive");
        params_.add("conv" + std::to_string(i) + ".weight", {out, in, 3, 3, 3}, fan, rng);
        params_.add("conv" + std::to_string(i) + ".bias", {out}, fan, rng);
        in = out;
    }
    flat_ = in * down(down(down(geometry.frames))) * down(down(down(geometry.height))) *
            down(down(down(geometry.width)));
    params_.add("fc.weight", {flat_, 1}, flat_, rng);
    params_.add("fc.bias", {1}, flat_, rng);
}

Var Discriminator::forward(Tape&, const std::vector<Var>& p, const Var& videos) const {
    const Shape& s = videos.shape();
    if (s.size() != 5 || s[1] != 1 || s[2] != geometry_.frames || s[3] != geometry_.height || s[4] != geometry_.width)
        throw ShapeError("discriminator: expected [B,1," + std::to_string(geometry_.frames) + "," +
                         std::to_string(geometry_.height) + "," + std::to_string(geometry_.width) + "] videos, got " +
                         shape_string(s));
    Var h = videos;
    for (std::size_t i = 0; i < 3; ++i) h = leaky_relu(conv(h, p[2 * i], p[2 * i + 1], kDown3d), kLeakySlope);
    h = reshape(h, {s[0], flat_});
    return reshape(add_bias(matmul(h, p[6]), p[7]), {s[0]});
}

Var generate_video(const ImageGenerator& image, const std::vector<Var>& image_bound, const Var& content,
                   const std::vector<Var>& latents) {
    if (latents.empty()) throw ContractError("generate_video: no frames");
    if (content.shape().size() != 2) throw ShapeError("generate_video: content must be [B, d]");
    const std::size_t b = content.dim(0), t = latents.size();
    std::vector<Var> inputs;
    inputs.reserve(t);
    for (const Var& z : latents) {
        if (z.shape() != content.shape())
            throw ShapeError("generate_video: latent " + shape_string(z.shape()) + " does not match content " +
                             shape_string(content.shape()));
        inputs.push_back(concat_features(content, z));
    }
    // Rows ordered (t, b); images come back [T*B, 1, H, W].
    Var images = image.forward(content.tape(), image_bound, concat(inputs, 0));
    const Shape& is = images.shape();
    images = reshape(images, {t, b, is[2], is[3]});
    images = swap_leading_axes(images);
    return reshape(images, {b, 1, t, is[2], is[3]});
}

std::string to_string(Phi phi) {
    switch (phi) {
        case Phi::bce: return "bce";
        case Phi::hinge: return "hinge";
        case Phi::identity: return "identity";
    }
    return "?";
}

Phi parse_phi(const std::string& name) {
    if (name == "bce") return Phi::bce;
    if (name == "hinge") return Phi::hinge;
    if (name == "identity") return Phi::identity;
    throw ConfigError("unknown phi '" + name + "' (expected bce, hinge, identity)");
}

Var generator_loss(Phi phi, const Var& d_fake) {
    if (d_fake.value().numel() == 0) throw ContractError("gan_losses: empty batch");
    if (phi == Phi::bce) return mean(softplus(scale(d_fake, -1.0)));
    return scale(mean(d_fake), -1.0);
}

GanLosses gan_losses(Phi phi, const Var& d_real, const Var& d_fake) {
    if (d_real.value().numel() == 0 || d_fake.value().numel() == 0) throw ContractError("gan_losses: empty batch");
    switch (phi) {
        case Phi::bce:
            return {add(mean(softplus(scale(d_real, -1.0))), mean(softplus(d_fake))), generator_loss(phi, d_fake)};
        case Phi::hinge:
            return {add(mean(apply_activation(add_scalar(scale(d_real, -1.0), 1.0), Activation::relu)),
                        mean(apply_activation(add_scalar(d_fake, 1.0), Activation::relu))),
                    generator_loss(phi, d_fake)};
        case Phi::identity:
            return {sub(mean(d_fake), mean(d_real)), generator_loss(phi, d_fake)};
    }
    throw ContractError("gan_losses: unknown phi");
}

std::pair<double, double> gan_losses(Phi phi, std::span<const double> d_real, std::span<const double> d_fake) {
    Tape tape;
    const auto r = gan_losses(phi, tape.constant(Tensor({d_real.size()}, std::vector<double>(d_real.begin(), d_real.end()))),
                              tape.constant(Tensor({d_fake.size()}, std::vector<double>(d_fake.begin(), d_fake.end()))));
    return {r.loss_d.value().item(), r.loss_g.value().item()};
}

VideoGan::VideoGan(const TemporalGeneratorSpec& spec, const SolverSettings& solver, const VideoGeometry& geometry,
                   std::uint64_t param_seed, const NetworkWidths& widths)
    : temporal(build_temporal_generator(
          [&] {
              TemporalGeneratorSpec s = spec;
              s.seed = derive_seed(param_seed, 1);
              return s;
          }(),
          solver)),
      image(spec.latent_dim, geometry.height, geometry.width, derive_seed(param_seed, 2), widths),
      disc(geometry, derive_seed(param_seed, 3), widths) {
    if (spec.num_frames != geometry.frames)
        throw ConfigError("temporal.num_frames (" + std::to_string(spec.num_frames) + ") must equal dataset.frames (" +
                          std::to_string(geometry.frames) + ")");
}

LatentBatch draw_latents(std::size_t count, std::size_t latent_dim, std::uint64_t seed) {
    LatentBatch out{Tensor({count, latent_dim}), {}};
    out.noise_seeds.resize(count);
    for (std::size_t r = 0; r < count; ++r) {
        const std::uint64_t row = derive_seed(seed, r);
        Rng rng(derive_seed(row, 0));
        for (std::size_t j = 0; j < latent_dim; ++j) out.content.raw()[r * latent_dim + j] = rng.normal();
        out.noise_seeds[r] = derive_seed(row, 1);
    }
    return out;
}

GeneratedVideos generate(Tape& tape, const VideoGan& gan, const std::vector<Var>& temporal_bound,
                         const std::vector<Var>& image_bound, const LatentBatch& latents, std::size_t oversample,
                         std::size_t backtrack) {
    GenerateOptions options;
    options.oversample = oversample;
    options.noise_seeds = latents.noise_seeds;
    if (oversample > 1 && !gan.temporal->supports_oversampling())
        throw UnsupportedError("capability not supported by family " + gan.temporal->spec().label() + ": interpolation");
    if (backtrack > 0 && !gan.temporal->supports_backward())
        throw UnsupportedError("capability not supported by family " + gan.temporal->spec().label() +
                               ": backward extrapolation");
    GeneratedVideos out;
    const Var content = tape.constant(latents.content);
    out.trajectory = gan.temporal->generate(tape, temporal_bound, content, options);
    std::vector<Var> latents_used;
    if (backtrack > 0) {
        auto before = gan.temporal->extrapolate_backward(tape, temporal_bound, out.trajectory, backtrack);
        latents_used.assign(before.rbegin(), before.rend());
    }
    const auto& forward = oversample > 1 ? out.trajectory.dense : out.trajectory.frames;
    latents_used.insert(latents_used.end(), forward.begin(), forward.end());
    out.videos = generate_video(gan.image, image_bound, out.trajectory.content, latents_used);
    return out;
}

Tensor sample_videos(const VideoGan& gan, std::size_t count, std::uint64_t seed, std::size_t oversample,
                     std::size_t backtrack) {
    if (count == 0) throw ContractError("sample_videos: count must be positive");
    Tape tape;
    const auto tb = gan.temporal->params().bind(tape, false);
    const auto ib = gan.image.params().bind(tape, false);
    return generate(tape, gan, tb, ib, draw_latents(count, gan.latent_dim(), seed), oversample, backtrack).videos.value();
}

}  // namespace ndv
