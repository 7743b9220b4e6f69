#include "ndv/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ndv/errors.hpp"
#include "ndv/rng.hpp"

namespace ndv {

std::string to_string(SyntheticKind kind) {
    return kind == SyntheticKind::moving_bar ? "moving_bar" : "bouncing_ball";
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
    if (name == "moving_bar") return SyntheticKind::moving_bar;
    if (name == "bouncing_ball") return SyntheticKind::bouncing_ball;
    throw ConfigError("unknown dataset kind '" + name + "' (expected moving_bar, bouncing_ball)");
}

std::size_t bar_thickness(std::size_t extent) { return std::max<std::size_t>(1, extent / 8); }

namespace {

std::size_t ball_radius(std::size_t height, std::size_t width) {
    return std::max<std::size_t>(1, std::min(height, width) / 8);
}

// Position bouncing between lo and hi (inclusive) for an unbounded coordinate.
double reflect(double x, double lo, double hi) {
    const double span = hi - lo;
    if (span <= 0.0) return lo;
    double u = std::fmod(x - lo, 2.0 * span);
    if (u < 0.0) u += 2.0 * span;
    return lo + (u <= span ? u : 2.0 * span - u);
}

double level(double coverage) { return kBackgroundLevel + (kForegroundLevel - kBackgroundLevel) * coverage; }

}  // namespace

void SyntheticSpec::validate() const {
    if (num_classes < 2) throw ConfigError("dataset.num_classes must be >= 2");
    if (frames < 2) throw ConfigError("dataset.frames must be >= 2");
    if (samples_per_class < 1) throw ConfigError("dataset.samples_per_class must be >= 1");
    if (kind == SyntheticKind::moving_bar) {
        if (num_classes > 4) throw ConfigError("dataset.num_classes must be <= 4 for moving_bar (four directions)");
        if (height < 4 || width < 4) throw ConfigError("dataset: moving_bar needs height and width >= 4");
    } else {
        const std::size_t r = ball_radius(height, width);
        if (2 * r + 2 > std::min(height, width)) {
            throw ConfigError("dataset: ball of radius " + std::to_string(r) + " does not fit in " +
                              std::to_string(height) + "x" + std::to_string(width));
        }
    }
}

Tensor LabeledVideos::video(std::size_t index) const {
    const std::size_t per = videos.numel() / size();
    Shape shape(videos.shape().begin() + 1, videos.shape().end());
    return Tensor(std::move(shape), std::vector<double>(videos.raw() + index * per, videos.raw() + (index + 1) * per));
}

Tensor LabeledVideos::gather_channel_first(const std::vector<std::size_t>& indices) const {
    const std::size_t per = videos.numel() / size();
    Tensor out({indices.size(), 1, frames(), height(), width()});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= size()) throw ContractError("dataset: index out of range");
        std::copy_n(videos.raw() + indices[i] * per, per, out.raw() + i * per);
    }
    return out;
}

Tensor LabeledVideos::batch_channel_first(std::size_t start, std::size_t count) const {
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
    return gather_channel_first(idx);
}

LabeledVideos synth_dataset(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t k = spec.num_classes, n = k * spec.samples_per_class;
    const std::size_t t_count = spec.frames, h = spec.height, w = spec.width;
    LabeledVideos out;
    out.num_classes = k;
    out.videos = Tensor({n, t_count, 1, h, w});
    out.labels.resize(n);
    const std::size_t frame_size = h * w;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % k;
        out.labels[i] = label;
        Rng rng(derive_seed(spec.seed, 0x5eed, i));
        double* video = out.videos.raw() + i * t_count * frame_size;
        if (spec.kind == SyntheticKind::moving_bar) {
            const bool horizontal_motion = label < 2;
            const std::size_t extent = horizontal_motion ? w : h;
            const std::size_t thickness = bar_thickness(extent);
            const std::size_t start = rng.below(extent);
            const bool positive = label == 0 || label == 2;
            for (std::size_t t = 0; t < t_count; ++t) {
                const std::size_t shift = t % extent;
                const std::size_t pos = positive ? (start + shift) % extent : (start + extent - shift) % extent;
                double* frame = video + t * frame_size;
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x = 0; x < w; ++x) {
                        const std::size_t coord = horizontal_motion ? x : y;
                        frame[y * w + x] = level((coord + extent - pos) % extent < thickness ? 1.0 : 0.0);
                    }
            }
        } else {
            const double r = static_cast<double>(ball_radius(h, w));
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(label) / static_cast<double>(k) +
                                 std::numbers::pi / 8.0;
            const double x_lo = r, x_hi = static_cast<double>(w) - 1.0 - r;
            const double y_lo = r, y_hi = static_cast<double>(h) - 1.0 - r;
            const double x0 = rng.uniform(x_lo, x_hi), y0 = rng.uniform(y_lo, y_hi);
            for (std::size_t t = 0; t < t_count; ++t) {
                const double cx = reflect(x0 + std::cos(angle) * static_cast<double>(t), x_lo, x_hi);
                const double cy = reflect(y0 + std::sin(angle) * static_cast<double>(t), y_lo, y_hi);
                double* frame = video + t * frame_size;
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x = 0; x < w; ++x) {
                        const double dist = std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy);
                        frame[y * w + x] = level(std::clamp(r + 0.5 - dist, 0.0, 1.0));
                    }
            }
        }
    }
    return out;
}

}  // namespace ndv
