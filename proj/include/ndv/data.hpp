#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ndv/tensor.hpp"

namespace ndv {

enum class SyntheticKind { bouncing_ball, moving_bar };

std::string to_string(SyntheticKind kind);
SyntheticKind parse_synthetic_kind(const std::string& name);

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::moving_bar;
    std::size_t num_classes = 2;
    std::size_t frames = 8;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t samples_per_class = 128;
    std::uint64_t seed = 7;

    void validate() const;
};

// Videos stored as [N, T, 1, H, W]; labels are motion classes.
struct LabeledVideos {
    Tensor videos;
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t frames() const { return videos.dim(1); }
    std::size_t height() const { return videos.dim(3); }
    std::size_t width() const { return videos.dim(4); }
    // One video as [T, 1, H, W].
    Tensor video(std::size_t index) const;
    // Rows [start, start + count) as [count, 1, T, H, W] (channel-first for 3-D convs).
    Tensor batch_channel_first(std::size_t start, std::size_t count) const;
    Tensor gather_channel_first(const std::vector<std::size_t>& indices) const;
};

// Pixel levels of empty and fully covered pixels. Kept inside (0, 1) so a
// sigmoid output head can reach them with finite pre-activations.
inline constexpr double kBackgroundLevel = 0.1;
inline constexpr double kForegroundLevel = 0.9;

// Deterministic closed-form renderers. Classes interleave (label = i % K);
// pixel = background + (foreground - background) * coverage.
//  moving_bar: a bar of thickness max(1, extent / 8) translating 1 px/frame
//    with wraparound; class 0 right, 1 left, 2 down, 3 up (K <= 4).
//  bouncing_ball: a soft disk of radius max(1, min(H, W) / 8) moving at
//    1 px/frame along angle 2*pi*c/K + pi/8, reflecting off the borders.
LabeledVideos synth_dataset(const SyntheticSpec& spec);

// Bar thickness used by the moving_bar renderer along an axis of `extent` pixels.
std::size_t bar_thickness(std::size_t extent);

}  // namespace ndv
