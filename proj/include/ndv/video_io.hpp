#pragma once

#include <filesystem>
#include <string>

#include "ndv/tensor.hpp"

namespace ndv {

// NDEV: "NDEV", version byte 1, u32 LE T, C, H, W, then T*C*H*W float32 LE
// in (t, c, h, w) order. Pixels must lie in [0, 1].
std::string encode_ndev(const Tensor& video);  // video [T, C, H, W]
Tensor decode_ndev(const std::string& bytes);
void write_ndev(const std::filesystem::path& path, const Tensor& video);
Tensor read_ndev(const std::filesystem::path& path);

// Binary PGM (P5, maxval 255); pixel value round(p * 255).
std::string encode_pgm(const double* frame, std::size_t height, std::size_t width);
// One frame_NNNN.pgm per frame of a [T, 1, H, W] video.
void write_pgm_frames(const std::filesystem::path& dir, const Tensor& video);

// Row `index` of a [B, 1, T, H, W] batch as a [T, 1, H, W] video.
Tensor video_from_batch(const Tensor& batch, std::size_t index);

}  // namespace ndv
