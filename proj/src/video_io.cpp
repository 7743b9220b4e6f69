#include "ndv/video_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>

#include "ndv/checkpoint.hpp"
#include "ndv/errors.hpp"

namespace ndv {

namespace {

void check_pixels(const Tensor& video) {
    for (double v : video.data())
        if (!(v >= 0.0 && v <= 1.0)) throw ContractError("video pixels must lie in [0, 1]");
}

void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

}  // namespace

std::string encode_ndev(const Tensor& video) {
    if (video.rank() != 4) throw ShapeError("ndev: expected [T, C, H, W], got " + shape_string(video.shape()));
    check_pixels(video);
    std::string out = "NDEV";
    out.push_back(1);
    for (std::size_t i = 0; i < 4; ++i) {
        if (video.dim(i) > UINT32_MAX) throw ShapeError("ndev: dimension too large");
        put_u32(out, static_cast<std::uint32_t>(video.dim(i)));
    }
    out.reserve(out.size() + 4 * video.numel());
    for (double v : video.data()) {
        const float f = static_cast<float>(v);
        char b[4];
        std::memcpy(b, &f, 4);
        out.append(b, 4);
    }
    return out;
}

Tensor decode_ndev(const std::string& bytes) {
    if (bytes.size() < 21 || bytes.compare(0, 4, "NDEV") != 0) throw IoError("ndev: bad magic or short header");
    if (bytes[4] != 1) throw IoError("ndev: unsupported version " + std::to_string(static_cast<unsigned char>(bytes[4])));
    Shape shape(4);
    for (std::size_t i = 0; i < 4; ++i) {
        std::uint32_t v;
        std::memcpy(&v, bytes.data() + 5 + 4 * i, 4);
        shape[i] = v;
    }
    const std::size_t n = shape_numel(shape);
    if (bytes.size() != 21 + 4 * n) throw IoError("ndev: payload size does not match header " + shape_string(shape));
    Tensor out(shape);
    for (std::size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, bytes.data() + 21 + 4 * i, 4);
        out[i] = f;
    }
    return out;
}

void write_ndev(const std::filesystem::path& path, const Tensor& video) { write_file(path, encode_ndev(video)); }

Tensor read_ndev(const std::filesystem::path& path) { return decode_ndev(read_file(path)); }

std::string encode_pgm(const double* frame, std::size_t height, std::size_t width) {
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    for (std::size_t i = 0; i < height * width; ++i) {
        const double p = frame[i];
        if (!(p >= 0.0 && p <= 1.0)) throw ContractError("pgm: pixel outside [0, 1]");
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(p * 255.0))));
    }
    return out;
}

void write_pgm_frames(const std::filesystem::path& dir, const Tensor& video) {
    if (video.rank() != 4 || video.dim(1) != 1)
        throw ShapeError("pgm: expected [T, 1, H, W], got " + shape_string(video.shape()));
    const std::size_t h = video.dim(2), w = video.dim(3);
    std::filesystem::create_directories(dir);
    for (std::size_t t = 0; t < video.dim(0); ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.pgm", t);
        write_file(dir / name, encode_pgm(video.raw() + t * h * w, h, w));
    }
}

Tensor video_from_batch(const Tensor& batch, std::size_t index) {
    if (batch.rank() != 5 || batch.dim(1) != 1 || index >= batch.dim(0))
        throw ShapeError("video_from_batch: expected [B, 1, T, H, W], got " + shape_string(batch.shape()));
    const std::size_t t = batch.dim(2), h = batch.dim(3), w = batch.dim(4), per = t * h * w;
    return Tensor({t, 1, h, w}, std::vector<double>(batch.raw() + index * per, batch.raw() + (index + 1) * per));
}

}  // namespace ndv
