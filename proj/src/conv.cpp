#include <algorithm>
#include <array>
#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "ndv/autodiff.hpp"
#include "ndv/errors.hpp"

namespace ndv {

ConvGeometry ConvGeometry::uniform(std::size_t dims, std::size_t kernel, std::size_t stride,
                                   std::size_t padding) {
    if (dims < 1 || dims > 3) throw ContractError("conv: 1 to 3 spatial dims supported");
    ConvGeometry g;
    g.spatial_dims = dims;
    for (std::size_t i = 0; i < dims; ++i) {
        g.kernel[i] = kernel;
        g.stride[i] = stride;
        g.padding[i] = padding;
    }
    return g;
}

std::size_t ConvGeometry::conv_out(std::size_t axis, std::size_t in) const {
    const std::size_t padded = in + 2 * padding[axis];
    if (padded < kernel[axis]) return 0;
    return (padded - kernel[axis]) / stride[axis] + 1;
}

std::size_t ConvGeometry::transposed_out(std::size_t axis, std::size_t in) const {
    if (in == 0) return 0;
    const std::size_t full = (in - 1) * stride[axis] + kernel[axis];
    if (full <= 2 * padding[axis]) return 0;
    return full - 2 * padding[axis];
}

namespace {

// Both convolution flavours share one index relation between a "small"
// grid and a "big" grid:  big = small * stride + k - padding.
// Regular conv: small = output, big = input, weight [small_ch, big_ch, k].
// Transposed:   small = input,  big = output, weight [small_ch, big_ch, k].
struct Plan {
    std::size_t batch = 0, small_ch = 0, big_ch = 0;
    std::array<std::size_t, 3> small{1, 1, 1}, big{1, 1, 1}, kernel{1, 1, 1}, stride{1, 1, 1}, padding{0, 0, 0};
    // ranges[axis][k] = [lo, hi) of small indices mapping inside the big grid.
    std::array<std::vector<std::pair<std::size_t, std::size_t>>, 3> ranges;

    std::size_t small_volume() const { return small[0] * small[1] * small[2]; }
    std::size_t big_volume() const { return big[0] * big[1] * big[2]; }
    std::size_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }

    void build_ranges() {
        for (std::size_t a = 0; a < 3; ++a) {
            ranges[a].resize(kernel[a]);
            for (std::size_t k = 0; k < kernel[a]; ++k) {
                // big = s*small + k - p  in [0, big)
                std::size_t lo = 0;
                if (padding[a] > k) lo = (padding[a] - k + stride[a] - 1) / stride[a];
                std::size_t hi = 0;
                if (big[a] + padding[a] > k) hi = (big[a] + padding[a] - k - 1) / stride[a] + 1;
                hi = std::min(hi, small[a]);
                ranges[a][k] = {lo, std::max(lo, hi)};
            }
        }
    }
};

enum class Mode { small_from_big, big_from_small, weight_grad };

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;

// offsets[k * svol + s]: big-grid cell read by kernel tap k at small cell s, or -1.
std::shared_ptr<const std::vector<std::ptrdiff_t>> build_offsets(const Plan& p) {
    const std::size_t svol = p.small_volume();
    auto table = std::make_shared<std::vector<std::ptrdiff_t>>(p.kernel_volume() * svol, -1);
    std::size_t k = 0;
    for (std::size_t kd = 0; kd < p.kernel[0]; ++kd)
        for (std::size_t kh = 0; kh < p.kernel[1]; ++kh)
            for (std::size_t kw = 0; kw < p.kernel[2]; ++kw, ++k) {
                const auto [d_lo, d_hi] = p.ranges[0][kd];
                const auto [h_lo, h_hi] = p.ranges[1][kh];
                const auto [w_lo, w_hi] = p.ranges[2][kw];
                for (std::size_t sd = d_lo; sd < d_hi; ++sd)
                    for (std::size_t sh = h_lo; sh < h_hi; ++sh)
                        for (std::size_t sw = w_lo; sw < w_hi; ++sw) {
                            const std::size_t bd = sd * p.stride[0] + kd - p.padding[0];
                            const std::size_t bh = sh * p.stride[1] + kh - p.padding[1];
                            const std::size_t bw = sw * p.stride[2] + kw - p.padding[2];
                            (*table)[k * svol + (sd * p.small[1] + sh) * p.small[2] + sw] =
                                static_cast<std::ptrdiff_t>((bd * p.big[1] + bh) * p.big[2] + bw);
                        }
            }
    return table;
}

// Per-sample im2col + GEMM; each sample's arithmetic is independent of the
// batch size, so a row's result does not change with the batch it sits in.
template <Mode mode>
void run(const Plan& p, const std::vector<std::ptrdiff_t>& offsets, double* small, double* big, double* weight) {
    const std::size_t svol = p.small_volume(), bvol = p.big_volume(), kvol = p.kernel_volume();
    const auto rows = static_cast<Eigen::Index>(p.big_ch * kvol);
    RowMat col(rows, static_cast<Eigen::Index>(svol));
    MapMat w(weight, static_cast<Eigen::Index>(p.small_ch), rows);
    for (std::size_t n = 0; n < p.batch; ++n) {
        MapMat sm(small + n * p.small_ch * svol, static_cast<Eigen::Index>(p.small_ch), static_cast<Eigen::Index>(svol));
        double* bp = big + n * p.big_ch * bvol;
        if constexpr (mode == Mode::big_from_small) {
            col.noalias() = w.transpose() * sm;
            const double* c = col.data();
            for (std::size_t bc = 0; bc < p.big_ch; ++bc) {
                double* bch = bp + bc * bvol;
                for (std::size_t i = 0; i < kvol * svol; ++i, ++c)
                    if (offsets[i] >= 0) bch[offsets[i]] += *c;
            }
        } else {
            double* c = col.data();
            for (std::size_t bc = 0; bc < p.big_ch; ++bc) {
                const double* bch = bp + bc * bvol;
                for (std::size_t i = 0; i < kvol * svol; ++i, ++c) *c = offsets[i] >= 0 ? bch[offsets[i]] : 0.0;
            }
            if constexpr (mode == Mode::small_from_big) sm.noalias() += w * col;
            else w.noalias() += sm * col.transpose();
        }
    }
}

// Maps the trailing `dims` spatial axes of `shape` (after N, C) into a 3-vector.
std::array<std::size_t, 3> spatial3(const Shape& shape, std::size_t dims) {
    std::array<std::size_t, 3> out{1, 1, 1};
    for (std::size_t i = 0; i < dims; ++i) out[3 - dims + i] = shape[2 + i];
    return out;
}

std::array<std::size_t, 3> pad3(const std::array<std::size_t, 3>& v, std::size_t dims, std::size_t fill) {
    std::array<std::size_t, 3> out{fill, fill, fill};
    for (std::size_t i = 0; i < dims; ++i) out[3 - dims + i] = v[i];
    return out;
}

void check_conv_inputs(const char* op, const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g,
                       std::size_t in_ch_axis_of_weight, std::size_t out_ch_axis_of_weight) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    const Shape& bs = bias.shape();
    const std::size_t rank = 2 + g.spatial_dims;
    bool ok = xs.size() == rank && ws.size() == rank && bs.size() == 1 &&
              xs[1] == ws[in_ch_axis_of_weight] && bs[0] == ws[out_ch_axis_of_weight];
    for (std::size_t i = 0; ok && i < g.spatial_dims; ++i) ok = ws[2 + i] == g.kernel[i] && g.stride[i] > 0;
    if (!ok) {
        throw ShapeError(std::string(op) + ": input " + shape_string(xs) + ", weight " + shape_string(ws) +
                         ", bias " + shape_string(bs) + " inconsistent with geometry");
    }
    if (&x.tape() != &weight.tape() || &x.tape() != &bias.tape()) {
        throw ContractError(std::string(op) + ": operands on different tapes");
    }
}

void add_channel_bias(Tensor& out, const Tensor& bias, std::size_t channels, std::size_t volume) {
    const std::size_t batch = out.numel() / (channels * volume);
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < channels; ++c) {
            double* o = out.raw() + (n * channels + c) * volume;
            const double b = bias[c];
            for (std::size_t i = 0; i < volume; ++i) o[i] += b;
        }
}

void channel_bias_grad(const Tensor& g, Tensor& db, std::size_t channels, std::size_t volume) {
    const std::size_t batch = g.numel() / (channels * volume);
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < channels; ++c) {
            const double* gp = g.raw() + (n * channels + c) * volume;
            double acc = 0.0;
            for (std::size_t i = 0; i < volume; ++i) acc += gp[i];
            db[c] += acc;
        }
}

}  // namespace

Var conv(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g) {
    check_conv_inputs("conv", x, weight, bias, g, 1, 0);
    const Shape& xs = x.shape();
    Plan plan;
    plan.batch = xs[0];
    plan.big_ch = xs[1];
    plan.small_ch = weight.shape()[0];
    plan.big = spatial3(xs, g.spatial_dims);
    plan.kernel = pad3(g.kernel, g.spatial_dims, 1);
    plan.stride = pad3(g.stride, g.spatial_dims, 1);
    plan.padding = pad3(g.padding, g.spatial_dims, 0);
    Shape out_shape{plan.batch, plan.small_ch};
    for (std::size_t i = 0; i < g.spatial_dims; ++i) {
        const std::size_t o = g.conv_out(i, xs[2 + i]);
        if (o == 0) throw ShapeError("conv: input " + shape_string(xs) + " smaller than kernel");
        out_shape.push_back(o);
    }
    plan.small = spatial3(out_shape, g.spatial_dims);
    plan.build_ranges();
    const auto offsets = build_offsets(plan);

    Tensor out(out_shape);
    run<Mode::small_from_big>(plan, *offsets, out.raw(), const_cast<double*>(x.value().raw()),
                              const_cast<double*>(weight.value().raw()));
    add_channel_bias(out, bias.value(), plan.small_ch, plan.small_volume());

    Tape& tape = x.tape();
    const std::size_t ix = x.id(), iw = weight.id();
    return tape.record("conv", std::move(out), {ix, iw, bias.id()},
                       [&tape, ix, iw, plan, offsets](const Tensor& gout, std::span<Tensor* const> grads) {
                           double* g = const_cast<double*>(gout.raw());
                           if (grads[0] != nullptr)
                               run<Mode::big_from_small>(plan, *offsets, g, grads[0]->raw(),
                                                         const_cast<double*>(tape.value(iw).raw()));
                           if (grads[1] != nullptr)
                               run<Mode::weight_grad>(plan, *offsets, g, const_cast<double*>(tape.value(ix).raw()),
                                                      grads[1]->raw());
                           if (grads[2] != nullptr)
                               channel_bias_grad(gout, *grads[2], plan.small_ch, plan.small_volume());
                       });
}

Var conv_transpose(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g) {
    check_conv_inputs("conv_transpose", x, weight, bias, g, 0, 1);
    const Shape& xs = x.shape();
    Plan plan;
    plan.batch = xs[0];
    plan.small_ch = xs[1];
    plan.big_ch = weight.shape()[1];
    plan.small = spatial3(xs, g.spatial_dims);
    plan.kernel = pad3(g.kernel, g.spatial_dims, 1);
    plan.stride = pad3(g.stride, g.spatial_dims, 1);
    plan.padding = pad3(g.padding, g.spatial_dims, 0);
    Shape out_shape{plan.batch, plan.big_ch};
    for (std::size_t i = 0; i < g.spatial_dims; ++i) {
        const std::size_t o = g.transposed_out(i, xs[2 + i]);
        if (o == 0) throw ShapeError("conv_transpose: empty output for input " + shape_string(xs));
        out_shape.push_back(o);
    }
    plan.big = spatial3(out_shape, g.spatial_dims);
    plan.build_ranges();
    const auto offsets = build_offsets(plan);

    Tensor out(out_shape);
    run<Mode::big_from_small>(plan, *offsets, const_cast<double*>(x.value().raw()), out.raw(),
                              const_cast<double*>(weight.value().raw()));
    add_channel_bias(out, bias.value(), plan.big_ch, plan.big_volume());

    Tape& tape = x.tape();
    const std::size_t ix = x.id(), iw = weight.id();
    return tape.record("conv_transpose", std::move(out), {ix, iw, bias.id()},
                       [&tape, ix, iw, plan, offsets](const Tensor& gout, std::span<Tensor* const> grads) {
                           double* g = const_cast<double*>(gout.raw());
                           if (grads[0] != nullptr)
                               run<Mode::small_from_big>(plan, *offsets, grads[0]->raw(), g,
                                                         const_cast<double*>(tape.value(iw).raw()));
                           if (grads[1] != nullptr)
                               run<Mode::weight_grad>(plan, *offsets, const_cast<double*>(tape.value(ix).raw()), g,
                                                      grads[1]->raw());
                           if (grads[2] != nullptr)
                               channel_bias_grad(gout, *grads[2], plan.big_ch, plan.big_volume());
                       });
}

}  // namespace ndv
