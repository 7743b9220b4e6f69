#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ndv/tensor.hpp"

namespace ndv {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t dim(std::size_t axis) const { return value().dim(axis); }
    bool requires_grad() const;
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

// Receives the output gradient and accumulates into each input's gradient.
// An entry of `input_grads` is null when that input does not require grad.
using BackwardFn =
    std::function<void(const Tensor& grad_out, std::span<Tensor* const> input_grads)>;

// Ordered record of forward operations. Nodes are appended in evaluation
// order, so every node's inputs precede it; backward walks ids downwards.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    // Appends an op node. `value` must be finite (NumericError otherwise,
    // naming `op`). The backward closure is dropped when no input needs grad.
    Var record(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Reverse sweep from a scalar loss. Clears gradients from any earlier
    // sweep first, so a tape can be reused for several losses.
    void backward(const Var& loss);

    // Gradient of the last backward() loss w.r.t. `v`; zeros when `v` was
    // not reached.
    Tensor grad(const Var& v) const;

private:
    struct Node {
        Tensor value;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
    };

    std::deque<Node> nodes_;  // deque: references to values stay valid as the tape grows
    std::vector<Tensor> grads_;
};

enum class Activation { tanh, relu, sigmoid };

Activation parse_activation(const std::string& name);

// Spatial convolution geometry over 1..3 trailing axes.
struct ConvGeometry {
    std::size_t spatial_dims = 1;
    std::array<std::size_t, 3> kernel{1, 1, 1};
    std::array<std::size_t, 3> stride{1, 1, 1};
    std::array<std::size_t, 3> padding{0, 0, 0};

    static ConvGeometry uniform(std::size_t dims, std::size_t kernel, std::size_t stride,
                                std::size_t padding);
    // Output length of a regular convolution along axis `axis`.
    std::size_t conv_out(std::size_t axis, std::size_t in) const;
    // Output length of a transposed convolution along axis `axis`.
    std::size_t transposed_out(std::size_t axis, std::size_t in) const;
};

// ---- elementwise / linear algebra ---------------------------------------
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double value);
// x[..., F] + b[F]
Var add_bias(const Var& x, const Var& bias);
Var apply_activation(const Var& x, Activation kind);
Var leaky_relu(const Var& x, double slope);
// log(1 + exp(x)), numerically stable.
Var softplus(const Var& x);

// ---- shape ----------------------------------------------------------------
Var reshape(const Var& x, Shape shape);
Var concat(std::span<const Var> parts, std::size_t axis);
// Last-axis concatenation, a's features first.
Var concat_features(const Var& a, const Var& b);
Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t length);
// [A, B, rest...] -> [B, A, rest...].
Var swap_leading_axes(const Var& x);

// ---- reductions -----------------------------------------------------------
Var sum(const Var& x);
Var mean(const Var& x);
// Mean over rows of softmax cross entropy; logits [N, K], labels in [0, K).
Var softmax_cross_entropy(const Var& logits, std::span<const std::size_t> labels);

// ---- convolutions ---------------------------------------------------------
// x [N, Cin, spatial...], weight [Cout, Cin, kernel...], bias [Cout].
Var conv(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& geometry);
// x [N, Cin, spatial...], weight [Cin, Cout, kernel...], bias [Cout].
Var conv_transpose(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& geometry);

// Row-wise softmax of a [N, K] tensor (no tape).
Tensor softmax_rows(const Tensor& logits);

}  // namespace ndv
