#include "ndv/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "ndv/errors.hpp"

namespace ndv {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
    if (!value.all_finite()) throw NumericError("leaf: non-finite value");
    nodes_.push_back(Node{std::move(value), {}, {}, requires_grad});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
    if (!value.all_finite()) {
        throw NumericError(std::string(op) + ": non-finite output " + shape_string(value.shape()));
    }
    const bool needs_grad =
        std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
    Node node{std::move(value), std::move(inputs), {}, needs_grad};
    if (needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& loss) {
    if (&loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
    const Tensor& out = nodes_[loss.id()].value;
    if (out.numel() != 1) {
        throw ContractError("backward: loss must be scalar, got " + shape_string(out.shape()));
    }
    grads_.assign(loss.id() + 1, Tensor());
    grads_[loss.id()] = Tensor(out.shape(), 1.0);

    std::vector<Tensor*> input_grads;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& node = nodes_[id];
        if (grads_[id].empty() || !node.backward) continue;
        input_grads.clear();
        for (std::size_t in : node.inputs) {
            if (!nodes_[in].requires_grad) {
                input_grads.push_back(nullptr);
                continue;
            }
            if (grads_[in].empty()) grads_[in] = Tensor(nodes_[in].value.shape());
            input_grads.push_back(&grads_[in]);
        }
        node.backward(grads_[id], input_grads);
    }
}

Tensor Tape::grad(const Var& v) const {
    if (v.id() < grads_.size() && !grads_[v.id()].empty()) return grads_[v.id()];
    return Tensor(nodes_[v.id()].value.shape());
}

Activation parse_activation(const std::string& name) {
    if (name == "tanh") return Activation::tanh;
    if (name == "relu") return Activation::relu;
    if (name == "sigmoid") return Activation::sigmoid;
    throw ContractError("unknown activation '" + name + "'");
}

namespace {

void require_same_tape(const Var& a, const Var& b, const char* op) {
    if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    require_same_tape(a, b, op);
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Splits a shape around `axis` into (outer, axis length, inner).
struct AxisSplit {
    std::size_t outer = 1, length = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.length = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
    require_same_tape(a, b, "matmul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        throw ShapeError("matmul: cannot multiply " + shape_string(av.shape()) + " by " +
                         shape_string(bv.shape()));
    }
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out({m, n});
    const double* A = av.raw();
    const double* B = bv.raw();
    double* C = out.raw();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    Tape& tape = a.tape();
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record("matmul", std::move(out), {ia, ib},
                       [&tape, ia, ib, m, k, n](const Tensor& g, std::span<Tensor* const> grads) {
                           const double* A = tape.value(ia).raw();
                           const double* B = tape.value(ib).raw();
                           const double* G = g.raw();
                           if (grads[0] != nullptr) {
                               // dA = G * B^T
                               double* dA = grads[0]->raw();
                               for (std::size_t i = 0; i < m; ++i) {
                                   for (std::size_t p = 0; p < k; ++p) {
                                       const double* brow = B + p * n;
                                       const double* grow = G + i * n;
                                       double acc = 0.0;
                                       for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                                       dA[i * k + p] += acc;
                                   }
                               }
                           }
                           if (grads[1] != nullptr) {
                               // dB = A^T * G
                               double* dB = grads[1]->raw();
                               for (std::size_t i = 0; i < m; ++i) {
                                   const double* grow = G + i * n;
                                   for (std::size_t p = 0; p < k; ++p) {
                                       const double aip = A[i * k + p];
                                       double* drow = dB + p * n;
                                       for (std::size_t j = 0; j < n; ++j) drow[j] += aip * grow[j];
                                   }
                               }
                           }
                       });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
    return a.tape().record("add", std::move(out), {a.id(), b.id()},
                           [](const Tensor& g, std::span<Tensor* const> grads) {
                               for (Tensor* d : grads) {
                                   if (d == nullptr) continue;
                                   for (std::size_t i = 0; i < g.numel(); ++i) (*d)[i] += g[i];
                               }
                           });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
    return a.tape().record("sub", std::move(out), {a.id(), b.id()},
                           [](const Tensor& g, std::span<Tensor* const> grads) {
                               if (grads[0] != nullptr)
                                   for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[i] += g[i];
                               if (grads[1] != nullptr)
                                   for (std::size_t i = 0; i < g.numel(); ++i) (*grads[1])[i] -= g[i];
                           });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    Tape& tape = a.tape();
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record("mul", std::move(out), {ia, ib},
                       [&tape, ia, ib](const Tensor& g, std::span<Tensor* const> grads) {
                           const Tensor& av = tape.value(ia);
                           const Tensor& bv = tape.value(ib);
                           if (grads[0] != nullptr)
                               for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[i] += g[i] * bv[i];
                           if (grads[1] != nullptr)
                               for (std::size_t i = 0; i < g.numel(); ++i) (*grads[1])[i] += g[i] * av[i];
                       });
}

Var scale(const Var& a, double factor) {
    Tensor out = a.value();
    for (double& v : out.data()) v *= factor;
    return a.tape().record("scale", std::move(out), {a.id()},
                           [factor](const Tensor& g, std::span<Tensor* const> grads) {
                               for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[i] += factor * g[i];
                           });
}

Var add_scalar(const Var& a, double value) {
    Tensor out = a.value();
    for (double& v : out.data()) v += value;
    return a.tape().record("add_scalar", std::move(out), {a.id()},
                           [](const Tensor& g, std::span<Tensor* const> grads) {
                               for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[i] += g[i];
                           });
}

Var add_bias(const Var& x, const Var& bias) {
    require_same_tape(x, bias, "add_bias");
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    if (xv.rank() == 0 || bv.rank() != 1 || xv.shape().back() != bv.dim(0)) {
        throw ShapeError("add_bias: " + shape_string(xv.shape()) + " + " + shape_string(bv.shape()));
    }
    const std::size_t f = bv.dim(0);
    Tensor out = xv;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i % f];
    return x.tape().record("add_bias", std::move(out), {x.id(), bias.id()},
                           [f](const Tensor& g, std::span<Tensor* const> grads) {
                               if (grads[0] != nullptr)
                                   for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[i] += g[i];
                               if (grads[1] != nullptr)
                                   for (std::size_t i = 0; i < g.numel(); ++i) (*grads[1])[i % f] += g[i];
                           });
}

Var apply_activation(const Var& x, Activation kind) {
    Tensor out = x.value();
    const char* name = "tanh";
    switch (kind) {
        case Activation::tanh:
            for (double& v : out.data()) v = std::tanh(v);
            break;
        case Activation::relu:
            name = "relu";
            for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
            break;
        case Activation::sigmoid:
            name = "sigmoid";
            for (double& v : out.data()) v = sigmoid(v);
            break;
    }
    Tape& tape = x.tape();
    const std::size_t ix = x.id();
    const std::size_t iy = tape.size();  // id the output node will get
    return tape.record(name, std::move(out), {ix},
                       [&tape, ix, iy, kind](const Tensor& g, std::span<Tensor* const> grads) {
                           const Tensor& y = tape.value(iy);
                           const Tensor& xv = tape.value(ix);
                           Tensor& d = *grads[0];
                           switch (kind) {
                               case Activation::tanh:
                                   for (std::size_t i = 0; i < g.numel(); ++i) d[i] += g[i] * (1.0 - y[i] * y[i]);
                                   break;
                               case Activation::relu:
                                   for (std::size_t i = 0; i < g.numel(); ++i)
                                       if (xv[i] > 0.0) d[i] += g[i];
                                   break;
                               case Activation::sigmoid:
                                   for (std::size_t i = 0; i < g.numel(); ++i) d[i] += g[i] * y[i] * (1.0 - y[i]);
                                   break;
                           }
                       });
}

Var leaky_relu(const Var& x, double slope) {
    Tensor out = x.value();
    for (double& v : out.data()) v = v > 0.0 ? v : slope * v;
    Tape& tape = x.tape();
    const std::size_t ix = x.id();
    return tape.record("leaky_relu", std::move(out), {ix},
                       [&tape, ix, slope](const Tensor& g, std::span<Tensor* const> grads) {
                           const Tensor& xv = tape.value(ix);
                           for (std::size_t i = 0; i < g.numel(); ++i)
                               (*grads[0])[i] += xv[i] > 0.0 ? g[i] : slope * g[i];
                       });
}

Var softplus(const Var& x) {
    Tensor out = x.value();
    for (double& v : out.data()) v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
    Tape& tape = x.tape();
    const std::size_t ix = x.id();
    return tape.record("softplus", std::move(out), {ix},
                       [&tape, ix](const Tensor& g, std::span<Tensor* const> grads) {
                           const Tensor& xv = tape.value(ix);
                           for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[i] += g[i] * sigmoid(xv[i]);
                       });
}

Var reshape(const Var& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return x.tape().record("reshape", std::move(out), {x.id()},
                           [](const Tensor& g, std::span<Tensor* const> grads) {
                               for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[i] += g[i];
                           });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_string(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::vector<std::size_t> ids;
    std::vector<std::size_t> lengths;
    for (const Var& p : parts) {
        require_same_tape(parts[0], p, "concat");
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
        if (!ok) {
            throw ShapeError("concat: leading-dimension mismatch " + shape_string(first) + " vs " +
                             shape_string(s));
        }
        out_shape[axis] += s[axis];
        ids.push_back(p.id());
        lengths.push_back(s[axis]);
    }
    const AxisSplit split = split_at(out_shape, axis);
    Tensor out(out_shape);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        const std::size_t block = lengths[k] * split.inner;
        for (std::size_t o = 0; o < split.outer; ++o) {
            std::copy_n(v.raw() + o * block, block,
                        out.raw() + o * split.length * split.inner + offset * split.inner);
        }
        offset += lengths[k];
    }
    return parts[0].tape().record(
        "concat", std::move(out), ids,
        [split, lengths](const Tensor& g, std::span<Tensor* const> grads) {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < grads.size(); ++k) {
                const std::size_t block = lengths[k] * split.inner;
                if (grads[k] != nullptr) {
                    for (std::size_t o = 0; o < split.outer; ++o) {
                        const double* src = g.raw() + o * split.length * split.inner + offset * split.inner;
                        double* dst = grads[k]->raw() + o * block;
                        for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                    }
                }
                offset += lengths[k];
            }
        });
}

Var concat_features(const Var& a, const Var& b) {
    if (a.shape().empty()) throw ShapeError("concat_features: scalar input");
    const std::array<Var, 2> parts{a, b};
    return concat(parts, a.shape().size() - 1);
}

Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t length) {
    const Shape& in_shape = x.shape();
    if (axis >= in_shape.size() || start + length > in_shape[axis]) {
        throw ShapeError("slice: [" + std::to_string(start) + ", +" + std::to_string(length) + ") on axis " +
                         std::to_string(axis) + " of " + shape_string(in_shape));
    }
    const AxisSplit split = split_at(in_shape, axis);
    Shape out_shape = in_shape;
    out_shape[axis] = length;
    Tensor out(out_shape);
    const std::size_t block = length * split.inner;
    const Tensor& v = x.value();
    for (std::size_t o = 0; o < split.outer; ++o) {
        std::copy_n(v.raw() + o * split.length * split.inner + start * split.inner, block, out.raw() + o * block);
    }
    return x.tape().record("slice", std::move(out), {x.id()},
                           [split, start, block](const Tensor& g, std::span<Tensor* const> grads) {
                               for (std::size_t o = 0; o < split.outer; ++o) {
                                   double* dst = grads[0]->raw() + o * split.length * split.inner +
                                                 start * split.inner;
                                   const double* src = g.raw() + o * block;
                                   for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                               }
                           });
}

Var swap_leading_axes(const Var& x) {
    const Shape& in_shape = x.shape();
    if (in_shape.size() < 2) throw ShapeError("swap_leading_axes: need rank >= 2, got " + shape_string(in_shape));
    const std::size_t a = in_shape[0], b = in_shape[1], inner = shape_numel(in_shape) / std::max<std::size_t>(a * b, 1);
    Shape out_shape = in_shape;
    std::swap(out_shape[0], out_shape[1]);
    Tensor out(out_shape);
    const Tensor& v = x.value();
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j)
            std::copy_n(v.raw() + (i * b + j) * inner, inner, out.raw() + (j * a + i) * inner);
    return x.tape().record("swap_leading_axes", std::move(out), {x.id()},
                           [a, b, inner](const Tensor& g, std::span<Tensor* const> grads) {
                               for (std::size_t i = 0; i < a; ++i)
                                   for (std::size_t j = 0; j < b; ++j) {
                                       double* dst = grads[0]->raw() + (i * b + j) * inner;
                                       const double* src = g.raw() + (j * a + i) * inner;
                                       for (std::size_t e = 0; e < inner; ++e) dst[e] += src[e];
                                   }
                           });
}

Var sum(const Var& x) {
    double total = 0.0;
    for (double v : x.value().data()) total += v;
    return x.tape().record("sum", Tensor::scalar(total), {x.id()},
                           [](const Tensor& g, std::span<Tensor* const> grads) {
                               const double gv = g[0];
                               for (double& d : grads[0]->data()) d += gv;
                           });
}

Var mean(const Var& x) {
    const std::size_t n = x.value().numel();
    if (n == 0) throw ContractError("mean: empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var softmax_cross_entropy(const Var& logits, std::span<const std::size_t> labels) {
    const Tensor& z = logits.value();
    if (z.rank() != 2 || z.dim(0) != labels.size() || z.dim(0) == 0) {
        throw ShapeError("softmax_cross_entropy: logits " + shape_string(z.shape()) + " with " +
                         std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = z.dim(0), k = z.dim(1);
    for (std::size_t label : labels) {
        if (label >= k) throw ContractError("softmax_cross_entropy: label out of range");
    }
    Tensor probs = softmax_rows(z);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = z.raw() + i * k;
        const double mx = *std::max_element(row, row + k);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
        loss += mx + std::log(s) - row[labels[i]];
    }
    loss /= static_cast<double>(n);
    std::vector<std::size_t> label_copy(labels.begin(), labels.end());
    return logits.tape().record(
        "softmax_cross_entropy", Tensor::scalar(loss), {logits.id()},
        [probs = std::move(probs), label_copy, n, k](const Tensor& g, std::span<Tensor* const> grads) {
            const double scale_factor = g[0] / static_cast<double>(n);
            Tensor& d = *grads[0];
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    const double target = j == label_copy[i] ? 1.0 : 0.0;
                    d[i * k + j] += scale_factor * (probs[i * k + j] - target);
                }
            }
        });
}

Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax_rows: expected matrix, got " + shape_string(logits.shape()));
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.raw() + i * k;
        double* o = out.raw() + i * k;
        const double mx = *std::max_element(row, row + k);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += (o[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < k; ++j) o[j] /= s;
    }
    return out;
}

}  // namespace ndv
