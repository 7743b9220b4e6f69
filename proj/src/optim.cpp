#include "ndv/optim.hpp"

#include <cmath>

#include "ndv/errors.hpp"

namespace ndv {

namespace {

template <class ParamAt, class GradAt>
void adam_update(std::size_t count, ParamAt param_at, GradAt grad_at, AdamState& state) {
    const AdamHyper& h = state.hyper;
    if (!(h.lr > 0.0)) throw ContractError("adam_step: learning rate must be positive");
    if (state.first_moment.empty()) {
        for (std::size_t i = 0; i < count; ++i) {
            state.first_moment.emplace_back(param_at(i).shape());
            state.second_moment.emplace_back(param_at(i).shape());
        }
    }
    if (state.first_moment.size() != count) throw ContractError("adam_step: state/param count mismatch");
    for (std::size_t i = 0; i < count; ++i) {
        const Shape& ps = param_at(i).shape();
        if (ps != grad_at(i).shape() || ps != state.first_moment[i].shape()) {
            throw ContractError("adam_step: shape mismatch at parameter " + std::to_string(i) + ": " +
                                shape_string(ps) + " vs grad " + shape_string(grad_at(i).shape()));
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(h.beta1, t);
    const double c2 = 1.0 - std::pow(h.beta2, t);
    for (std::size_t i = 0; i < count; ++i) {
        Tensor& p = param_at(i);
        const Tensor& g = grad_at(i);
        Tensor& m = state.first_moment[i];
        Tensor& v = state.second_moment[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
            m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
            v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
            p[j] -= h.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + h.eps);
        }
    }
}

}  // namespace

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
    if (params.size() != grads.size()) throw ContractError("adam_step: params/grads count mismatch");
    adam_update(
        params.size(), [&](std::size_t i) -> Tensor& { return params[i]; },
        [&](std::size_t i) -> const Tensor& { return grads[i]; }, state);
}

void adam_step(ParameterStore& store, AdamState& state) {
    adam_update(
        store.size(), [&](std::size_t i) -> Tensor& { return store[i].value; },
        [&](std::size_t i) -> const Tensor& { return store[i].grad; }, state);
}

}  // namespace ndv
