#include "ndv/parameters.hpp"

#include <cmath>

#include "ndv/errors.hpp"

namespace ndv {

std::size_t ParameterStore::add(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor value(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
    for (double& v : value.data()) v = rng.uniform(-bound, bound);
    return add(std::move(name), std::move(value));
}

std::size_t ParameterStore::add(std::string name, Tensor value) {
    Tensor grad = Tensor::zeros_like(value);
    params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
    return params_.size() - 1;
}

std::size_t ParameterStore::count() const noexcept {
    std::size_t total = 0;
    for (const auto& p : params_) total += p.value.numel();
    return total;
}

Parameter& ParameterStore::find(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return p;
    throw ContractError("parameter '" + name + "' not found");
}

std::vector<Var> ParameterStore::bind(Tape& tape, bool requires_grad) const {
    std::vector<Var> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(tape.leaf(p.value, requires_grad));
    return out;
}

void ParameterStore::pull_grads(const Tape& tape, const std::vector<Var>& bound) {
    if (bound.size() != params_.size()) throw ContractError("pull_grads: bound/parameter count mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].grad = tape.grad(bound[i]);
}

void ParameterStore::zero_grads() {
    for (auto& p : params_) p.grad.fill(0.0);
}

}  // namespace ndv
