#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ndv/autodiff.hpp"
#include "ndv/rng.hpp"
#include "ndv/tensor.hpp"

namespace ndv {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Learnable tensors of one network, in registration order.
class ParameterStore {
public:
    // Registers a tensor drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    std::size_t add(std::string name, Shape shape, std::size_t fan_in, Rng& rng);
    std::size_t add(std::string name, Tensor value);

    std::size_t size() const noexcept { return params_.size(); }
    std::size_t count() const noexcept;

    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }
    Parameter& find(const std::string& name);
    std::vector<Parameter>& all() noexcept { return params_; }
    const std::vector<Parameter>& all() const noexcept { return params_; }

    // Puts every parameter on `tape` as a grad-requiring leaf.
    std::vector<Var> bind(Tape& tape, bool requires_grad = true) const;
    // Copies the tape's gradients of the bound leaves into Parameter::grad.
    void pull_grads(const Tape& tape, const std::vector<Var>& bound);
    void zero_grads();

private:
    std::vector<Parameter> params_;
};

}  // namespace ndv
