#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ndv/parameters.hpp"
#include "ndv/tensor.hpp"

namespace ndv {

struct AdamHyper {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamHyper hyper;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::uint64_t step = 0;
};

// Bias-corrected Adam. Moment buffers are created on the first call.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state);
void adam_step(ParameterStore& store, AdamState& state);

}  // namespace ndv
