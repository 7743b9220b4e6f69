#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ndv/autodiff.hpp"
#include "ndv/tensor.hpp"

namespace ndv {

// Scalar objective of a list of parameter tensors, built on the given tape.
using ScalarObjective = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct BlockCheck {
    std::string name;
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::vector<BlockCheck> blocks;
};

struct GradCheckOptions {
    double eps = 1e-5;
    // Test hook: adds `fault_delta` to the analytic gradient of entry 0 of
    // block `fault_block` before comparison.
    std::optional<std::size_t> fault_block;
    double fault_delta = 1.0;
};

// Compares tape gradients against central differences. Per entry the error
// is |analytic - numeric| / (|numeric| + 1e-12).
GradCheckReport grad_check_report(const ScalarObjective& f, std::span<const Tensor> params,
                                  std::span<const std::string> names, const GradCheckOptions& options);

double grad_check(const ScalarObjective& f, std::span<const Tensor> params, double eps);

}  // namespace ndv
