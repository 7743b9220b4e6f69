#include "ndv/gradcheck.hpp"

#include <cmath>

#include "ndv/errors.hpp"

namespace ndv {

namespace {

double evaluate(const ScalarObjective& f, const std::vector<Tensor>& params) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) vars.push_back(tape.constant(p));
    const double value = f(tape, vars).value().item();
    if (!std::isfinite(value)) throw NumericError("grad_check: non-finite objective");
    return value;
}

}  // namespace

GradCheckReport grad_check_report(const ScalarObjective& f, std::span<const Tensor> params,
                                  std::span<const std::string> names, const GradCheckOptions& options) {
    if (!(options.eps > 0.0)) throw ContractError("grad_check: eps must be positive");

    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const Tensor& p : params) vars.push_back(tape.leaf(p, true));
        const Var loss = f(tape, vars);
        if (!std::isfinite(loss.value().item())) throw NumericError("grad_check: non-finite objective");
        tape.backward(loss);
        for (const Var& v : vars) analytic.push_back(tape.grad(v));
    }
    if (options.fault_block && *options.fault_block < analytic.size() && !analytic[*options.fault_block].empty()) {
        analytic[*options.fault_block][0] += options.fault_delta;
    }

    GradCheckReport report;
    std::vector<Tensor> work(params.begin(), params.end());
    for (std::size_t b = 0; b < work.size(); ++b) {
        BlockCheck block;
        block.name = b < names.size() ? names[b] : "param" + std::to_string(b);
        for (std::size_t i = 0; i < work[b].numel(); ++i) {
            const double original = work[b][i];
            work[b][i] = original + options.eps;
            const double plus = evaluate(f, work);
            work[b][i] = original - options.eps;
            const double minus = evaluate(f, work);
            work[b][i] = original;
            const double numeric = (plus - minus) / (2.0 * options.eps);
            const double a = analytic[b][i];
            const double err = std::abs(a - numeric) / (std::abs(numeric) + 1e-12);
            if (i == 0 || err > block.max_relative_error) {
                block.max_relative_error = err;
                block.worst_index = i;
                block.analytic = a;
                block.numeric = numeric;
            }
        }
        report.max_relative_error = std::max(report.max_relative_error, block.max_relative_error);
        report.blocks.push_back(block);
    }
    return report;
}

double grad_check(const ScalarObjective& f, std::span<const Tensor> params, double eps) {
    GradCheckOptions options;
    options.eps = eps;
    return grad_check_report(f, params, {}, options).max_relative_error;
}

}  // namespace ndv
