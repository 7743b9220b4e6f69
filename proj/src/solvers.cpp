#include "ndv/solvers.hpp"

#include <cmath>

#include "ndv/errors.hpp"
#include "ndv/rng.hpp"

namespace ndv {

TimeGrid TimeGrid::per_unit(double t_start, double t_end, std::size_t steps_per_unit) {
    if (steps_per_unit == 0) throw ContractError("time grid: steps_per_unit must be positive");
    const double exact = std::abs(t_end - t_start) * static_cast<double>(steps_per_unit);
    const double rounded = std::round(exact);
    if (std::abs(exact - rounded) > 1e-9) {
        throw ContractError("time grid: span " + std::to_string(t_end - t_start) +
                            " is not a whole number of steps at " + std::to_string(steps_per_unit) + " per unit");
    }
    TimeGrid g = with_steps(t_start, t_end, static_cast<std::size_t>(rounded));
    g.steps_per_unit_ = steps_per_unit;
    const double unit = 1.0 / static_cast<double>(steps_per_unit);
    g.step_ = g.forward() ? unit : -unit;
    return g;
}

TimeGrid TimeGrid::with_steps(double t_start, double t_end, std::size_t num_steps) {
    if (t_end == t_start) throw ContractError("time grid: t_end equals t_start");
    if (num_steps == 0) throw ContractError("time grid: needs at least one step");
    TimeGrid g;
    g.t_start_ = t_start;
    g.t_end_ = t_end;
    g.num_steps_ = num_steps;
    g.step_ = (t_end - t_start) / static_cast<double>(num_steps);
    return g;
}

double TimeGrid::time(std::size_t node) const {
    if (node == num_steps_) return t_end_;
    return t_start_ + static_cast<double>(node) * step_;
}

std::string to_string(SolverMethod method) {
    switch (method) {
        case SolverMethod::euler: return "euler";
        case SolverMethod::rk4: return "rk4";
        case SolverMethod::euler_maruyama: return "euler_maruyama";
    }
    return "unknown";
}

SolverMethod parse_solver_method(const std::string& name) {
    if (name == "euler") return SolverMethod::euler;
    if (name == "rk4") return SolverMethod::rk4;
    if (name == "euler_maruyama") return SolverMethod::euler_maruyama;
    throw ConfigError("unknown solver method '" + name + "' (expected euler, rk4, euler_maruyama)");
}

Tensor WienerPath::increment(std::size_t k, const Shape& shape) const {
    if (k >= num_steps) throw ContractError("wiener: step index out of range");
    if (shape_numel(shape) != dim) {
        throw ShapeError("wiener: path of dim " + std::to_string(dim) + " used for state " + shape_string(shape));
    }
    return Tensor(shape, std::vector<double>(increments.begin() + static_cast<std::ptrdiff_t>(k * dim),
                                             increments.begin() + static_cast<std::ptrdiff_t>((k + 1) * dim)));
}

std::vector<double> WienerPath::cumulative(std::size_t node) const {
    if (node > num_steps) throw ContractError("wiener: node index out of range");
    std::vector<double> w(dim, 0.0);
    for (std::size_t k = 0; k < node; ++k)
        for (std::size_t i = 0; i < dim; ++i) w[i] += increments[k * dim + i];
    return w;
}

WienerPath sample_wiener(std::size_t dim, const TimeGrid& grid, std::uint64_t seed) {
    if (dim == 0) throw ContractError("sample_wiener: dim must be >= 1");
    WienerPath path;
    path.dim = dim;
    path.num_steps = grid.num_steps();
    path.step = std::abs(grid.step());
    path.seed = seed;
    path.increments.resize(path.num_steps * dim);
    Rng rng(seed);
    const double sd = std::sqrt(path.step);
    for (double& v : path.increments) v = sd * rng.normal();
    return path;
}

WienerPath stack_wiener(const std::vector<WienerPath>& rows) {
    if (rows.empty()) throw ContractError("stack_wiener: no paths");
    WienerPath out;
    out.num_steps = rows[0].num_steps;
    out.step = rows[0].step;
    out.seed = rows[0].seed;
    for (const auto& r : rows) {
        if (r.num_steps != out.num_steps || r.step != out.step) throw ContractError("stack_wiener: grid mismatch");
        out.dim += r.dim;
    }
    out.increments.resize(out.num_steps * out.dim);
    for (std::size_t k = 0; k < out.num_steps; ++k) {
        std::size_t offset = 0;
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.dim; ++i) out.increments[k * out.dim + offset + i] = r.increments[k * r.dim + i];
            offset += r.dim;
        }
    }
    return out;
}

namespace {

void check_field_shape(const Var& out, const Var& state, const char* what) {
    if (out.shape() != state.shape()) {
        throw ShapeError(std::string(what) + " output " + shape_string(out.shape()) + " does not match state " +
                         shape_string(state.shape()));
    }
}

void check_bounded(const Var& state, std::size_t step) {
    for (double v : state.value().data()) {
        if (!std::isfinite(v) || std::abs(v) > kDivergenceLimit) {
            throw DivergenceError("solver diverged at step " + std::to_string(step) + " (|state| > 1e6)", step);
        }
    }
}

Var rk4_step(const VectorField& f, const Var& z, double t, double h) {
    const Var k1 = f(z, t);
    check_field_shape(k1, z, "vector field");
    const Var k2 = f(add(z, scale(k1, h / 2.0)), t + h / 2.0);
    const Var k3 = f(add(z, scale(k2, h / 2.0)), t + h / 2.0);
    const Var k4 = f(add(z, scale(k3, h)), t + h);
    const Var slope = add(add(k1, scale(add(k2, k3), 2.0)), k4);
    return add(z, scale(slope, h / 6.0));
}

Var euler_step(const VectorField& f, const Var& z, double t, double h) {
    const Var k = f(z, t);
    check_field_shape(k, z, "vector field");
    return add(z, scale(k, h));
}

}  // namespace

std::vector<Var> integrate_ode(const VectorField& f, const Var& z0, const SolverConfig& config) {
    if (config.method == SolverMethod::euler_maruyama) {
        throw ContractError("integrate_ode: euler_maruyama is an SDE method");
    }
    const TimeGrid& grid = config.grid;
    std::vector<Var> states;
    states.reserve(grid.num_nodes());
    states.push_back(z0);
    for (std::size_t k = 0; k < grid.num_steps(); ++k) {
        const double t = grid.time(k);
        Var next;
        try {
            next = config.method == SolverMethod::rk4 ? rk4_step(f, states.back(), t, grid.step())
                                                      : euler_step(f, states.back(), t, grid.step());
        } catch (const DivergenceError&) {
            throw;
        } catch (const NumericError& e) {
            throw DivergenceError("solver diverged at step " + std::to_string(k + 1) + ": " + e.what(), k + 1);
        }
        check_bounded(next, k + 1);
        states.push_back(next);
    }
    return states;
}

std::vector<Var> integrate_sde(const VectorField& mu, const VectorField& sigma, const Var& z0,
                               const WienerPath& wiener, const SolverConfig& config) {
    if (config.method != SolverMethod::euler_maruyama) {
        throw ContractError("integrate_sde: method must be euler_maruyama");
    }
    const TimeGrid& grid = config.grid;
    if (!grid.forward()) throw UnsupportedError("integrate_sde: backward-time SDE integration is not supported");
    if (wiener.num_steps != grid.num_steps() || std::abs(wiener.step - std::abs(grid.step())) > 1e-15) {
        throw ContractError("integrate_sde: wiener path grid (" + std::to_string(wiener.num_steps) +
                            " steps) does not match solver grid (" + std::to_string(grid.num_steps()) + " steps)");
    }
    Tape& tape = z0.tape();
    std::vector<Var> states;
    states.reserve(grid.num_nodes());
    states.push_back(z0);
    const double h = grid.step();
    for (std::size_t k = 0; k < grid.num_steps(); ++k) {
        const double t = grid.time(k);
        const Var& z = states.back();
        Var next;
        try {
            const Var drift = mu(z, t);
            check_field_shape(drift, z, "drift");
            const Var diffusion = sigma(z, t);
            check_field_shape(diffusion, z, "diffusion");
            const Var dw = tape.constant(wiener.increment(k, z.shape()));
            next = add(add(z, scale(drift, h)), mul(diffusion, dw));
        } catch (const DivergenceError&) {
            throw;
        } catch (const NumericError& e) {
            throw DivergenceError("solver diverged at step " + std::to_string(k + 1) + ": " + e.what(), k + 1);
        }
        check_bounded(next, k + 1);
        states.push_back(next);
    }
    return states;
}

VectorField augment_to_first_order(VectorField top, int order, std::size_t latent_dim) {
    if (order < 1 || order > 3) throw ContractError("augment_to_first_order: order must be 1, 2 or 3");
    if (order == 1) return top;
    const std::size_t d = latent_dim;
    const std::size_t lower = static_cast<std::size_t>(order - 1) * d;
    return [top = std::move(top), d, lower, order](const Var& state, double t) {
        const std::size_t axis = state.shape().size() - 1;
        if (state.shape()[axis] != static_cast<std::size_t>(order) * d) {
            throw ShapeError("augmented state " + shape_string(state.shape()) + " is not order*d = " +
                             std::to_string(order) + "*" + std::to_string(d) + " wide");
        }
        const Var derivatives = slice(state, axis, d, lower);
        const Var highest = top(state, t);
        return concat_features(derivatives, highest);
    };
}

}  // namespace ndv
