#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ndv/autodiff.hpp"

namespace ndv {

// Uniform grid from t_start to t_end (either direction), endpoints included.
class TimeGrid {
public:
    // Step size 1/steps_per_unit; |t_end - t_start| * steps_per_unit must be
    // an integer.
    static TimeGrid per_unit(double t_start, double t_end, std::size_t steps_per_unit);
    // Arbitrary step count, e.g. integrating to pi in 64 steps.
    static TimeGrid with_steps(double t_start, double t_end, std::size_t num_steps);

    double t_start() const noexcept { return t_start_; }
    double t_end() const noexcept { return t_end_; }
    std::size_t num_steps() const noexcept { return num_steps_; }
    std::size_t num_nodes() const noexcept { return num_steps_ + 1; }
    std::optional<std::size_t> steps_per_unit() const noexcept { return steps_per_unit_; }
    bool forward() const noexcept { return t_end_ > t_start_; }
    // Signed step.
    double step() const noexcept { return step_; }
    double time(std::size_t node) const;

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    double t_start_ = 0.0;
    double t_end_ = 1.0;
    std::size_t num_steps_ = 1;
    std::optional<std::size_t> steps_per_unit_;
    double step_ = 1.0;
};

enum class SolverMethod { euler, rk4, euler_maruyama };

std::string to_string(SolverMethod method);
SolverMethod parse_solver_method(const std::string& name);

struct SolverConfig {
    SolverMethod method = SolverMethod::rk4;
    TimeGrid grid = TimeGrid::per_unit(0.0, 1.0, 4);
};

// Brownian increments on a grid; one increment vector per solver step.
struct WienerPath {
    std::size_t dim = 0;
    std::size_t num_steps = 0;
    double step = 0.0;  // |h|
    std::uint64_t seed = 0;
    std::vector<double> increments;  // num_steps * dim, step-major

    // Increment of step k as a tensor of the given shape (numel == dim).
    Tensor increment(std::size_t k, const Shape& shape) const;
    // W at node k (W_0 = 0).
    std::vector<double> cumulative(std::size_t node) const;
};

// Increments are i.i.d. N(0, h): Rng (mt19937_64 + Box-Muller) seeded with `seed`.
WienerPath sample_wiener(std::size_t dim, const TimeGrid& grid, std::uint64_t seed);

// Concatenates per-row paths (same grid) into one path over stacked rows.
WienerPath stack_wiener(const std::vector<WienerPath>& rows);

using VectorField = std::function<Var(const Var& state, double t)>;

// States above this magnitude abort integration.
inline constexpr double kDivergenceLimit = 1e6;

// Returns the state at every grid node; element 0 is z0 itself.
std::vector<Var> integrate_ode(const VectorField& f, const Var& z0, const SolverConfig& config);

// Euler-Maruyama with diagonal diffusion:
//   z_{k+1} = z_k + mu(z_k, t_k) h + sigma(z_k, t_k) * dW_k.
std::vector<Var> integrate_sde(const VectorField& mu, const VectorField& sigma, const Var& z0,
                               const WienerPath& wiener, const SolverConfig& config);

// Turns a field for the top derivative of an order-`order` ODE into a first
// order field on [z, z', ..., z^(order-1)] stacked along the last axis.
VectorField augment_to_first_order(VectorField top, int order, std::size_t latent_dim);

}  // namespace ndv
