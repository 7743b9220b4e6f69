#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ndv/autodiff.hpp"
#include "ndv/parameters.hpp"
#include "ndv/solvers.hpp"

namespace ndv {

enum class Family { conv1d, lstm, ode, sde };
enum class FxShape { single_layer, two_layer, equal_params };

std::string to_string(Family family);
std::string to_string(FxShape shape);
Family parse_family(const std::string& name);
FxShape parse_fx_shape(const std::string& name);

struct TemporalGeneratorSpec {
    Family family = Family::ode;
    int order = 1;
    FxShape fx_shape = FxShape::single_layer;
    std::size_t latent_dim = 16;
    std::size_t num_frames = 8;
    std::size_t prepend_fcn_depth = 0;
    std::optional<std::size_t> param_budget;
    std::uint64_t seed = 1;

    // ConfigError on broken invariants.
    void validate() const;
    // "conv1d", "lstm", "ode1".."ode3", "sde".
    std::string label() const;
};

// Integration settings for the differential families. Frame i sits at t = i.
struct SolverSettings {
    SolverMethod ode_method = SolverMethod::rk4;
    std::size_t ode_steps_per_unit = 4;
    std::size_t sde_steps_per_unit = 8;
};

// Batched latent path: every Var has a leading batch axis.
struct LatentTrajectory {
    Var content;                 // z_c [B, d]
    std::vector<Var> frames;     // T entries of [B, d]; frame i at t = i
    std::vector<Var> dense;      // oversampled latents at spacing 1/oversample (ode/sde only)
    std::size_t oversample = 1;
    Var initial_state;           // augmented integration state at t = 0 (ode/sde only)
};

struct GenerateOptions {
    std::size_t oversample = 1;
    // One Wiener seed per batch row; required by the sde family.
    std::vector<std::uint64_t> noise_seeds;
};

class TemporalGenerator {
public:
    explicit TemporalGenerator(TemporalGeneratorSpec spec) : spec_(std::move(spec)) {}
    virtual ~TemporalGenerator() = default;

    const TemporalGeneratorSpec& spec() const noexcept { return spec_; }
    ParameterStore& params() noexcept { return params_; }
    const ParameterStore& params() const noexcept { return params_; }

    // `bound` is params().bind(tape).
    virtual LatentTrajectory generate(Tape& tape, const std::vector<Var>& bound, const Var& content,
                                      const GenerateOptions& options) const = 0;

    // Latents at t = -1, ..., -n. Only the ode family can do this.
    virtual std::vector<Var> extrapolate_backward(Tape& tape, const std::vector<Var>& bound,
                                                  const LatentTrajectory& trajectory, std::size_t n) const;

    virtual bool supports_oversampling() const { return false; }
    virtual bool supports_backward() const { return false; }
    // Activation functions applied along the content -> z_t path.
    virtual std::size_t nonlinearity_count() const = 0;

protected:
    TemporalGeneratorSpec spec_;
    ParameterStore params_;
};

std::unique_ptr<TemporalGenerator> build_temporal_generator(const TemporalGeneratorSpec& spec,
                                                            const SolverSettings& solver = {});

std::size_t count_parameters(const TemporalGenerator& generator);

// Parameters of `networks` copies of the d -> width -> d tanh network plus a
// prepend FCN of `depth` d -> d layers.
std::size_t equal_params_count(std::size_t width, std::size_t d, std::size_t depth, std::size_t networks = 1);

// Hidden width minimizing |equal_params_count(w) - target|; ties go to the
// smaller width. ConfigError when target is below the w = 1 count.
std::size_t match_parameter_budget(std::size_t target, std::size_t d, std::size_t depth, std::size_t networks = 1);

// Nonlinearities in a baseline temporal generator (conv1d: one per layer,
// lstm: candidate tanh and cell-output tanh).
std::size_t baseline_nonlinearity_count(Family baseline, std::size_t num_frames);

// Prepend depth that gives an ode/sde generator the same nonlinearity count
// as `baseline` (the integrated f supplies one).
std::size_t prepend_depth_for_baseline(Family baseline, std::size_t num_frames);

// Number of doubling transposed-conv layers for T frames; ConfigError if T
// is not a power of two >= 2.
std::size_t conv1d_layer_count(std::size_t num_frames);

}  // namespace ndv
