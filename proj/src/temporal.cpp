#include "ndv/temporal.hpp"

#include <bit>
#include <cmath>

#include "ndv/errors.hpp"

namespace ndv {

std::string to_string(Family family) {
    switch (family) {
        case Family::conv1d: return "conv1d";
        case Family::lstm: return "lstm";
        case Family::ode: return "ode";
        case Family::sde: return "sde";
    }
    return "unknown";
}

std::string to_string(FxShape shape) {
    switch (shape) {
        case FxShape::single_layer: return "single_layer";
        case FxShape::two_layer: return "two_layer";
        case FxShape::equal_params: return "equal_params";
    }
    return "unknown";
}

Family parse_family(const std::string& name) {
    if (name == "conv1d") return Family::conv1d;
    if (name == "lstm") return Family::lstm;
    if (name == "ode") return Family::ode;
    if (name == "sde") return Family::sde;
    throw ConfigError("unknown family '" + name + "' (expected conv1d, lstm, ode, sde)");
}

FxShape parse_fx_shape(const std::string& name) {
    if (name == "single_layer") return FxShape::single_layer;
    if (name == "two_layer") return FxShape::two_layer;
    if (name == "equal_params") return FxShape::equal_params;
    throw ConfigError("unknown fx_shape '" + name + "' (expected single_layer, two_layer, equal_params)");
}

void TemporalGeneratorSpec::validate() const {
    if (latent_dim < 1) throw ConfigError("temporal.latent_dim must be >= 1");
    if (num_frames < 2) throw ConfigError("temporal.num_frames must be >= 2");
    if (order < 1 || order > 3) throw ConfigError("temporal.order must be 1, 2 or 3");
    if (order > 1 && family != Family::ode) throw ConfigError("temporal.order > 1 requires family ode");
    if ((fx_shape == FxShape::equal_params) != param_budget.has_value()) {
        throw ConfigError("temporal.param_budget must be set exactly when fx_shape is equal_params");
    }
    if (family == Family::conv1d) conv1d_layer_count(num_frames);
}

std::string TemporalGeneratorSpec::label() const {
    if (family == Family::ode) return "ode" + std::to_string(order);
    return to_string(family);
}

std::vector<Var> TemporalGenerator::extrapolate_backward(Tape&, const std::vector<Var>&, const LatentTrajectory&,
                                                         std::size_t) const {
    throw UnsupportedError("capability not supported by family " + spec_.label() +
                           ": backward extrapolation needs an ODE temporal generator");
}

std::size_t conv1d_layer_count(std::size_t num_frames) {
    if (num_frames < 2 || !std::has_single_bit(num_frames)) {
        const std::size_t below = num_frames < 2 ? 2 : std::bit_floor(num_frames);
        throw ConfigError("temporal.num_frames = " + std::to_string(num_frames) +
                          " is not reachable by the conv1d doubling stack; use a power of two such as " +
                          std::to_string(below) + " or " + std::to_string(below * 2));
    }
    return static_cast<std::size_t>(std::countr_zero(num_frames));
}

std::size_t equal_params_count(std::size_t width, std::size_t d, std::size_t depth, std::size_t networks) {
    return depth * (d * d + d) + networks * (width * (2 * d + 1) + d);
}

std::size_t match_parameter_budget(std::size_t target, std::size_t d, std::size_t depth, std::size_t networks) {
    if (d == 0 || networks == 0) throw ConfigError("match_parameter_budget: d and networks must be positive");
    const std::size_t minimum = equal_params_count(1, d, depth, networks);
    if (target < minimum) {
        throw ConfigError("param_budget " + std::to_string(target) + " is below the minimal equal_params size " +
                          std::to_string(minimum));
    }
    // count(w) is affine and strictly increasing in w.
    const std::size_t per_width = networks * (2 * d + 1);
    const std::size_t lower = 1 + (target - minimum) / per_width;
    const std::size_t below = equal_params_count(lower, d, depth, networks);
    const std::size_t above = equal_params_count(lower + 1, d, depth, networks);
    return target - below <= above - target ? lower : lower + 1;
}

std::size_t baseline_nonlinearity_count(Family baseline, std::size_t num_frames) {
    switch (baseline) {
        case Family::conv1d: return conv1d_layer_count(num_frames);
        case Family::lstm: return 2;
        default: throw ContractError("baseline_nonlinearity_count: " + to_string(baseline) + " is not a baseline");
    }
}

std::size_t prepend_depth_for_baseline(Family baseline, std::size_t num_frames) {
    return baseline_nonlinearity_count(baseline, num_frames) - 1;
}

std::size_t count_parameters(const TemporalGenerator& generator) { return generator.params().count(); }

namespace {

Var affine(const Var& x, const Var& weight, const Var& bias) { return add_bias(matmul(x, weight), bias); }

// Transposed 1-D convolutions doubling the temporal length 1 -> T.
class Conv1dGenerator final : public TemporalGenerator {
public:
    explicit Conv1dGenerator(const TemporalGeneratorSpec& spec) : TemporalGenerator(spec) {
        layers_ = conv1d_layer_count(spec.num_frames);
        Rng rng(spec.seed);
        const std::size_t d = spec.latent_dim;
        for (std::size_t i = 0; i < layers_; ++i) {
            params_.add("conv." + std::to_string(i) + ".weight", {d, d, 4}, d * 2, rng);
            params_.add("conv." + std::to_string(i) + ".bias", {d}, d * 2, rng);
        }
    }

    LatentTrajectory generate(Tape&, const std::vector<Var>& bound, const Var& content,
                              const GenerateOptions& options) const override {
        if (options.oversample != 1) {
            throw UnsupportedError("capability not supported by family conv1d: oversampling needs a continuous-time "
                                   "temporal generator");
        }
        const std::size_t d = spec_.latent_dim;
        const std::size_t batch = content.dim(0);
        const auto geometry = ConvGeometry::uniform(1, 4, 2, 1);
        Var h = reshape(content, {batch, d, 1});
        for (std::size_t i = 0; i < layers_; ++i) {
            h = conv_transpose(h, bound[2 * i], bound[2 * i + 1], geometry);
            h = apply_activation(h, i + 1 == layers_ ? Activation::tanh : Activation::relu);
        }
        LatentTrajectory out;
        out.content = content;
        for (std::size_t t = 0; t < spec_.num_frames; ++t) out.frames.push_back(reshape(slice(h, 2, t, 1), {batch, d}));
        return out;
    }

    std::size_t nonlinearity_count() const override { return layers_; }

private:
    std::size_t layers_ = 0;
};

// Single LSTM cell, input z_c at every step, h_t is z_t.
class LstmGenerator final : public TemporalGenerator {
public:
    explicit LstmGenerator(const TemporalGeneratorSpec& spec) : TemporalGenerator(spec) {
        Rng rng(spec.seed);
        const std::size_t d = spec.latent_dim;
        params_.add("lstm.weight", {2 * d, 4 * d}, 2 * d, rng);
        params_.add("lstm.bias", {4 * d}, 2 * d, rng);
    }

    LatentTrajectory generate(Tape& tape, const std::vector<Var>& bound, const Var& content,
                              const GenerateOptions& options) const override {
        if (options.oversample != 1) {
            throw UnsupportedError("capability not supported by family lstm: recurrent generators cannot "
                                   "interpolate between steps");
        }
        const std::size_t d = spec_.latent_dim;
        const std::size_t batch = content.dim(0);
        Var h = tape.constant(Tensor({batch, d}));
        Var c = tape.constant(Tensor({batch, d}));
        LatentTrajectory out;
        out.content = content;
        for (std::size_t t = 0; t < spec_.num_frames; ++t) {
            const Var gates = affine(concat_features(content, h), bound[0], bound[1]);
            const Var in = apply_activation(slice(gates, 1, 0, d), Activation::sigmoid);
            const Var forget = apply_activation(slice(gates, 1, d, d), Activation::sigmoid);
            const Var cand = apply_activation(slice(gates, 1, 2 * d, d), Activation::tanh);
            const Var outg = apply_activation(slice(gates, 1, 3 * d, d), Activation::sigmoid);
            c = add(mul(forget, c), mul(in, cand));
            h = mul(outg, apply_activation(c, Activation::tanh));
            out.frames.push_back(h);
        }
        return out;
    }

    std::size_t nonlinearity_count() const override { return 2; }
};

// Neural ODE (orders 1-3) or SDE. Each learned field maps R^d -> R^d and
// ends in tanh (drift) or 0.5 * sigmoid (diffusion).
class DifferentialGenerator final : public TemporalGenerator {
public:
    DifferentialGenerator(const TemporalGeneratorSpec& spec, const SolverSettings& solver)
        : TemporalGenerator(spec), solver_(solver) {
        if (spec.family == Family::ode && solver.ode_method == SolverMethod::euler_maruyama) {
            throw ConfigError("solver.method euler_maruyama is only valid for the sde family");
        }
        const std::size_t d = spec.latent_dim;
        Rng rng(spec.seed);
        for (std::size_t i = 0; i < spec.prepend_fcn_depth; ++i) {
            params_.add("prepend." + std::to_string(i) + ".weight", {d, d}, d, rng);
            params_.add("prepend." + std::to_string(i) + ".bias", {d}, d, rng);
        }
        const std::size_t networks = spec.family == Family::sde ? 2 : 1;
        switch (spec.fx_shape) {
            case FxShape::single_layer: break;
            case FxShape::two_layer: hidden_ = d; break;
            case FxShape::equal_params:
                hidden_ = match_parameter_budget(*spec.param_budget, d, spec.prepend_fcn_depth, networks);
                break;
        }
        add_field("f", rng);
        if (spec.family == Family::sde) add_field("sigma", rng);
    }

    LatentTrajectory generate(Tape& tape, const std::vector<Var>& bound, const Var& content,
                              const GenerateOptions& options) const override {
        const std::size_t d = spec_.latent_dim;
        if (content.shape().size() != 2 || content.dim(1) != d) {
            throw ShapeError("generate_latents: content " + shape_string(content.shape()) + " is not [B, " +
                             std::to_string(d) + "]");
        }
        const std::size_t batch = content.dim(0);
        const std::size_t spu = steps_per_unit();
        if (options.oversample == 0 || spu % options.oversample != 0) {
            throw ContractError("generate_latents: oversample " + std::to_string(options.oversample) +
                                " must divide steps_per_unit " + std::to_string(spu));
        }

        Var z0 = content;
        for (std::size_t i = 0; i < spec_.prepend_fcn_depth; ++i) {
            z0 = apply_activation(affine(z0, bound[2 * i], bound[2 * i + 1]), Activation::tanh);
        }
        Var state = z0;
        if (spec_.order > 1) {
            state = concat_features(z0, tape.constant(Tensor({batch, static_cast<std::size_t>(spec_.order - 1) * d})));
        }

        const auto grid = TimeGrid::per_unit(0.0, static_cast<double>(spec_.num_frames - 1), spu);
        std::vector<Var> nodes;
        if (spec_.family == Family::sde) {
            if (options.noise_seeds.size() != batch) {
                throw ContractError("generate_latents: sde needs one noise seed per batch row (" +
                                    std::to_string(batch) + "), got " + std::to_string(options.noise_seeds.size()));
            }
            std::vector<WienerPath> rows;
            rows.reserve(batch);
            for (std::uint64_t seed : options.noise_seeds) rows.push_back(sample_wiener(d, grid, seed));
            nodes = integrate_sde(field(bound, "f"), field(bound, "sigma"), state, stack_wiener(rows),
                                  SolverConfig{SolverMethod::euler_maruyama, grid});
        } else {
            nodes = integrate_ode(augment_to_first_order(field(bound, "f"), spec_.order, d), state,
                                  SolverConfig{solver_.ode_method, grid});
        }

        LatentTrajectory out;
        out.content = content;
        out.initial_state = state;
        out.oversample = options.oversample;
        for (std::size_t t = 0; t < spec_.num_frames; ++t) out.frames.push_back(position(nodes[t * spu]));
        if (options.oversample > 1) {
            const std::size_t stride = spu / options.oversample;
            for (std::size_t k = 0; k < nodes.size(); k += stride) out.dense.push_back(position(nodes[k]));
        }
        return out;
    }

    std::vector<Var> extrapolate_backward(Tape& tape, const std::vector<Var>& bound,
                                          const LatentTrajectory& trajectory, std::size_t n) const override {
        if (spec_.family != Family::ode) return TemporalGenerator::extrapolate_backward(tape, bound, trajectory, n);
        if (n == 0) return {};
        if (!trajectory.initial_state.valid()) throw ContractError("extrapolate_backward: trajectory has no state");
        const std::size_t spu = steps_per_unit();
        const auto grid = TimeGrid::per_unit(0.0, -static_cast<double>(n), spu);
        const auto nodes = integrate_ode(augment_to_first_order(field(bound, "f"), spec_.order, spec_.latent_dim),
                                         trajectory.initial_state, SolverConfig{solver_.ode_method, grid});
        std::vector<Var> out;
        for (std::size_t k = 1; k <= n; ++k) out.push_back(position(nodes[k * spu]));
        return out;
    }

    bool supports_oversampling() const override { return true; }
    bool supports_backward() const override { return spec_.family == Family::ode; }
    std::size_t nonlinearity_count() const override { return spec_.prepend_fcn_depth + 1; }

    std::size_t hidden_width() const { return hidden_; }

private:
    std::size_t steps_per_unit() const {
        return spec_.family == Family::sde ? solver_.sde_steps_per_unit : solver_.ode_steps_per_unit;
    }

    void add_field(const std::string& prefix, Rng& rng) {
        const std::size_t d = spec_.latent_dim;
        const std::size_t first_out = hidden_ == 0 ? d : hidden_;
        field_start_.push_back(params_.size());
        params_.add(prefix + ".0.weight", {d, first_out}, d, rng);
        params_.add(prefix + ".0.bias", {first_out}, d, rng);
        if (hidden_ != 0) {
            params_.add(prefix + ".1.weight", {hidden_, d}, hidden_, rng);
            params_.add(prefix + ".1.bias", {d}, hidden_, rng);
        }
    }

    VectorField field(const std::vector<Var>& bound, const std::string& which) const {
        const std::size_t start = which == "f" ? field_start_[0] : field_start_[1];
        const bool diffusion = which == "sigma";
        const bool two_layers = hidden_ != 0;
        const std::size_t d = spec_.latent_dim;
        const bool augmented = spec_.order > 1;
        return [&bound, start, diffusion, two_layers, d, augmented](const Var& state, double) {
            Var x = augmented ? slice(state, state.shape().size() - 1, 0, d) : state;
            if (two_layers) {
                x = apply_activation(affine(x, bound[start], bound[start + 1]), Activation::tanh);
                x = affine(x, bound[start + 2], bound[start + 3]);
            } else {
                x = affine(x, bound[start], bound[start + 1]);
            }
            if (diffusion) return scale(apply_activation(x, Activation::sigmoid), 0.5);
            return apply_activation(x, Activation::tanh);
        };
    }

    Var position(const Var& node) const {
        if (spec_.order == 1) return node;
        return slice(node, node.shape().size() - 1, 0, spec_.latent_dim);
    }

    SolverSettings solver_;
    std::size_t hidden_ = 0;  // 0: single layer
    std::vector<std::size_t> field_start_;
};

}  // namespace

std::unique_ptr<TemporalGenerator> build_temporal_generator(const TemporalGeneratorSpec& spec,
                                                            const SolverSettings& solver) {
    spec.validate();
    switch (spec.family) {
        case Family::conv1d: return std::make_unique<Conv1dGenerator>(spec);
        case Family::lstm: return std::make_unique<LstmGenerator>(spec);
        case Family::ode:
        case Family::sde: return std::make_unique<DifferentialGenerator>(spec, solver);
    }
    throw ContractError("build_temporal_generator: unknown family");
}

}  // namespace ndv
