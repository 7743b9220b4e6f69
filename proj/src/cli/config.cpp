#include "ndv/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ndv/errors.hpp"
#include "ndv/rng.hpp"

namespace ndv {

namespace {

using nlohmann::json;

// Reads one JSON object section, remembering which keys were consumed.
class Section {
public:
    Section(const json& parent, std::string name, bool required) : name_(std::move(name)) {
        if (!parent.contains(name_)) {
            if (required) throw ConfigError("config: missing required section '" + name_ + "'");
            return;
        }
        const json& v = parent.at(name_);
        if (!v.is_object()) throw ConfigError("config: '" + name_ + "' must be an object");
        node_ = &v;
    }

    bool present() const { return node_ != nullptr; }

    std::size_t count(const std::string& key, std::optional<std::size_t> fallback) {
        const json* v = get(key, fallback.has_value());
        if (!v) return *fallback;
        if (!v->is_number_unsigned()) throw ConfigError("config: '" + path(key) + "' must be a non-negative integer");
        return v->get<std::size_t>();
    }

    std::uint64_t seed(const std::string& key) {
        const json* v = get(key, false);
        if (!v->is_number_unsigned()) throw ConfigError("config: '" + path(key) + "' must be a non-negative integer");
        return v->get<std::uint64_t>();
    }

    double real(const std::string& key, double fallback) {
        const json* v = get(key, true);
        if (!v) return fallback;
        if (!v->is_number()) throw ConfigError("config: '" + path(key) + "' must be a number");
        return v->get<double>();
    }

    std::string text(const std::string& key, std::optional<std::string> fallback) {
        const json* v = get(key, fallback.has_value());
        if (!v) return *fallback;
        if (!v->is_string()) throw ConfigError("config: '" + path(key) + "' must be a string");
        return v->get<std::string>();
    }

    std::optional<std::size_t> optional_count(const std::string& key) {
        const json* v = get(key, true);
        if (!v || v->is_null()) return std::nullopt;
        if (!v->is_number_unsigned()) throw ConfigError("config: '" + path(key) + "' must be a non-negative integer or null");
        return v->get<std::size_t>();
    }

    bool has(const std::string& key) const { return node_ && node_->contains(key); }

    void finish() const {
        if (!node_) return;
        for (auto it = node_->begin(); it != node_->end(); ++it)
            if (!used_.count(it.key())) throw ConfigError("config: unknown key '" + path(it.key()) + "'");
    }

private:
    const json* get(const std::string& key, bool optional) {
        used_.insert(key);
        if (!node_ || !node_->contains(key)) {
            if (optional) return nullptr;
            throw ConfigError("config: missing required key '" + path(key) + "'");
        }
        return &node_->at(key);
    }
    std::string path(const std::string& key) const { return name_ + "." + key; }

    std::string name_;
    const json* node_ = nullptr;
    std::set<std::string> used_;
};

template <typename F>
auto wrap_invariant(const std::string& section, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        throw ConfigError(msg.rfind("config", 0) == 0 ? msg : "config: " + section + ": " + msg);
    }
}

}  // namespace

const std::vector<std::string>& family_labels() {
    static const std::vector<std::string> labels{"conv1d", "lstm", "ode1", "ode2", "ode3", "sde"};
    return labels;
}

TemporalGeneratorSpec spec_for_label(const TemporalGeneratorSpec& base, const std::string& label) {
    TemporalGeneratorSpec s = base;
    if (label == "conv1d") s.family = Family::conv1d, s.order = 1;
    else if (label == "lstm") s.family = Family::lstm, s.order = 1;
    else if (label == "ode1" || label == "ode2" || label == "ode3") s.family = Family::ode, s.order = label[3] - '0';
    else if (label == "sde") s.family = Family::sde, s.order = 1;
    else {
        std::string valid;
        for (const auto& l : family_labels()) valid += (valid.empty() ? "" : ", ") + l;
        throw ConfigError("unknown family '" + label + "' (valid: " + valid + ")");
    }
    return s;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config: top level must be an object");
    const std::set<std::string> top{"temporal", "gan", "dataset", "solver", "probe", "output_dir"};
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (!top.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");
    if (!doc.contains("output_dir")) throw ConfigError("config: missing required key 'output_dir'");
    if (!doc["output_dir"].is_string() || doc["output_dir"].get<std::string>().empty())
        throw ConfigError("config: 'output_dir' must be a non-empty string");

    ExperimentConfig cfg;
    cfg.output_dir = doc["output_dir"].get<std::string>();

    Section ds(doc, "dataset", true);
    cfg.dataset.kind = wrap_invariant("dataset.kind", [&] { return parse_synthetic_kind(ds.text("kind", std::nullopt)); });
    cfg.dataset.num_classes = ds.count("num_classes", 2);
    cfg.dataset.frames = ds.count("frames", 8);
    cfg.dataset.height = ds.count("height", 16);
    cfg.dataset.width = ds.count("width", 16);
    cfg.dataset.samples_per_class = ds.count("samples_per_class", 128);
    cfg.dataset.seed = ds.seed("seed");
    ds.finish();
    wrap_invariant("dataset", [&] { cfg.dataset.validate(); return 0; });

    Section tp(doc, "temporal", true);
    cfg.temporal.family = wrap_invariant("temporal.family", [&] { return parse_family(tp.text("family", std::nullopt)); });
    cfg.temporal.order = static_cast<int>(tp.count("order", 1));
    cfg.temporal.fx_shape =
        wrap_invariant("temporal.fx_shape", [&] { return parse_fx_shape(tp.text("fx_shape", std::string("single_layer"))); });
    cfg.temporal.latent_dim = tp.count("latent_dim", 16);
    cfg.temporal.num_frames = tp.count("num_frames", cfg.dataset.frames);
    cfg.temporal.prepend_fcn_depth = tp.count("prepend_fcn_depth", 0);
    cfg.temporal.param_budget = tp.optional_count("param_budget");
    tp.finish();

    Section gn(doc, "gan", true);
    cfg.gan.phi = wrap_invariant("gan.phi", [&] { return parse_phi(gn.text("phi", std::string("bce"))); });
    cfg.gan.batch_size = gn.count("batch_size", 16);
    cfg.gan.total_steps = gn.count("total_steps", std::nullopt);
    cfg.gan.metric_interval = gn.count("metric_interval", std::nullopt);
    cfg.gan.param_seed = gn.seed("param_seed");
    cfg.gan.data_seed = gn.seed("data_seed");
    cfg.gan.noise_seed = gn.seed("noise_seed");
    cfg.gan.metric_batches = gn.count("metric_batches", 10);
    cfg.gan.metric_batch_size = gn.count("metric_batch_size", 32);
    cfg.gan.adam.lr = gn.real("lr", 2e-4);
    cfg.gan.adam.beta1 = gn.real("beta1", 0.5);
    cfg.gan.adam.beta2 = gn.real("beta2", 0.999);
    gn.finish();
    wrap_invariant("gan", [&] { cfg.gan.validate(); return 0; });

    Section sv(doc, "solver", false);
    if (sv.has("method")) {
        const SolverMethod method =
            wrap_invariant("solver.method", [&] { return parse_solver_method(sv.text("method", std::nullopt)); });
        if (cfg.temporal.family == Family::sde && method != SolverMethod::euler_maruyama)
            throw ConfigError("config: 'solver.method' must be euler_maruyama for the sde family");
        if (cfg.temporal.family == Family::ode && method == SolverMethod::euler_maruyama)
            throw ConfigError("config: 'solver.method' euler_maruyama needs the sde family");
        if (method != SolverMethod::euler_maruyama) cfg.solver.ode_method = method;
    }
    if (sv.has("steps_per_unit")) {
        const std::size_t spu = sv.count("steps_per_unit", std::nullopt);
        if (spu == 0) throw ConfigError("config: 'solver.steps_per_unit' must be positive");
        if (cfg.temporal.family == Family::sde) cfg.solver.sde_steps_per_unit = spu;
        else cfg.solver.ode_steps_per_unit = spu;
    }
    sv.finish();

    Section pb(doc, "probe", false);
    cfg.probe.steps = pb.count("steps", 300);
    cfg.probe.batch_size = pb.count("batch_size", 32);
    cfg.probe.lr = pb.real("lr", 1e-3);
    cfg.probe.seed = derive_seed(cfg.dataset.seed, 0x9b0e);
    pb.finish();
    if (cfg.probe.steps == 0 || cfg.probe.batch_size == 0 || !(cfg.probe.lr > 0.0))
        throw ConfigError("config: probe.steps, probe.batch_size and probe.lr must be positive");

    if (cfg.temporal.num_frames != cfg.dataset.frames)
        throw ConfigError("config: 'temporal.num_frames' (" + std::to_string(cfg.temporal.num_frames) +
                          ") must equal 'dataset.frames' (" + std::to_string(cfg.dataset.frames) + ")");
    wrap_invariant("temporal", [&] { cfg.temporal.validate(); return 0; });

    json canon;
    canon["output_dir"] = cfg.output_dir;
    canon["dataset"] = {{"kind", to_string(cfg.dataset.kind)}, {"num_classes", cfg.dataset.num_classes},
                        {"frames", cfg.dataset.frames},       {"height", cfg.dataset.height},
                        {"width", cfg.dataset.width},         {"samples_per_class", cfg.dataset.samples_per_class},
                        {"seed", cfg.dataset.seed}};
    canon["temporal"] = {{"family", to_string(cfg.temporal.family)},
                         {"order", cfg.temporal.order},
                         {"fx_shape", to_string(cfg.temporal.fx_shape)},
                         {"latent_dim", cfg.temporal.latent_dim},
                         {"num_frames", cfg.temporal.num_frames},
                         {"prepend_fcn_depth", cfg.temporal.prepend_fcn_depth},
                         {"param_budget", cfg.temporal.param_budget ? json(*cfg.temporal.param_budget) : json(nullptr)}};
    canon["gan"] = {{"phi", to_string(cfg.gan.phi)},
                    {"batch_size", cfg.gan.batch_size},
                    {"total_steps", cfg.gan.total_steps},
                    {"metric_interval", cfg.gan.metric_interval},
                    {"param_seed", cfg.gan.param_seed},
                    {"data_seed", cfg.gan.data_seed},
                    {"noise_seed", cfg.gan.noise_seed},
                    {"metric_batches", cfg.gan.metric_batches},
                    {"metric_batch_size", cfg.gan.metric_batch_size},
                    {"lr", cfg.gan.adam.lr},
                    {"beta1", cfg.gan.adam.beta1},
                    {"beta2", cfg.gan.adam.beta2}};
    json solver = {{"steps_per_unit", cfg.temporal.family == Family::sde ? cfg.solver.sde_steps_per_unit
                                                                          : cfg.solver.ode_steps_per_unit}};
    solver["method"] = cfg.temporal.family == Family::sde ? "euler_maruyama" : to_string(cfg.solver.ode_method);
    canon["solver"] = solver;
    canon["probe"] = {{"steps", cfg.probe.steps}, {"batch_size", cfg.probe.batch_size}, {"lr", cfg.probe.lr}};
    cfg.canonical_json = canon.dump();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

}  // namespace ndv
