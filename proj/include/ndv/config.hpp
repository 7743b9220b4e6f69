#pragma once

#include <string>

#include "ndv/data.hpp"
#include "ndv/metrics.hpp"
#include "ndv/temporal.hpp"
#include "ndv/training.hpp"

namespace ndv {

// Parsed and fully validated experiment document.
struct ExperimentConfig {
    TemporalGeneratorSpec temporal;
    GanConfig gan;
    SyntheticSpec dataset;
    SolverSettings solver;
    ProbeOptions probe;
    std::string output_dir;
    // Normalized JSON (every field explicit); stored in checkpoints.
    std::string canonical_json;
};

// Strict: unknown keys, wrong types, missing required keys and broken
// invariants all raise ConfigError naming the key.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// Spec for an ablation family label (conv1d, lstm, ode1..ode3, sde) that
// keeps every other field of `base`.
TemporalGeneratorSpec spec_for_label(const TemporalGeneratorSpec& base, const std::string& label);
const std::vector<std::string>& family_labels();

}  // namespace ndv
