#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ndv/checkpoint.hpp"
#include "ndv/data.hpp"
#include "ndv/metrics.hpp"
#include "ndv/optim.hpp"
#include "ndv/video_gan.hpp"

namespace ndv {

struct GanConfig {
    Phi phi = Phi::bce;
    std::size_t batch_size = 16;
    std::size_t total_steps = 2000;
    std::size_t metric_interval = 100;
    std::uint64_t param_seed = 1;
    std::uint64_t data_seed = 2;
    std::uint64_t noise_seed = 3;
    // Surrogate-IS splits and videos per split.
    std::size_t metric_batches = 10;
    std::size_t metric_batch_size = 32;
    AdamHyper adam;

    void validate() const;
};

// Everything fixed per dataset: training videos, the frozen probe and the
// real-data feature statistics FID is measured against.
struct EvalContext {
    SyntheticSpec dataset;
    LabeledVideos train;
    Probe probe;
    GaussianStats real_stats;
    InceptionScore real_is;
};

// The probe's held-out set uses derive_seed(dataset.seed, 1) and
// max(50, samples_per_class / 2) samples per class.
EvalContext make_eval_context(const SyntheticSpec& dataset, const ProbeOptions& probe_options);

struct Evaluation {
    double is_mean = 0.0;
    double is_std = 0.0;
    double fid = 0.0;
};

// Samples metric_batches * metric_batch_size videos from a fixed evaluation
// seed, so successive evaluations see the same latents.
Evaluation evaluate_generator(const VideoGan& gan, const EvalContext& context, const GanConfig& config);

struct MetricRow {
    std::size_t step = 0;
    double is_mean = 0.0;
    double is_std = 0.0;
    double fid = 0.0;
    double loss_d = 0.0;
    double loss_g = 0.0;
};

struct TrainOptions {
    // Empty: nothing is written.
    std::filesystem::path output_dir;
    bool resume = false;
    // Stored verbatim in every checkpoint as block "meta.config_json".
    std::string config_json;
    // Stop after this many steps of the current invocation (resume testing).
    std::optional<std::size_t> stop_after;
};

struct TrainResult {
    std::vector<MetricRow> log;
    Evaluation initial;
    std::optional<std::size_t> best_row;
    double seconds_per_step = 0.0;
    std::size_t steps_completed = 0;
    bool diverged = false;
    std::string failure;
    Checkpoint best;
};

// Alternating D/G Adam steps. Step s draws its data batch from
// derive_seed(data_seed, s) and its latents from derive_seed(noise_seed, s),
// so a resumed run continues identically. A non-finite loss stops training
// with `diverged` set; checkpoints already written are kept.
TrainResult train(VideoGan& gan, const GanConfig& config, const EvalContext& context, const TrainOptions& options = {});

// Index of the row with the highest surrogate-IS (first on ties).
std::size_t best_metric_row(const std::vector<MetricRow>& log);

// Checkpoint blocks: "temporal.*", "image.*", "disc.*" parameters plus
// optional Adam moments and meta blocks.
Checkpoint model_checkpoint(const VideoGan& gan);
void load_model(VideoGan& gan, const Checkpoint& checkpoint);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricRow& row, const TemporalGeneratorSpec& spec, std::size_t param_count);

struct MetricReport {
    std::string family;
    std::string order;
    std::string fx_shape;
    std::size_t param_count = 0;
    double is_mean = 0.0;
    double is_std = 0.0;
    double fid = 0.0;
    double seconds_per_step = 0.0;
    bool failed = false;
    std::string failure;
    Evaluation initial;
    std::size_t best_step = 0;
    std::size_t final_step = 0;
    std::size_t log_rows = 0;
};

// Trains each spec with identical seeds and budget; a diverging family gives
// a failed row (metrics nan) instead of aborting the grid. When output_dir
// is set, family i writes under output_dir / label.
std::vector<MetricReport> ablation_run(const std::vector<TemporalGeneratorSpec>& specs, const SolverSettings& solver,
                                       const GanConfig& config, const EvalContext& context,
                                       const std::filesystem::path& output_dir = {}, const std::string& config_json = {});

std::string report_csv(const std::vector<MetricReport>& rows);

// Column values for baseline families, which have no order or f_x shape.
std::string report_order(const TemporalGeneratorSpec& spec);
std::string report_fx_shape(const TemporalGeneratorSpec& spec);

}  // namespace ndv
