#include "ndv/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "ndv/errors.hpp"
#include "ndv/rng.hpp"

namespace ndv {

namespace {

constexpr std::uint64_t kEvalStream = 0xe7a1e7a1ULL;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Net {
    const char* prefix;
    ParameterStore* store;
    AdamState* adam;
};

void add_params(Checkpoint& out, const std::string& prefix, const ParameterStore& store) {
    for (const auto& p : store.all()) out.push_back({prefix + p.name, p.value.values()});
}

void load_params(ParameterStore& store, const std::string& prefix, const Checkpoint& ck) {
    for (auto& p : store.all()) {
        const auto& block = require_block(ck, prefix + p.name);
        if (block.values.size() != p.value.numel())
            throw IoError("checkpoint: block '" + block.name + "' has " + std::to_string(block.values.size()) +
                          " values, model expects " + std::to_string(p.value.numel()));
        p.value = Tensor(p.value.shape(), block.values);
    }
}

void add_adam(Checkpoint& out, const std::string& net, const ParameterStore& store, const AdamState& adam) {
    out.push_back({"adam." + net + ".step", {static_cast<double>(adam.step)}});
    if (adam.step == 0) return;
    for (std::size_t i = 0; i < store.size(); ++i) {
        out.push_back({"adam." + net + ".m." + store[i].name, adam.first_moment[i].values()});
        out.push_back({"adam." + net + ".v." + store[i].name, adam.second_moment[i].values()});
    }
}

void load_adam(AdamState& adam, const std::string& net, const ParameterStore& store, const Checkpoint& ck) {
    adam.step = static_cast<std::uint64_t>(require_block(ck, "adam." + net + ".step").values.at(0));
    adam.first_moment.clear();
    adam.second_moment.clear();
    if (adam.step == 0) return;
    for (std::size_t i = 0; i < store.size(); ++i) {
        const Shape& shape = store[i].value.shape();
        adam.first_moment.emplace_back(shape, require_block(ck, "adam." + net + ".m." + store[i].name).values);
        adam.second_moment.emplace_back(shape, require_block(ck, "adam." + net + ".v." + store[i].name).values);
    }
}

std::vector<MetricRow> read_metric_rows(const std::filesystem::path& path, std::size_t up_to_step) {
    std::vector<MetricRow> rows;
    std::ifstream in(path);
    if (!in) throw IoError("resume: cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() != 10) throw IoError("resume: malformed metrics row '" + line + "'");
        MetricRow row;
        row.step = std::stoull(cells[0]);
        row.is_mean = std::stod(cells[5]);
        row.is_std = std::stod(cells[6]);
        row.fid = std::stod(cells[7]);
        row.loss_d = std::stod(cells[8]);
        row.loss_g = std::stod(cells[9]);
        if (row.step <= up_to_step) rows.push_back(row);
    }
    return rows;
}

}  // namespace

void GanConfig::validate() const {
    if (batch_size < 2) throw ConfigError("gan.batch_size must be >= 2");
    if (total_steps == 0) throw ConfigError("gan.total_steps must be positive");
    if (metric_interval == 0 || total_steps % metric_interval != 0)
        throw ConfigError("gan.metric_interval must divide gan.total_steps");
    if (metric_batches == 0 || metric_batch_size < 2) throw ConfigError("gan.metric_batches/metric_batch_size too small");
    if (!(adam.lr > 0.0)) throw ConfigError("gan.lr must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
        throw ConfigError("gan.beta1/beta2 must lie in [0, 1)");
}

EvalContext make_eval_context(const SyntheticSpec& dataset, const ProbeOptions& probe_options) {
    LabeledVideos train = synth_dataset(dataset);
    SyntheticSpec held_spec = dataset;
    held_spec.seed = derive_seed(dataset.seed, 1);
    held_spec.samples_per_class = std::max<std::size_t>(50, dataset.samples_per_class / 2);
    const LabeledVideos held = synth_dataset(held_spec);
    Probe probe = train_probe(train, held, probe_options);
    Tensor features, probs;
    probe.evaluate(train.batch_channel_first(0, train.size()), &features, &probs);
    const std::size_t splits = 10, usable = train.size() / splits * splits;
    const std::size_t k = train.num_classes;
    Tensor usable_probs({usable, k}, std::vector<double>(probs.raw(), probs.raw() + usable * k));
    InceptionScore real_is = inception_score(usable_probs, splits);
    GaussianStats stats = fit_gaussian(features);
    return EvalContext{dataset, std::move(train), std::move(probe), std::move(stats), real_is};
}

Evaluation evaluate_generator(const VideoGan& gan, const EvalContext& context, const GanConfig& config) {
    const std::size_t n = config.metric_batches * config.metric_batch_size;
    Tensor features({n, kProbeFeatures}), probs({n, context.probe.num_classes()});
    const std::size_t k = context.probe.num_classes();
    const std::uint64_t seed = derive_seed(config.noise_seed, kEvalStream);
    // Chunked by metric batch to bound tape memory; rows keep their per-row seeds.
    for (std::size_t b = 0; b < config.metric_batches; ++b) {
        const std::size_t m = config.metric_batch_size, start = b * m;
        LatentBatch latents{Tensor({m, gan.latent_dim()}), {}};
        const LatentBatch all_rows = draw_latents(start + m, gan.latent_dim(), seed);
        std::copy_n(all_rows.content.raw() + start * gan.latent_dim(), m * gan.latent_dim(), latents.content.raw());
        latents.noise_seeds.assign(all_rows.noise_seeds.begin() + static_cast<std::ptrdiff_t>(start),
                                   all_rows.noise_seeds.end());
        Tape tape;
        const auto tb = gan.temporal->params().bind(tape, false);
        const auto ib = gan.image.params().bind(tape, false);
        const Tensor videos = generate(tape, gan, tb, ib, latents).videos.value();
        Tensor f, p;
        context.probe.evaluate(videos, &f, &p);
        std::copy_n(f.raw(), m * kProbeFeatures, features.raw() + start * kProbeFeatures);
        std::copy_n(p.raw(), m * k, probs.raw() + start * k);
    }
    const InceptionScore is = inception_score(probs, config.metric_batches);
    return {is.mean, is.std, frechet_distance(fit_gaussian(features), context.real_stats)};
}

std::size_t best_metric_row(const std::vector<MetricRow>& log) {
    if (log.empty()) throw ContractError("best_metric_row: empty log");
    std::size_t best = 0;
    for (std::size_t i = 1; i < log.size(); ++i)
        if (log[i].is_mean > log[best].is_mean) best = i;
    return best;
}

Checkpoint model_checkpoint(const VideoGan& gan) {
    Checkpoint out;
    add_params(out, "temporal.", gan.temporal->params());
    add_params(out, "image.", gan.image.params());
    add_params(out, "disc.", gan.disc.params());
    return out;
}

void load_model(VideoGan& gan, const Checkpoint& checkpoint) {
    load_params(gan.temporal->params(), "temporal.", checkpoint);
    load_params(gan.image.params(), "image.", checkpoint);
    load_params(gan.disc.params(), "disc.", checkpoint);
}

std::string metrics_csv_header() { return "step,family,order,fx_shape,param_count,is_mean,is_std,fid,loss_d,loss_g\n"; }

std::string metrics_csv_row(const MetricRow& row, const TemporalGeneratorSpec& spec, std::size_t param_count) {
    return std::to_string(row.step) + "," + spec.label() + "," + report_order(spec) + "," + report_fx_shape(spec) +
           "," + std::to_string(param_count) + "," + num(row.is_mean) + "," + num(row.is_std) + "," + num(row.fid) +
           "," + num(row.loss_d) + "," + num(row.loss_g) + "\n";
}

TrainResult train(VideoGan& gan, const GanConfig& config, const EvalContext& context, const TrainOptions& options) {
    config.validate();
    const VideoGeometry& g = gan.geometry();
    if (context.train.frames() != g.frames || context.train.height() != g.height || context.train.width() != g.width)
        throw ConfigError("train: dataset geometry does not match the model");

    AdamState adam_t{config.adam, {}, {}, 0}, adam_i{config.adam, {}, {}, 0}, adam_d{config.adam, {}, {}, 0};
    const Net nets[3] = {{"temporal", &gan.temporal->params(), &adam_t},
                         {"image", &gan.image.params(), &adam_i},
                         {"disc", &gan.disc.params(), &adam_d}};
    const std::size_t param_count = count_parameters(*gan.temporal);
    const auto& dir = options.output_dir;
    const bool writing = !dir.empty();

    TrainResult result;
    std::size_t start_step = 0;
    const auto latest_path = dir / "latest.ndck";
    if (options.resume && writing && std::filesystem::exists(latest_path)) {
        const Checkpoint ck = read_checkpoint(latest_path);
        if (const auto* meta = find_block(ck, "meta.config_json"); meta && block_text(*meta) != options.config_json)
            throw ConfigError("resume: configuration differs from the one in " + latest_path.string());
        load_model(gan, ck);
        for (const Net& net : nets) load_adam(*net.adam, net.prefix, *net.store, ck);
        start_step = static_cast<std::size_t>(require_block(ck, "meta.step").values.at(0));
        const auto& init = require_block(ck, "meta.initial").values;
        result.initial = {init.at(0), init.at(1), init.at(2)};
        result.log = read_metric_rows(dir / "metrics.csv", start_step);
        if (!result.log.empty()) {
            result.best_row = best_metric_row(result.log);
            result.best = read_checkpoint(dir / "best.ndck");
        }
    } else {
        result.initial = evaluate_generator(gan, context, config);
    }

    auto full_checkpoint = [&](std::size_t step) {
        Checkpoint ck = model_checkpoint(gan);
        for (const Net& net : nets) add_adam(ck, net.prefix, *net.store, *net.adam);
        ck.push_back({"meta.step", {static_cast<double>(step)}});
        ck.push_back({"meta.initial", {result.initial.is_mean, result.initial.is_std, result.initial.fid}});
        ck.push_back(text_block("meta.config_json", options.config_json));
        return ck;
    };
    auto with_meta = [&](Checkpoint ck, std::size_t step) {
        ck.push_back({"meta.step", {static_cast<double>(step)}});
        ck.push_back(text_block("meta.config_json", options.config_json));
        return ck;
    };
    std::string timings;
    if (writing && start_step == 0) std::filesystem::create_directories(dir / "checkpoints");

    const std::size_t b = config.batch_size, d = gan.latent_dim(), n = context.train.size();
    std::vector<std::size_t> idx(b);
    double train_seconds = 0.0, interval_seconds = 0.0;
    std::size_t steps_timed = 0, interval_steps = 0;
    std::size_t end_step = config.total_steps;
    if (options.stop_after) end_step = std::min(end_step, start_step + *options.stop_after);

    std::size_t step = start_step;
    for (; step < end_step; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        double loss_d = 0.0, loss_g = 0.0;
        try {
            Rng data_rng(derive_seed(config.data_seed, step));
            for (auto& i : idx) i = data_rng.below(n);
            {
                Tape tape;
                const auto tb = gan.temporal->params().bind(tape, false);
                const auto ib = gan.image.params().bind(tape, false);
                const auto db = gan.disc.params().bind(tape, true);
                const Var fake =
                    generate(tape, gan, tb, ib, draw_latents(b, d, derive_seed(config.noise_seed, step, 0))).videos;
                const Var real = tape.constant(context.train.gather_channel_first(idx));
                const GanLosses l = gan_losses(config.phi, gan.disc.forward(tape, db, real), gan.disc.forward(tape, db, fake));
                loss_d = l.loss_d.value().item();
                tape.backward(l.loss_d);
                gan.disc.params().pull_grads(tape, db);
            }
            adam_step(gan.disc.params(), adam_d);
            {
                Tape tape;
                const auto tb = gan.temporal->params().bind(tape, true);
                const auto ib = gan.image.params().bind(tape, true);
                const auto db = gan.disc.params().bind(tape, false);
                const Var fake =
                    generate(tape, gan, tb, ib, draw_latents(b, d, derive_seed(config.noise_seed, step, 1))).videos;
                const Var lg = generator_loss(config.phi, gan.disc.forward(tape, db, fake));
                loss_g = lg.value().item();
                tape.backward(lg);
                gan.temporal->params().pull_grads(tape, tb);
                gan.image.params().pull_grads(tape, ib);
            }
            adam_step(gan.temporal->params(), adam_t);
            adam_step(gan.image.params(), adam_i);
            if (!std::isfinite(loss_d) || !std::isfinite(loss_g)) throw NumericError("non-finite loss");
        } catch (const NumericError& e) {
            result.diverged = true;
            result.failure = "diverged at step " + std::to_string(step) + ": " + e.what();
            break;
        }
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        train_seconds += dt;
        interval_seconds += dt;
        ++steps_timed;
        ++interval_steps;

        const std::size_t done = step + 1;
        if (done % config.metric_interval == 0) {
            const Evaluation e = evaluate_generator(gan, context, config);
            result.log.push_back({done, e.is_mean, e.is_std, e.fid, loss_d, loss_g});
            const bool improved = !result.best_row || e.is_mean > result.log[*result.best_row].is_mean;
            if (improved) {
                result.best_row = result.log.size() - 1;
                result.best = model_checkpoint(gan);
            }
            if (writing) {
                const Checkpoint params = with_meta(model_checkpoint(gan), done);
                write_checkpoint(dir / "checkpoints" / ("step_" + std::to_string(done) + ".ndck"), params);
                if (improved) write_checkpoint(dir / "best.ndck", with_meta(result.best, done));
                std::string csv = metrics_csv_header();
                for (const auto& row : result.log) csv += metrics_csv_row(row, gan.temporal->spec(), param_count);
                write_file(dir / "metrics.csv", csv);
                write_checkpoint(latest_path, full_checkpoint(done));
                timings += std::to_string(done) + "," + num(interval_seconds / static_cast<double>(interval_steps)) + "\n";
            }
            interval_seconds = 0.0;
            interval_steps = 0;
        }
    }
    result.steps_completed = step;
    if (writing && !result.diverged) write_checkpoint(latest_path, full_checkpoint(step));
    if (writing && !timings.empty()) {
        std::string previous;
        if (start_step > 0 && std::filesystem::exists(dir / "timings.csv")) previous = read_file(dir / "timings.csv");
        if (previous.empty()) previous = "step,seconds_per_step\n";
        write_file(dir / "timings.csv", previous + timings);
    }
    result.seconds_per_step = steps_timed ? train_seconds / static_cast<double>(steps_timed) : 0.0;
    return result;
}

std::string report_order(const TemporalGeneratorSpec& spec) {
    return spec.family == Family::ode || spec.family == Family::sde ? std::to_string(spec.order) : "-";
}

std::string report_fx_shape(const TemporalGeneratorSpec& spec) {
    return spec.family == Family::ode || spec.family == Family::sde ? to_string(spec.fx_shape) : "-";
}

std::vector<MetricReport> ablation_run(const std::vector<TemporalGeneratorSpec>& specs, const SolverSettings& solver,
                                       const GanConfig& config, const EvalContext& context,
                                       const std::filesystem::path& output_dir, const std::string& config_json) {
    if (specs.empty()) throw ContractError("ablation_run: no families");
    for (const auto& s : specs)
        if (s.latent_dim != specs[0].latent_dim || s.num_frames != specs[0].num_frames)
            throw ContractError("ablation_run: all families must share latent_dim and num_frames");
    const VideoGeometry geometry{context.train.frames(), context.train.height(), context.train.width()};
    std::vector<MetricReport> rows;
    for (const auto& spec : specs) {
        MetricReport row;
        row.family = spec.label();
        row.order = report_order(spec);
        row.fx_shape = report_fx_shape(spec);
        VideoGan gan(spec, solver, geometry, config.param_seed);
        row.param_count = count_parameters(*gan.temporal);
        TrainOptions options;
        if (!output_dir.empty()) options.output_dir = output_dir / spec.label();
        options.config_json = config_json;
        const TrainResult r = train(gan, config, context, options);
        row.initial = r.initial;
        row.seconds_per_step = r.seconds_per_step;
        row.log_rows = r.log.size();
        if (!r.log.empty()) row.final_step = r.log.back().step;
        if (r.diverged || !r.best_row) {
            row.failed = true;
            row.failure = r.diverged ? r.failure : "no metric rows";
            row.is_mean = row.is_std = row.fid = std::numeric_limits<double>::quiet_NaN();
        } else {
            const MetricRow& best = r.log[*r.best_row];
            row.is_mean = best.is_mean;
            row.is_std = best.is_std;
            row.fid = best.fid;
            row.best_step = best.step;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string report_csv(const std::vector<MetricReport>& rows) {
    std::string out = "family,order,fx_shape,param_count,is_mean,is_std,fid,seconds_per_step\n";
    for (const auto& r : rows)
        out += r.family + "," + r.order + "," + r.fx_shape + "," + std::to_string(r.param_count) + "," + num(r.is_mean) +
               "," + num(r.is_std) + "," + num(r.fid) + "," + num(r.seconds_per_step) + "\n";
    return out;
}

}  // namespace ndv
