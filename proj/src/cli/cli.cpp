#include "ndv/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "ndv/checkpoint.hpp"
#include "ndv/config.hpp"
#include "ndv/errors.hpp"
#include "ndv/verification.hpp"
#include "ndv/video_io.hpp"

namespace ndv {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::size_t threads_from_env() {
    const char* raw = std::getenv("NDEV_THREADS");
    if (!raw) return 1;
    const std::string s(raw);
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }) || s.size() > 6 ||
        std::stoul(s) == 0)
        throw ConfigError("NDEV_THREADS must be a positive integer, got '" + s + "'");
    return std::stoul(s);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

struct LoadedModel {
    ExperimentConfig config;
    std::unique_ptr<VideoGan> gan;
};

LoadedModel load_checkpoint_model(const std::string& path) {
    const Checkpoint ck = read_checkpoint(path);
    LoadedModel m;
    m.config = parse_experiment_config(block_text(require_block(ck, "meta.config_json")));
    const VideoGeometry geometry{m.config.dataset.frames, m.config.dataset.height, m.config.dataset.width};
    m.gan = std::make_unique<VideoGan>(m.config.temporal, m.config.solver, geometry, m.config.gan.param_seed);
    load_model(*m.gan, ck);
    return m;
}

void export_videos(const Tensor& batch, const std::string& format, const fs::path& out_dir, std::ostream& out) {
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < batch.dim(0); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "sample_%04zu", i);
        const Tensor video = video_from_batch(batch, i);
        if (format == "ndev") write_ndev(out_dir / (std::string(name) + ".ndev"), video);
        else write_pgm_frames(out_dir / name, video);
    }
    out << "wrote " << batch.dim(0) << " " << format << " video(s) of " << batch.dim(2) << " frames to "
        << out_dir.string() << "\n";
}

std::vector<TemporalGeneratorSpec> specs_for(const TemporalGeneratorSpec& base, const std::vector<std::string>& labels) {
    std::vector<TemporalGeneratorSpec> specs;
    for (const auto& l : labels) {
        TemporalGeneratorSpec s = spec_for_label(base, l);
        s.validate();
        specs.push_back(s);
    }
    return specs;
}

int cmd_train(const std::string& config_path, bool resume, std::ostream& out, std::ostream& err) {
    const ExperimentConfig cfg = load_experiment_config(config_path);
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    write_file(dir / "config.json", cfg.canonical_json + "\n");
    const EvalContext ctx = make_eval_context(cfg.dataset, cfg.probe);
    out << "probe held-out accuracy " << fmt(ctx.probe.held_out_accuracy) << "\n";
    const VideoGeometry geometry{cfg.dataset.frames, cfg.dataset.height, cfg.dataset.width};
    VideoGan gan(cfg.temporal, cfg.solver, geometry, cfg.gan.param_seed);
    TrainOptions options{dir, resume, cfg.canonical_json, {}};
    const TrainResult r = train(gan, cfg.gan, ctx, options);
    out << "untrained: is " << fmt(r.initial.is_mean) << " fid " << fmt(r.initial.fid) << "\n";
    for (const auto& row : r.log)
        out << "step " << row.step << ": is " << fmt(row.is_mean) << " +- " << fmt(row.is_std) << " fid " << fmt(row.fid)
            << " loss_d " << fmt(row.loss_d) << " loss_g " << fmt(row.loss_g) << "\n";
    if (r.best_row) out << "best step " << r.log[*r.best_row].step << " (best.ndck)\n";
    out << "seconds_per_step " << fmt(r.seconds_per_step) << "\n";
    if (r.diverged) {
        err << "training failed: " << r.failure << " (last good checkpoint kept in " << dir.string() << ")\n";
        return kExitVerifyFailed;
    }
    return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& families, std::ostream& out) {
    const ExperimentConfig cfg = load_experiment_config(config_path);
    const auto specs = specs_for(cfg.temporal, split_list(families));
    if (specs.empty()) throw ConfigError("--families is empty");
    const EvalContext ctx = make_eval_context(cfg.dataset, cfg.probe);
    const auto rows = ablation_run(specs, cfg.solver, cfg.gan, ctx, cfg.output_dir, cfg.canonical_json);
    const std::string csv = report_csv(rows);
    write_file(fs::path(cfg.output_dir) / "report.csv", csv);
    out << csv;
    for (const auto& r : rows)
        if (r.failed) out << "family " << r.family << " failed: " << r.failure << "\n";
    return kExitOk;
}

int cmd_gradcheck(const std::string& config_path, const std::string& families, const std::string& fault,
                  std::ostream& out) {
    const ExperimentConfig cfg = load_experiment_config(config_path);
    GradCheckSuiteOptions options;
    if (!fault.empty()) options.fault_block = fault;
    const auto specs = specs_for(cfg.temporal, split_list(families));
    const auto entries = gradcheck_suite(specs, cfg.solver, options);
    bool ok = true;
    for (const auto& e : entries) {
        const bool pass = e.report.max_relative_error < kGradCheckTolerance;
        ok = ok && pass;
        out << e.label << " max_relative_error " << fmt(e.report.max_relative_error) << (pass ? " PASS" : " FAIL") << "\n";
        if (!pass)
            for (const auto& b : e.report.blocks)
                if (!(b.max_relative_error < kGradCheckTolerance))
                    out << "  worst in " << b.name << ": entry " << b.worst_index << " analytic " << fmt(b.analytic)
                        << " numeric " << fmt(b.numeric) << " error " << fmt(b.max_relative_error) << "\n";
    }
    return ok ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"ndvideo: neural-differential video generation toolkit", "ndvideo"};
    app.require_subcommand(1);
    std::string all_families;
    for (const auto& l : family_labels()) all_families += (all_families.empty() ? "" : ",") + l;

    std::string config_path, checkpoint, format = "ndev", out_dir, families = all_families, fault;
    bool resume = false;
    std::size_t count = 1, factor = 1, frames = 0;
    std::uint64_t seed = 0;

    auto* train_cmd = app.add_subcommand("train", "train one generator from a config");
    train_cmd->add_option("config", config_path, "experiment JSON")->required();
    train_cmd->add_flag("--resume", resume, "continue from output_dir/latest.ndck");

    auto* ablate_cmd = app.add_subcommand("ablate", "train several temporal families and write report.csv");
    ablate_cmd->add_option("config", config_path, "experiment JSON")->required();
    ablate_cmd->add_option("--families", families, "comma list of conv1d,lstm,ode1,ode2,ode3,sde");

    auto add_sampling = [&](CLI::App* cmd) {
        cmd->add_option("checkpoint", checkpoint, "NDCK checkpoint")->required();
        cmd->add_option("--count", count, "number of videos")->check(CLI::PositiveNumber);
        cmd->add_option("--seed", seed, "sampling seed")->required();
        cmd->add_option("--format", format, "ndev or pgm")->check(CLI::IsMember({"ndev", "pgm"}));
        cmd->add_option("--out", out_dir, "output directory")->required();
    };
    auto* sample_cmd = app.add_subcommand("sample", "draw videos from a checkpoint");
    add_sampling(sample_cmd);
    auto* interp_cmd = app.add_subcommand("interpolate", "render k(T-1)+1 frames from intermediate latents");
    add_sampling(interp_cmd);
    interp_cmd->add_option("--factor", factor, "frame-rate factor k")->required()->check(CLI::PositiveNumber);
    auto* back_cmd = app.add_subcommand("backtrack", "prepend n frames before t = 0 (ode only)");
    add_sampling(back_cmd);
    back_cmd->add_option("--frames", frames, "pre-roll frames n")->required();

    auto* grad_cmd = app.add_subcommand("gradcheck", "compare tape gradients with central differences");
    grad_cmd->add_option("config", config_path, "experiment JSON")->required();
    grad_cmd->add_option("--families", families, "comma list of families");
    grad_cmd->add_option("--inject-fault", fault, "test hook: corrupt the analytic gradient of this block");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return kExitConfig;
    }

    try {
        threads_from_env();
        if (train_cmd->parsed()) return cmd_train(config_path, resume, out, err);
        if (ablate_cmd->parsed()) return cmd_ablate(config_path, families, out);
        if (grad_cmd->parsed()) return cmd_gradcheck(config_path, families, fault, out);
        const LoadedModel m = load_checkpoint_model(checkpoint);
        std::size_t oversample = 1, backtrack = 0;
        if (interp_cmd->parsed()) oversample = factor;
        if (back_cmd->parsed()) backtrack = frames;
        export_videos(sample_videos(*m.gan, count, seed, oversample, backtrack), format, out_dir, out);
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ContractError& e) {
        err << "invalid argument: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const UnsupportedError& e) {
        err << e.what() << "\n";
        return kExitUnsupported;
    } catch (const fs::filesystem_error& e) {
        err << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitVerifyFailed;
    }
}

}  // namespace ndv
