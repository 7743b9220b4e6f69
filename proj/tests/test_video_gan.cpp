#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "ndv/checkpoint.hpp"
#include "ndv/errors.hpp"
#include "ndv/rng.hpp"
#include "ndv/training.hpp"

using namespace ndv;
namespace fs = std::filesystem;

namespace {

const VideoGeometry kGeometry{8, 16, 16};

TemporalGeneratorSpec spec_for(Family family, int order = 1) {
    TemporalGeneratorSpec s;
    s.family = family;
    s.order = order;
    s.latent_dim = 6;
    return s;
}

const EvalContext& context() {
    static const EvalContext ctx = [] {
        SyntheticSpec ds;
        ds.samples_per_class = 64;
        ProbeOptions po;
        po.steps = 150;
        return make_eval_context(ds, po);
    }();
    return ctx;
}

GanConfig small_config() {
    GanConfig c;
    c.batch_size = 4;
    c.total_steps = 12;
    c.metric_interval = 4;
    c.metric_batches = 2;
    c.metric_batch_size = 4;
    return c;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ndv_test_" + name);
    fs::remove_all(p);
    return p;
}

double frame_at(const Tensor& v, std::size_t b, std::size_t t, std::size_t i) {
    const std::size_t frames = v.dim(2), px = v.dim(3) * v.dim(4);
    return v.raw()[(b * frames + t) * px + i];
}

}  // namespace

TEST_SUITE("video-gan") {
    TEST_CASE("gan loss examples") {
        const std::vector<double> zero{0.0, 0.0};
        auto [ld, lg] = gan_losses(Phi::bce, zero, zero);
        CHECK(std::abs(ld - 2.0 * std::numbers::ln2) < 1e-12);
        CHECK(std::abs(lg - std::numbers::ln2) < 1e-12);

        std::tie(ld, lg) = gan_losses(Phi::hinge, std::vector<double>{2.0}, std::vector<double>{-2.0});
        CHECK(ld == 0.0);
        CHECK(lg == 2.0);

        std::tie(ld, lg) = gan_losses(Phi::identity, std::vector<double>{1.0, 3.0}, std::vector<double>{0.0, 2.0});
        CHECK(ld == -1.0);
        CHECK(lg == -1.0);

        CHECK_THROWS_AS(gan_losses(Phi::bce, std::vector<double>{}, zero), ContractError);
        CHECK_THROWS_AS(parse_phi("wasserstein"), ConfigError);
    }

    TEST_CASE("identity loss scales with the scores") {
        Rng rng(4);
        std::vector<double> r(7), f(5);
        for (double& v : r) v = rng.normal();
        for (double& v : f) v = rng.normal();
        const double base = gan_losses(Phi::identity, r, f).first;
        for (double c : {0.5, 2.0, 8.0}) {
            std::vector<double> rc = r, fc = f;
            for (double& v : rc) v *= c;
            for (double& v : fc) v *= c;
            CHECK(std::abs(gan_losses(Phi::identity, rc, fc).first - c * base) < 1e-12);
        }
    }

    TEST_CASE("bce discriminator loss descends toward real=1, fake=0") {
        double real = 0.0, fake = 0.0;
        for (int i = 0; i < 500; ++i) {
            Tape tape;
            Var r = tape.leaf(Tensor::scalar(real), true), f = tape.leaf(Tensor::scalar(fake), true);
            tape.backward(gan_losses(Phi::bce, r, f).loss_d);
            real -= 0.5 * tape.grad(r)[0];
            fake -= 0.5 * tape.grad(f)[0];
        }
        CHECK(1.0 / (1.0 + std::exp(-real)) > 0.99);
        CHECK(1.0 / (1.0 + std::exp(-fake)) < 0.01);
    }

    TEST_CASE("image generator shapes and constant head") {
        ImageGenerator g(50, 16, 16, 3);
        CHECK(g.params()[0].value.shape() == Shape{100, 32 * 16});
        Tape tape;
        auto bound = g.params().bind(tape, false);
        CHECK_THROWS_AS(g.forward(tape, bound, tape.constant(Tensor({2, 50}))), ShapeError);

        for (std::size_t i = 4; i < 6; ++i) g.params()[i].value.fill(0.0);
        Tape tape2;
        bound = g.params().bind(tape2, false);
        Rng rng(1);
        Tensor z({3, 100});
        for (double& v : z.data()) v = rng.normal();
        const Tensor img = g.forward(tape2, bound, tape2.constant(z)).value();
        CHECK(img.shape() == Shape{3, 1, 16, 16});
        for (double v : img.values()) REQUIRE(v == 0.5);
    }

    TEST_CASE("frame i depends only on (z_c, z_i) for every family") {
        for (auto [family, order] : std::vector<std::pair<Family, int>>{
                 {Family::conv1d, 1}, {Family::lstm, 1}, {Family::ode, 1}, {Family::ode, 3}, {Family::sde, 1}}) {
            VideoGan gan(spec_for(family, order), {}, kGeometry, 9);
            Tape tape;
            const auto tb = gan.temporal->params().bind(tape, false);
            const auto ib = gan.image.params().bind(tape, false);
            const auto out = generate(tape, gan, tb, ib, draw_latents(2, 6, 17));
            auto latents = out.trajectory.frames;
            latents[3] = add_scalar(latents[3], 0.5);
            const Tensor a = out.videos.value();
            const Tensor b = generate_video(gan.image, ib, out.trajectory.content, latents).value();
            CHECK(a.shape() == Shape{2, 1, 8, 16, 16});
            for (std::size_t row = 0; row < 2; ++row)
                for (std::size_t t = 0; t < 8; ++t) {
                    bool same = true;
                    for (std::size_t i = 0; i < 256; ++i) same = same && frame_at(a, row, t, i) == frame_at(b, row, t, i);
                    CHECK(same == (t != 3));
                }
        }
    }

    TEST_CASE("discriminator contract") {
        Discriminator d(kGeometry, 5);
        Rng rng(2);
        Tensor x({3, 1, 8, 16, 16});
        for (double& v : x.data()) v = rng.uniform();
        Tape tape;
        auto bound = d.params().bind(tape, false);
        Var in = tape.leaf(x, true);
        const Var score = d.forward(tape, bound, in);
        CHECK(score.shape() == Shape{3});
        Tape tape2;
        auto bound2 = d.params().bind(tape2, false);
        CHECK(d.forward(tape2, bound2, tape2.constant(x)).value() == score.value());
        tape.backward(sum(score));
        const Tensor g = tape.grad(in);
        std::size_t nonzero = 0;
        for (double v : g.values()) nonzero += v != 0.0;
        CHECK(nonzero > g.numel() / 2);
        CHECK_THROWS_AS(d.forward(tape2, bound2, tape2.constant(Tensor({3, 1, 4, 16, 16}))), ShapeError);
    }

    TEST_CASE("sampling is deterministic and row-stable") {
        VideoGan gan(spec_for(Family::sde), {}, kGeometry, 4);
        const Tensor a = sample_videos(gan, 3, 77), b = sample_videos(gan, 3, 77), c = sample_videos(gan, 5, 77);
        CHECK(a == b);
        const std::size_t per = a.numel() / 3;
        CHECK(std::equal(a.raw(), a.raw() + a.numel(), c.raw()));
        CHECK(c.numel() == 5 * per);
        for (double v : a.values()) REQUIRE((v >= 0.0 && v <= 1.0));
    }

    TEST_CASE("interpolation and backtracking reuse the integer-time frames") {
        VideoGan ode(spec_for(Family::ode, 2), {}, kGeometry, 4);
        const Tensor base = sample_videos(ode, 2, 5);
        const Tensor dense = sample_videos(ode, 2, 5, 2);
        CHECK(dense.dim(2) == 15);
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t t = 0; t < 8; ++t)
                for (std::size_t i = 0; i < 256; ++i) REQUIRE(frame_at(dense, b, 2 * t, i) == frame_at(base, b, t, i));
        const Tensor back = sample_videos(ode, 2, 5, 1, 4);
        CHECK(back.dim(2) == 12);
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t t = 0; t < 8; ++t)
                for (std::size_t i = 0; i < 256; ++i) REQUIRE(frame_at(back, b, t + 4, i) == frame_at(base, b, t, i));
        VideoGan conv(spec_for(Family::conv1d), {}, kGeometry, 4);
        CHECK_THROWS_AS(sample_videos(conv, 1, 5, 2), UnsupportedError);
        VideoGan sde(spec_for(Family::sde), {}, kGeometry, 4);
        CHECK_THROWS_AS(sample_videos(sde, 1, 5, 1, 2), UnsupportedError);
    }

    TEST_CASE("discriminator alone separates real videos from untrained samples") {
        VideoGan gan(spec_for(Family::ode), {}, kGeometry, 21);
        const auto& train = context().train;
        AdamState adam;
        Rng rng(8);
        std::vector<std::size_t> idx(16);
        for (std::size_t step = 0; step < 200; ++step) {
            for (auto& i : idx) i = rng.below(train.size());
            Tape tape;
            const auto db = gan.disc.params().bind(tape);
            const Var real = tape.constant(train.gather_channel_first(idx));
            const Var fake = tape.constant(sample_videos(gan, 16, derive_seed(100, step)));
            tape.backward(gan_losses(Phi::bce, gan.disc.forward(tape, db, real), gan.disc.forward(tape, db, fake)).loss_d);
            gan.disc.params().pull_grads(tape, db);
            adam_step(gan.disc.params(), adam);
        }
        SyntheticSpec held;
        held.seed = 12345;
        held.samples_per_class = 32;
        const auto real = synth_dataset(held);
        Tape tape;
        const auto db = gan.disc.params().bind(tape, false);
        const Tensor sr = gan.disc.forward(tape, db, tape.constant(real.batch_channel_first(0, 64))).value();
        const Tensor sf = gan.disc.forward(tape, db, tape.constant(sample_videos(gan, 64, 999))).value();
        std::size_t correct = 0;
        for (double v : sr.values()) correct += v > 0.0;
        for (double v : sf.values()) correct += v < 0.0;
        CHECK(static_cast<double>(correct) / 128.0 > 0.9);
    }

    TEST_CASE("checkpoint round trip and corruption") {
        Checkpoint ck{{"a", {1.5, -0.0, 1e300}}, {"", {}}, {"\xc3\xa9t\xc3\xa9", {std::nan("")}}};
        const std::string bytes = encode_checkpoint(ck);
        CHECK(bytes.substr(0, 5) == std::string("NDCK\x01", 5));
        const Checkpoint back = decode_checkpoint(bytes);
        REQUIRE(back.size() == 3);
        CHECK(encode_checkpoint(back) == bytes);
        CHECK(std::signbit(back[0].values[1]));
        CHECK(back[2].name == "\xc3\xa9t\xc3\xa9");
        CHECK_THROWS_AS(decode_checkpoint("NDCX\x01"), IoError);
        CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), IoError);
        CHECK(block_text(text_block("t", "{\"k\": 1}")) == "{\"k\": 1}");

        VideoGan a(spec_for(Family::lstm), {}, kGeometry, 1), b(spec_for(Family::lstm), {}, kGeometry, 2);
        load_model(b, decode_checkpoint(encode_checkpoint(model_checkpoint(a))));
        CHECK(encode_checkpoint(model_checkpoint(a)) == encode_checkpoint(model_checkpoint(b)));
        VideoGan c(spec_for(Family::conv1d), {}, kGeometry, 1);
        CHECK_THROWS_AS(load_model(c, model_checkpoint(a)), IoError);
    }

    TEST_CASE("training log cadence, best row and determinism") {
        const GanConfig cfg = small_config();
        const fs::path d1 = scratch("train1"), d2 = scratch("train2");
        VideoGan g1(spec_for(Family::ode), {}, kGeometry, cfg.param_seed);
        VideoGan g2(spec_for(Family::ode), {}, kGeometry, cfg.param_seed);
        const TrainResult r1 = train(g1, cfg, context(), {d1, false, "{}", {}});
        const TrainResult r2 = train(g2, cfg, context(), {d2, false, "{}", {}});
        CHECK_FALSE(r1.diverged);
        CHECK(r1.log.size() == cfg.total_steps / cfg.metric_interval);
        REQUIRE(r1.best_row);
        CHECK(*r1.best_row == best_metric_row(r1.log));
        for (const auto& row : r1.log) CHECK(row.is_mean <= r1.log[*r1.best_row].is_mean);
        CHECK(read_file(d1 / "metrics.csv") == read_file(d2 / "metrics.csv"));
        CHECK(read_file(d1 / "latest.ndck") == read_file(d2 / "latest.ndck"));
        CHECK(read_file(d1 / "best.ndck") == read_file(d2 / "best.ndck"));
        CHECK(fs::exists(d1 / "checkpoints" / "step_12.ndck"));
        CHECK(r1.seconds_per_step > 0.0);
        CHECK(r1.initial.is_mean >= 1.0);
    }

    TEST_CASE("resumed training continues identically") {
        const GanConfig cfg = small_config();
        const fs::path full = scratch("full"), part = scratch("part");
        VideoGan a(spec_for(Family::sde), {}, kGeometry, cfg.param_seed);
        train(a, cfg, context(), {full, false, "cfg", {}});
        VideoGan b(spec_for(Family::sde), {}, kGeometry, cfg.param_seed);
        const TrainResult first = train(b, cfg, context(), {part, false, "cfg", 6});
        CHECK(first.steps_completed == 6);
        VideoGan c(spec_for(Family::sde), {}, kGeometry, 999);
        const TrainResult rest = train(c, cfg, context(), {part, true, "cfg", {}});
        CHECK(rest.steps_completed == 12);
        CHECK(rest.log.size() == 3);
        CHECK(read_file(full / "metrics.csv") == read_file(part / "metrics.csv"));
        CHECK(read_file(full / "latest.ndck") == read_file(part / "latest.ndck"));
        CHECK(read_file(full / "best.ndck") == read_file(part / "best.ndck"));
        VideoGan e(spec_for(Family::sde), {}, kGeometry, 1);
        CHECK_THROWS_AS(train(e, cfg, context(), {part, true, "other", {}}), ConfigError);
    }

    TEST_CASE("divergence stops training and keeps earlier checkpoints") {
        GanConfig cfg = small_config();
        cfg.phi = Phi::identity;
        cfg.adam.lr = 1e150;
        const fs::path dir = scratch("diverge");
        VideoGan gan(spec_for(Family::conv1d), {}, kGeometry, cfg.param_seed);
        const TrainResult r = train(gan, cfg, context(), {dir, false, "{}", {}});
        CHECK(r.diverged);
        CHECK(r.failure.find("diverged at step") != std::string::npos);
        CHECK(r.log.size() < cfg.total_steps / cfg.metric_interval);
    }

    TEST_CASE("config validation") {
        GanConfig c;
        c.metric_interval = 300;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = GanConfig{};
        c.batch_size = 1;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        TemporalGeneratorSpec s = spec_for(Family::ode);
        s.num_frames = 16;
        CHECK_THROWS_AS(VideoGan(s, {}, kGeometry, 1), ConfigError);
    }
}

TEST_SUITE("video-gan end-to-end gradient") {
    // The per-entry relative metric is meaningless for the many ~1e-9 entries
    // of the full composite, so this check is normwise per block with an
    // absolute floor of 1e-9 (the central-difference noise here is ~1e-11).
    TEST_CASE("D(G_i(G_t(z))) gradients match central differences blockwise") {
        const NetworkWidths narrow{2, 2, {2, 2, 2}};
        for (auto [family, order] : std::vector<std::pair<Family, int>>{{Family::ode, 2}, {Family::sde, 1}, {Family::lstm, 1}}) {
            TemporalGeneratorSpec spec = spec_for(family, order);
            spec.latent_dim = 3;
            VideoGan gan(spec, {}, {8, 8, 8}, 3, narrow);
            const LatentBatch latents = draw_latents(2, 3, 4);
            Rng rng(6);
            Tensor real({2, 1, 8, 8, 8});
            for (double& v : real.data()) v = rng.uniform();
            std::vector<ParameterStore*> stores{&gan.temporal->params(), &gan.image.params(), &gan.disc.params()};
            auto loss = [&](bool with_grad) {
                Tape tape;
                const auto tb = stores[0]->bind(tape, with_grad);
                const auto ib = stores[1]->bind(tape, with_grad);
                const auto db = stores[2]->bind(tape, with_grad);
                const Var fake = generate(tape, gan, tb, ib, latents).videos;
                const Var l = gan_losses(Phi::bce,
                                         gan.disc.forward(tape, db, tape.constant(real)), gan.disc.forward(tape, db, fake))
                                  .loss_d;
                if (with_grad) {
                    tape.backward(l);
                    stores[0]->pull_grads(tape, tb);
                    stores[1]->pull_grads(tape, ib);
                    stores[2]->pull_grads(tape, db);
                }
                return l.value().item();
            };
            loss(true);
            for (ParameterStore* store : stores)
                for (auto& p : store->all()) {
                    const Tensor analytic = p.grad;
                    double diff = 0.0, norm = 0.0;
                    for (std::size_t i = 0; i < p.value.numel(); ++i) {
                        const double keep = p.value[i];
                        p.value[i] = keep + 1e-5;
                        const double up = loss(false);
                        p.value[i] = keep - 1e-5;
                        const double down = loss(false);
                        p.value[i] = keep;
                        const double numeric = (up - down) / 2e-5;
                        diff += (analytic[i] - numeric) * (analytic[i] - numeric);
                        norm += numeric * numeric;
                    }
                    INFO(spec.label(), " ", p.name, " norm ", std::sqrt(norm));
                    CHECK(std::sqrt(diff) <= 1e-6 * std::sqrt(norm) + 1e-9);
                }
        }
    }
}
