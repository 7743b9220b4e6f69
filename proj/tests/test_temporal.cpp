#include <cmath>
#include <algorithm>
#include <cstdlib>

#include "doctest.h"
#include "ndv/errors.hpp"
#include "ndv/gradcheck.hpp"
#include "ndv/rng.hpp"
#include "ndv/temporal.hpp"

using namespace ndv;

namespace {

TemporalGeneratorSpec make_spec(Family family, std::size_t d, std::size_t frames, int order = 1) {
    TemporalGeneratorSpec spec;
    spec.family = family;
    spec.order = order;
    spec.latent_dim = d;
    spec.num_frames = frames;
    spec.seed = 1234;
    return spec;
}

Tensor random_content(std::size_t batch, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({batch, d});
    for (double& v : t.data()) v = rng.normal();
    return t;
}

std::vector<std::uint64_t> seeds_for(std::size_t batch) {
    std::vector<std::uint64_t> s;
    for (std::size_t i = 0; i < batch; ++i) s.push_back(derive_seed(5, 1, i));
    return s;
}

// Brute-force oracle: scan widths directly.
std::size_t brute_force_width(std::size_t target, std::size_t d) {
    std::size_t best = 1;
    long best_gap = -1;
    const std::size_t limit = std::max<std::size_t>(4096, target);
    for (std::size_t w = 1; w <= limit; ++w) {
        const long count = static_cast<long>(w * (2 * d + 1) + d);
        const long gap = std::labs(count - static_cast<long>(target));
        if (best_gap < 0 || gap < best_gap) {
            best = w;
            best_gap = gap;
        }
    }
    return best;
}

}  // namespace

TEST_SUITE("temporal-generators") {
    TEST_CASE("parameter counts") {
        auto ode = make_spec(Family::ode, 50, 16);
        CHECK(count_parameters(*build_temporal_generator(ode)) == 2550);

        ode.fx_shape = FxShape::two_layer;
        CHECK(count_parameters(*build_temporal_generator(ode)) == 5100);

        CHECK(count_parameters(*build_temporal_generator(make_spec(Family::lstm, 50, 16))) == 20200);

        auto with_prepend = make_spec(Family::ode, 50, 16);
        with_prepend.prepend_fcn_depth = 1;
        CHECK(count_parameters(*build_temporal_generator(with_prepend)) == 2550 + 2550);

        // Four transposed conv layers of d*d*4 weights + d biases.
        CHECK(count_parameters(*build_temporal_generator(make_spec(Family::conv1d, 50, 16))) == 4 * (50 * 50 * 4 + 50));
    }

    TEST_CASE("conv1d doubling stack") {
        CHECK(conv1d_layer_count(16) == 4);
        CHECK(conv1d_layer_count(8) == 3);
        const auto geometry = ConvGeometry::uniform(1, 4, 2, 1);
        std::size_t length = 1;
        std::vector<std::size_t> lengths;
        for (int i = 0; i < 4; ++i) lengths.push_back(length = geometry.transposed_out(0, length));
        CHECK(lengths == std::vector<std::size_t>{2, 4, 8, 16});

        auto gen = build_temporal_generator(make_spec(Family::conv1d, 5, 16));
        Tape tape;
        const auto traj = gen->generate(tape, gen->params().bind(tape), tape.constant(random_content(3, 5, 1)), {});
        CHECK(traj.frames.size() == 16);
        CHECK(traj.frames[0].shape() == Shape{3, 5});

        try {
            build_temporal_generator(make_spec(Family::conv1d, 5, 12));
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("16") != std::string::npos);
        }
    }

    TEST_CASE("spec validation") {
        auto bad_order = make_spec(Family::sde, 4, 8, 2);
        CHECK_THROWS_AS(bad_order.validate(), ConfigError);
        auto no_budget = make_spec(Family::ode, 4, 8);
        no_budget.fx_shape = FxShape::equal_params;
        CHECK_THROWS_AS(no_budget.validate(), ConfigError);
        auto stray_budget = make_spec(Family::ode, 4, 8);
        stray_budget.param_budget = 100;
        CHECK_THROWS_AS(stray_budget.validate(), ConfigError);
        CHECK_THROWS_AS(make_spec(Family::ode, 4, 1).validate(), ConfigError);
    }

    TEST_CASE("match_parameter_budget") {
        CHECK(match_parameter_budget(equal_params_count(37, 50, 0), 50, 0) == 37);
        CHECK(match_parameter_budget(20200, 50, 0) == brute_force_width(20200, 50));
        CHECK(match_parameter_budget(20200, 50, 0) == 200);
        CHECK_THROWS_AS(match_parameter_budget(10, 50, 0), ConfigError);

        Rng rng(8);
        for (int i = 0; i < 200; ++i) {
            const std::size_t d = 1 + rng.below(40);
            const std::size_t t1 = equal_params_count(1, d, 0) + rng.below(20000);
            const std::size_t t2 = t1 + rng.below(5000);
            CHECK(match_parameter_budget(t1, d, 0) == brute_force_width(t1, d));
            CHECK(match_parameter_budget(t2, d, 0) >= match_parameter_budget(t1, d, 0));
        }
    }

    TEST_CASE("equal_params specs land within 2% of the budget") {
        for (Family family : {Family::ode, Family::sde}) {
            for (std::size_t budget : {20200u, 40200u}) {
                for (std::size_t depth : {0u, 1u}) {
                    auto spec = make_spec(family, 50, 16);
                    spec.fx_shape = FxShape::equal_params;
                    spec.param_budget = budget;
                    spec.prepend_fcn_depth = depth;
                    const double count = static_cast<double>(count_parameters(*build_temporal_generator(spec)));
                    CHECK(std::abs(count - budget) / budget <= 0.02);
                }
            }
        }
    }

    TEST_CASE("prepend rule equalizes nonlinearity counts") {
        for (Family baseline : {Family::conv1d, Family::lstm}) {
            auto base = build_temporal_generator(make_spec(baseline, 4, 16));
            auto spec = make_spec(Family::ode, 4, 16);
            spec.prepend_fcn_depth = prepend_depth_for_baseline(baseline, 16);
            CHECK(build_temporal_generator(spec)->nonlinearity_count() == base->nonlinearity_count());
        }
        CHECK(prepend_depth_for_baseline(Family::conv1d, 16) == 3);
    }

    TEST_CASE("zero field gives a constant trajectory") {
        for (int order : {1, 2, 3}) {
            auto spec = make_spec(Family::ode, 4, 8, order);
            spec.prepend_fcn_depth = 1;
            auto gen = build_temporal_generator(spec);
            for (auto& p : gen->params().all())
                if (p.name.rfind("f.", 0) == 0) p.value.fill(0.0);
            Tape tape;
            const auto traj = gen->generate(tape, gen->params().bind(tape), tape.constant(random_content(2, 4, 3)), {});
            for (const Var& frame : traj.frames) CHECK(frame.value() == traj.frames[0].value());
            const auto back = gen->extrapolate_backward(tape, gen->params().bind(tape), traj, 3);
            for (const Var& frame : back) CHECK(frame.value() == traj.frames[0].value());
        }
    }

    TEST_CASE("oversampling reproduces integer-time latents bit for bit") {
        for (Family family : {Family::ode, Family::sde}) {
            auto gen = build_temporal_generator(make_spec(family, 4, 6));
            const Tensor content = random_content(3, 4, 9);
            GenerateOptions plain;
            plain.noise_seeds = seeds_for(3);
            GenerateOptions over = plain;
            over.oversample = 2;
            Tape t1, t2;
            const auto a = gen->generate(t1, gen->params().bind(t1), t1.constant(content), plain);
            const auto b = gen->generate(t2, gen->params().bind(t2), t2.constant(content), over);
            REQUIRE(b.dense.size() == 2 * (6 - 1) + 1);
            for (std::size_t t = 0; t < 6; ++t) {
                CHECK(a.frames[t].value() == b.frames[t].value());
                CHECK(b.dense[2 * t].value() == a.frames[t].value());
            }
        }
    }

    TEST_CASE("lstm produces T tanh-gated vectors") {
        auto gen = build_temporal_generator(make_spec(Family::lstm, 6, 16));
        Tape tape;
        const auto traj = gen->generate(tape, gen->params().bind(tape), tape.constant(random_content(4, 6, 2)), {});
        REQUIRE(traj.frames.size() == 16);
        for (const Var& f : traj.frames)
            for (double v : f.value().data()) CHECK((v > -1.0 && v < 1.0));
    }

    TEST_CASE("capability matrix") {
        const Tensor content = random_content(2, 4, 1);
        for (Family family : {Family::conv1d, Family::lstm, Family::ode, Family::sde}) {
            auto gen = build_temporal_generator(make_spec(family, 4, 8));
            Tape tape;
            const auto bound = gen->params().bind(tape);
            GenerateOptions over;
            over.oversample = 2;
            over.noise_seeds = seeds_for(2);
            const bool continuous = family == Family::ode || family == Family::sde;
            if (continuous) {
                CHECK_NOTHROW(gen->generate(tape, bound, tape.constant(content), over));
            } else {
                CHECK_THROWS_AS(gen->generate(tape, bound, tape.constant(content), over), UnsupportedError);
            }
            GenerateOptions plain;
            plain.noise_seeds = seeds_for(2);
            const auto traj = gen->generate(tape, bound, tape.constant(content), plain);
            if (family == Family::ode) {
                CHECK(gen->extrapolate_backward(tape, bound, traj, 2).size() == 2);
            } else {
                CHECK_THROWS_AS(gen->extrapolate_backward(tape, bound, traj, 2), UnsupportedError);
            }
            CHECK(gen->supports_backward() == (family == Family::ode));
            CHECK(gen->supports_oversampling() == continuous);
        }
    }

    TEST_CASE("backward then forward returns to z_0") {
        for (int order : {1, 2, 3}) {
            auto gen = build_temporal_generator(make_spec(Family::ode, 5, 8, order));
            Tape tape;
            const auto bound = gen->params().bind(tape);
            const auto traj = gen->generate(tape, bound, tape.constant(random_content(2, 5, 4)), {});
            const std::size_t n = 4;
            // Re-run the whole augmented state backward and then forward again.
            const auto grid_back = TimeGrid::per_unit(0.0, -static_cast<double>(n), 4);
            const auto grid_fwd = TimeGrid::per_unit(-static_cast<double>(n), 0.0, 4);
            const std::size_t d = 5;
            const VectorField top = [&](const Var& s, double) {
                Var x = order > 1 ? slice(s, 1, 0, d) : s;
                return apply_activation(add_bias(matmul(x, bound[0]), bound[1]), Activation::tanh);
            };
            const VectorField f = augment_to_first_order(top, order, d);
            const auto back = integrate_ode(f, traj.initial_state, SolverConfig{SolverMethod::rk4, grid_back});
            const auto fwd = integrate_ode(f, back.back(), SolverConfig{SolverMethod::rk4, grid_fwd});
            const auto extrap = gen->extrapolate_backward(tape, bound, traj, n);
            const Tensor& start = traj.initial_state.value();
            const Tensor& end = fwd.back().value();
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < start.numel(); ++i) {
                num += (end[i] - start[i]) * (end[i] - start[i]);
                den += start[i] * start[i];
            }
            CHECK(std::sqrt(num / den) < 1e-4);
            // The generator's extrapolation agrees with the manual backward sweep.
            const Var last = order > 1 ? slice(back.back(), 1, 0, d) : back.back();
            CHECK(extrap.back().value() == last.value());
        }
    }

    TEST_CASE("scalar linear field backward one unit") {
        Tape tape;
        const double a = 0.7;
        const VectorField f = [a](const Var& z, double) { return scale(z, a); };
        const auto back = integrate_ode(f, tape.constant(Tensor::vector({1.5})),
                                        SolverConfig{SolverMethod::rk4, TimeGrid::per_unit(0.0, -1.0, 4)});
        CHECK(std::abs(back.back().value()[0] - 1.5 * std::exp(-a)) < 1e-4);
    }

    TEST_CASE("drift outputs stay inside (-1, 1)") {
        SolverSettings euler;
        euler.ode_method = SolverMethod::euler;
        euler.ode_steps_per_unit = 1;
        for (FxShape shape : {FxShape::single_layer, FxShape::two_layer}) {
            auto spec = make_spec(Family::ode, 6, 8);
            spec.fx_shape = shape;
            for (double gain : {1.0, 25.0}) {
                auto gen = build_temporal_generator(spec, euler);
                for (auto& p : gen->params().all())
                    for (double& v : p.value.data()) v *= gain;
                Tape tape;
                const auto traj =
                    gen->generate(tape, gen->params().bind(tape), tape.constant(random_content(5, 6, 6)), {});
                for (std::size_t t = 1; t < traj.frames.size(); ++t) {
                    for (std::size_t i = 0; i < traj.frames[t].value().numel(); ++i) {
                        const double step = std::abs(traj.frames[t].value()[i] - traj.frames[t - 1].value()[i]);
                        // Saturated tanh rounds to exactly 1 in double precision, and the
                        // difference of two latents carries one more rounding.
                        if (gain == 1.0) CHECK(step < 1.0);
                        CHECK(step <= 1.0 + 1e-12);
                    }
                }
            }
        }
    }

    TEST_CASE("determinism") {
        for (Family family : {Family::conv1d, Family::lstm, Family::ode, Family::sde}) {
            auto run = [&] {
                auto gen = build_temporal_generator(make_spec(family, 4, 8));
                Tape tape;
                GenerateOptions options;
                options.noise_seeds = seeds_for(2);
                const auto traj =
                    gen->generate(tape, gen->params().bind(tape), tape.constant(random_content(2, 4, 7)), options);
                std::vector<Tensor> out;
                for (const Var& f : traj.frames) out.push_back(f.value());
                return out;
            };
            CHECK(run() == run());
        }
    }

    TEST_CASE("sde requires one noise seed per row") {
        auto gen = build_temporal_generator(make_spec(Family::sde, 4, 8));
        Tape tape;
        CHECK_THROWS_AS(gen->generate(tape, gen->params().bind(tape), tape.constant(random_content(2, 4, 1)), {}),
                        ContractError);
    }

    TEST_CASE("gradients through 16 frames match finite differences") {
        struct Case {
            Family family;
            int order;
        };
        for (const Case c : {Case{Family::conv1d, 1}, Case{Family::lstm, 1}, Case{Family::ode, 1},
                             Case{Family::ode, 2}, Case{Family::ode, 3}, Case{Family::sde, 1}}) {
            auto spec = make_spec(c.family, 3, 16, c.order);
            if (c.family == Family::ode || c.family == Family::sde) spec.prepend_fcn_depth = 1;
            auto gen = build_temporal_generator(spec);
            const Tensor content = random_content(2, 3, 21);
            Rng rng(99);
            Tensor probe({2, 3});
            for (double& v : probe.data()) v = rng.normal();
            std::vector<Tensor> params;
            for (const auto& p : gen->params().all()) params.push_back(p.value);
            const ScalarObjective objective = [&](Tape& tape, std::span<const Var> bound) {
                const std::vector<Var> b(bound.begin(), bound.end());
                GenerateOptions options;
                options.noise_seeds = seeds_for(2);
                const auto traj = gen->generate(tape, b, tape.constant(content), options);
                Var total = sum(mul(traj.frames[0], tape.constant(probe)));
                for (std::size_t t = 1; t < traj.frames.size(); ++t)
                    total = add(total, sum(mul(traj.frames[t], tape.constant(probe))));
                return total;
            };
            INFO("family ", spec.label());
            CHECK(grad_check(objective, params, 1e-5) < 1e-6);
        }
    }
}
