#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ndv/data.hpp"
#include "ndv/errors.hpp"
#include "ndv/metrics.hpp"
#include "ndv/rng.hpp"

using namespace ndv;

namespace {

Tensor rows(std::vector<std::vector<double>> r) {
    Tensor t({r.size(), r[0].size()});
    for (std::size_t i = 0; i < r.size(); ++i) std::copy(r[i].begin(), r[i].end(), t.raw() + i * r[0].size());
    return t;
}

Tensor eye(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.raw()[i * n + i] = 1.0;
    return t;
}

Tensor product(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.dim(0), m = b.dim(1), k = a.dim(1);
    Tensor c({n, m});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t l = 0; l < k; ++l) s += a.at(i, l) * b.at(l, j);
            c.raw()[i * m + j] = s;
        }
    return c;
}

double frobenius(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v * v;
    return std::sqrt(s);
}

// Start column of the (possibly wrapping) bar in a single frame row.
std::size_t bar_start(const Tensor& video, std::size_t t, std::size_t w, std::size_t h) {
    const double* row = video.raw() + t * h * w;
    for (std::size_t x = 0; x < w; ++x)
        if (row[x] > 0.5 && row[(x + w - 1) % w] < 0.5) return x;
    return w;
}

}  // namespace

TEST_SUITE("data-metrics") {
    TEST_CASE("inception score examples") {
        CHECK(inception_score(rows({{0.5, 0.5}, {0.5, 0.5}}), 1).mean == 1.0);
        CHECK(inception_score(rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), 1).mean == doctest::Approx(3.0).epsilon(1e-12));
        // python: exp(0.9*log(0.9/0.5) + 0.1*log(0.1/0.5))
        const auto is = inception_score(rows({{0.9, 0.1}, {0.1, 0.9}, {0.9, 0.1}, {0.1, 0.9}}), 1);
        CHECK(std::abs(is.mean - 1.4449348111684153) < 1e-9);
        CHECK(is.std == 0.0);
    }

    TEST_CASE("inception score splits and contracts") {
        const auto is = inception_score(rows({{1, 0}, {0, 1}, {0.5, 0.5}, {0.5, 0.5}}), 2);
        CHECK(is.mean == doctest::Approx(1.5));
        CHECK(is.std == doctest::Approx(0.5));
        CHECK_THROWS_AS(inception_score(rows({{0.5, 0.6}}), 1), ContractError);
        CHECK_THROWS_AS(inception_score(rows({{1.5, -0.5}}), 1), ContractError);
        CHECK_THROWS_AS(inception_score(rows({{1, 0}, {0, 1}, {1, 0}}), 2), ContractError);
    }

    TEST_CASE("inception score is permutation invariant and bounded") {
        Rng rng(3);
        const std::size_t n = 40, k = 5;
        Tensor p({n, k});
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < k; ++j) s += (p.raw()[i * k + j] = rng.uniform() + 1e-3);
            for (std::size_t j = 0; j < k; ++j) p.raw()[i * k + j] /= s;
        }
        Tensor q({n, k});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) q.raw()[i * k + j] = p.at(n - 1 - i, j);
        const double a = inception_score(p, 1).mean, b = inception_score(q, 1).mean;
        CHECK(std::abs(a - b) < 1e-12);
        CHECK(a >= 1.0);
        CHECK(a <= static_cast<double>(k));
    }

    TEST_CASE("matrix square root examples") {
        CHECK(matrix_sqrt_psd(eye(3)) == eye(3));
        const Tensor r = matrix_sqrt_psd(rows({{4, 0}, {0, 9}}));
        CHECK(r.at(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(r.at(1, 1) == doctest::Approx(3.0).epsilon(1e-14));
        CHECK(std::abs(r.at(0, 1)) < 1e-14);

        Rng rng(21);
        Tensor b({16, 16}), bt({16, 16});
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t j = 0; j < 16; ++j) bt.raw()[j * 16 + i] = b.raw()[i * 16 + j] = rng.normal();
        const Tensor s = product(b, bt);
        const Tensor root = matrix_sqrt_psd(s);
        Tensor diff = product(root, root);
        for (std::size_t i = 0; i < diff.numel(); ++i) diff.raw()[i] -= s.raw()[i];
        CHECK(frobenius(diff) / frobenius(s) < 1e-8);

        CHECK_THROWS_AS(matrix_sqrt_psd(rows({{1, 2}, {0, 1}})), ContractError);
        CHECK_THROWS_AS(matrix_sqrt_psd(rows({{1, 0}, {0, -1}})), ContractError);
        CHECK_THROWS_AS(matrix_sqrt_psd(Tensor({2, 3})), ShapeError);
    }

    TEST_CASE("frechet distance examples") {
        const Tensor mu = Tensor::vector({1, 2});
        CHECK(frechet_distance(mu, eye(2), mu, eye(2)) < 1e-12);
        CHECK(std::abs(frechet_distance(Tensor::vector({0, 0}), eye(2), Tensor::vector({3, 0}), eye(2)) - 9.0) < 1e-9);
        CHECK(std::abs(frechet_distance(Tensor::vector({0}), rows({{4}}), Tensor::vector({0}), rows({{1}})) - 1.0) < 1e-9);
        CHECK_THROWS_AS(frechet_distance(Tensor::vector({0}), eye(2), Tensor::vector({0, 0}), eye(2)), ShapeError);
    }

    TEST_CASE("frechet distance general case against scipy and symmetry") {
        const Tensor s1 = rows({{11.193943583593873, -1.0856961812858006, -9.96368940539666, 0.9139455040756931},
                                {-1.0856961812858006, 4.3855101081274235, -0.6990905105420782, 2.493382325171485},
                                {-9.96368940539666, -0.6990905105420782, 11.966247526810191, -2.0769745432107065},
                                {0.9139455040756931, 2.493382325171485, -2.0769745432107065, 1.7914766216758045}});
        const Tensor s2 = rows({{1.2464018045868253, 0.2659559817695706, 1.6901555008236795, -1.1472159085688218},
                                {0.2659559817695706, 2.942546736696721, 2.0221665366211754, 1.2076598702114705},
                                {1.6901555008236795, 2.0221665366211754, 4.14285832931902, -1.0504166136289306},
                                {-1.1472159085688218, 1.2076598702114705, -1.0504166136289306, 1.934865310300043}});
        const Tensor m1 = Tensor::vector({1, 2, 3, 4}), m2 = Tensor::vector({0.5, -1, 2, 0});
        // scipy.linalg.sqrtm(S1 @ S2) trace form
        const double ab = frechet_distance(m1, s1, m2, s2);
        CHECK(std::abs(ab - 43.64229208740052) < 1e-9);
        CHECK(std::abs(ab - frechet_distance(m2, s2, m1, s1)) < 1e-9);
        CHECK(frechet_distance(m1, s1, m1, s1) < 1e-9);
    }

    TEST_CASE("fit_gaussian moments") {
        const auto g = fit_gaussian(rows({{1, 0}, {3, 2}, {5, 1}}));
        CHECK(g.mean == Tensor::vector({3, 1}));
        CHECK(g.cov.at(0, 0) == doctest::Approx(4.0));
        CHECK(g.cov.at(0, 1) == doctest::Approx(1.0));
        CHECK(g.cov.at(1, 1) == doctest::Approx(1.0));
    }

    TEST_CASE("synthetic data contracts") {
        SyntheticSpec spec;
        spec.samples_per_class = 6;
        for (auto kind : {SyntheticKind::moving_bar, SyntheticKind::bouncing_ball}) {
            spec.kind = kind;
            spec.num_classes = kind == SyntheticKind::moving_bar ? 4 : 6;
            const auto a = synth_dataset(spec), b = synth_dataset(spec);
            CHECK(a.videos == b.videos);
            CHECK(a.labels == b.labels);
            CHECK(a.video(0).shape() == Shape{8, 1, 16, 16});
            for (double v : a.videos.values()) {
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 1.0);
            }
            for (std::size_t c = 0; c < spec.num_classes; ++c)
                CHECK(std::count(a.labels.begin(), a.labels.end(), c) == 6);
        }
        spec.kind = SyntheticKind::moving_bar;
        spec.num_classes = 5;
        CHECK_THROWS_AS(synth_dataset(spec), ConfigError);
        spec.kind = SyntheticKind::bouncing_ball;
        spec.num_classes = 2;
        spec.height = spec.width = 3;
        CHECK_THROWS_AS(synth_dataset(spec), ConfigError);
        spec.num_classes = 1;
        CHECK_THROWS_AS(synth_dataset(spec), ConfigError);
    }

    TEST_CASE("rightward bar centroid advances one pixel per frame mod W") {
        SyntheticSpec spec;
        spec.samples_per_class = 10;
        spec.frames = 20;
        const auto data = synth_dataset(spec);
        const std::size_t w = 16, thickness = bar_thickness(w);
        CHECK(thickness == 2);
        for (std::size_t i = 0; i < data.size(); ++i) {
            const Tensor v = data.video(i);
            for (std::size_t t = 0; t + 1 < spec.frames; ++t) {
                const std::size_t a = bar_start(v, t, w, 16), b = bar_start(v, t + 1, w, 16);
                REQUIRE(a < w);
                if (data.labels[i] == 0) CHECK((b + w - a) % w == 1);
                else CHECK((a + w - b) % w == 1);
            }
        }
    }

    TEST_CASE("bouncing ball stays inside the frame") {
        SyntheticSpec spec;
        spec.kind = SyntheticKind::bouncing_ball;
        spec.num_classes = 3;
        spec.samples_per_class = 4;
        spec.frames = 40;
        const auto data = synth_dataset(spec);
        for (std::size_t i = 0; i < data.size(); ++i) {
            const Tensor v = data.video(i);
            for (std::size_t t = 0; t < spec.frames; ++t) {
                double mass = 0;
                for (std::size_t p = 0; p < 256; ++p) mass += (v.raw()[t * 256 + p] - kBackgroundLevel) / (kForegroundLevel - kBackgroundLevel);
                CHECK(mass > 5.0);  // a radius-2 disk is never clipped by the border
            }
        }
    }

    TEST_CASE("probe: chance when untrained, accurate after training, deterministic") {
        SyntheticSpec spec;
        spec.samples_per_class = 64;
        const auto train = synth_dataset(spec);
        spec.seed = 99;
        spec.samples_per_class = 50;
        const auto held = synth_dataset(spec);

        Probe fresh(8, 16, 16, 2, 5);
        CHECK(std::abs(fresh.accuracy(held) - 0.5) <= 0.1 + 1e-12);

        ProbeOptions opt;
        const Probe a = train_probe(train, held, opt);
        CHECK(a.held_out_accuracy > 0.95);
        const Probe b = train_probe(train, held, opt);
        CHECK(a.params()[0].value == b.params()[0].value);
        CHECK(a.held_out_accuracy == b.held_out_accuracy);

        const Tensor p = a.probabilities(held.batch_channel_first(0, 10));
        CHECK(p.shape() == Shape{10, 2});
        CHECK(a.features(held.batch_channel_first(0, 3)).shape() == Shape{3, kProbeFeatures});

        spec.samples_per_class = 20;
        CHECK_THROWS_AS(train_probe(synth_dataset(spec), held, opt), ContractError);
    }
}
