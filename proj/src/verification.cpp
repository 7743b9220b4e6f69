#include "ndv/verification.hpp"

#include "ndv/rng.hpp"

namespace ndv {

namespace {

Tensor random_normal(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.normal();
    return t;
}

GradCheckReport check_store(const ParameterStore& store, const std::string& prefix,
                            const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                            const GradCheckSuiteOptions& options) {
    std::vector<Tensor> params;
    std::vector<std::string> names;
    for (const auto& p : store.all()) {
        params.push_back(p.value);
        names.push_back(prefix + p.name);
    }
    GradCheckOptions gc;
    gc.eps = options.eps;
    if (options.fault_block)
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == *options.fault_block) gc.fault_block = i;
    const ScalarObjective objective = [&](Tape& tape, std::span<const Var> bound) {
        return f(tape, std::vector<Var>(bound.begin(), bound.end()));
    };
    return grad_check_report(objective, params, names, gc);
}

}  // namespace

std::vector<GradCheckEntry> gradcheck_suite(const std::vector<TemporalGeneratorSpec>& families,
                                            const SolverSettings& solver, const GradCheckSuiteOptions& options) {
    const VideoGeometry geometry{options.num_frames, options.height, options.width};
    const std::size_t b = options.batch, d = options.latent_dim;
    Rng rng(derive_seed(options.seed, 7));
    const LatentBatch latents = draw_latents(b, d, derive_seed(options.seed, 8));
    const Tensor latent_probe = random_normal({b, d}, rng);

    std::vector<GradCheckEntry> out;
    for (TemporalGeneratorSpec spec : families) {
        spec.latent_dim = d;
        spec.num_frames = options.num_frames;
        if ((spec.family == Family::ode || spec.family == Family::sde) && spec.prepend_fcn_depth == 0)
            spec.prepend_fcn_depth = 1;
        spec.seed = derive_seed(options.seed, 1);
        const auto gen = build_temporal_generator(spec, solver);
        auto f = [&](Tape& tape, const std::vector<Var>& bound) {
            GenerateOptions go;
            go.noise_seeds = latents.noise_seeds;
            const auto traj = gen->generate(tape, bound, tape.constant(latents.content), go);
            Var total = sum(mul(traj.frames[0], tape.constant(latent_probe)));
            for (std::size_t t = 1; t < traj.frames.size(); ++t)
                total = add(total, sum(mul(traj.frames[t], tape.constant(latent_probe))));
            return total;
        };
        out.push_back({"G_t:" + spec.label(), check_store(gen->params(), "temporal.", f, options)});
    }

    const ImageGenerator image(d, geometry.height, geometry.width, derive_seed(options.seed, 2), options.widths);
    const Tensor image_input = random_normal({b, 2 * d}, rng);
    const Tensor image_probe = random_normal({b, 1, geometry.height, geometry.width}, rng);
    out.push_back({"G_i", check_store(image.params(), "image.",
                                      [&](Tape& tape, const std::vector<Var>& bound) {
                                          const Var img = image.forward(tape, bound, tape.constant(image_input));
                                          return sum(mul(img, tape.constant(image_probe)));
                                      },
                                      options)});

    const Discriminator disc(geometry, derive_seed(options.seed, 3), options.widths);
    Tensor videos({b, 1, geometry.frames, geometry.height, geometry.width});
    for (double& v : videos.data()) v = rng.uniform();
    const Tensor score_probe = random_normal({b}, rng);
    out.push_back({"D", check_store(disc.params(), "disc.",
                                    [&](Tape& tape, const std::vector<Var>& bound) {
                                        const Var s = disc.forward(tape, bound, tape.constant(videos));
                                        return sum(mul(s, tape.constant(score_probe)));
                                    },
                                    options)});
    return out;
}

}  // namespace ndv
