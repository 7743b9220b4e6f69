#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ndv/autodiff.hpp"
#include "ndv/data.hpp"
#include "ndv/parameters.hpp"
#include "ndv/tensor.hpp"

namespace ndv {

struct InceptionScore {
    double mean = 0.0;
    double std = 0.0;
};

// exp(mean KL(p(y|x) || p(y))) per split; population std across splits.
InceptionScore inception_score(const Tensor& probs, std::size_t splits);

// Symmetric PSD square root through an eigendecomposition.
Tensor matrix_sqrt_psd(const Tensor& s);

struct GaussianStats {
    Tensor mean;  // [F]
    Tensor cov;   // [F, F], unbiased (N - 1)
};

GaussianStats fit_gaussian(const Tensor& features);

double frechet_distance(const Tensor& mu1, const Tensor& s1, const Tensor& mu2, const Tensor& s2);
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

constexpr std::size_t kProbeFeatures = 16;

struct ProbeOptions {
    std::size_t steps = 300;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    std::uint64_t seed = 11;
};

// Small 3-D conv classifier standing in for a pretrained video network.
//   conv3d 1->8 (k3 s2 p1), leaky_relu; conv3d 8->16 (k3 s2 p1), leaky_relu;
//   linear -> 16 tanh features; linear -> K logits.
class Probe {
public:
    Probe(std::size_t frames, std::size_t height, std::size_t width, std::size_t num_classes, std::uint64_t seed);

    struct Outputs {
        Var features;
        Var logits;
    };
    // videos: [N, 1, T, H, W].
    Outputs forward(Tape& tape, const std::vector<Var>& bound, const Var& videos) const;

    // Evaluated in chunks without gradients.
    Tensor features(const Tensor& videos) const;
    Tensor probabilities(const Tensor& videos) const;
    void evaluate(const Tensor& videos, Tensor* features, Tensor* probs) const;
    double accuracy(const LabeledVideos& data) const;

    std::size_t num_classes() const noexcept { return classes_; }
    ParameterStore& params() noexcept { return params_; }
    const ParameterStore& params() const noexcept { return params_; }

    double held_out_accuracy = 0.0;

private:
    std::size_t frames_, height_, width_, classes_, flat_ = 0;
    ParameterStore params_;
};

// Adam on cross-entropy; throws TrainingError when held-out accuracy does
// not beat chance (1/K) by at least 0.1.
Probe train_probe(const LabeledVideos& train, const LabeledVideos& held_out, const ProbeOptions& options);

}  // namespace ndv
