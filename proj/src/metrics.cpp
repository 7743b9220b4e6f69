#include "ndv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "ndv/errors.hpp"
#include "ndv/optim.hpp"
#include "ndv/rng.hpp"

namespace ndv {

namespace {

using Mat = Eigen::MatrixXd;

Mat to_eigen(const Tensor& t) {
    Mat m(t.dim(0), t.dim(1));
    for (std::size_t r = 0; r < t.dim(0); ++r)
        for (std::size_t c = 0; c < t.dim(1); ++c) m(r, c) = t.at(r, c);
    return m;
}

Tensor from_eigen(const Mat& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) t.raw()[r * m.cols() + c] = m(r, c);
    return t;
}

void require_square(const Tensor& s, const char* what) {
    if (s.rank() != 2 || s.dim(0) != s.dim(1))
        throw ShapeError(std::string(what) + ": expected a square matrix, got " + shape_string(s.shape()));
}

Mat sqrt_psd(const Mat& s) {
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
        throw ContractError("matrix_sqrt_psd: matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> eig(s);
    if (eig.info() != Eigen::Success) throw NumericError("matrix_sqrt_psd: eigendecomposition failed");
    Eigen::VectorXd lambda = eig.eigenvalues();
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        if (lambda(i) < -1e-10 * scale)
            throw ContractError("matrix_sqrt_psd: matrix is indefinite (eigenvalue " + std::to_string(lambda(i)) + ")");
        lambda(i) = std::sqrt(std::max(lambda(i), 0.0));
    }
    return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

InceptionScore inception_score(const Tensor& probs, std::size_t splits) {
    if (probs.rank() != 2 || probs.dim(0) == 0 || probs.dim(1) == 0)
        throw ShapeError("inception_score: expected [N, K] probabilities, got " + shape_string(probs.shape()));
    const std::size_t n = probs.dim(0), k = probs.dim(1);
    if (splits == 0 || n % splits != 0)
        throw ContractError("inception_score: N=" + std::to_string(n) + " not divisible by splits=" + std::to_string(splits));
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = probs.at(i, j);
            if (!(p >= 0.0)) throw ContractError("inception_score: negative or non-finite probability in row " + std::to_string(i));
            row += p;
        }
        if (std::abs(row - 1.0) > 1e-6) throw ContractError("inception_score: row " + std::to_string(i) + " does not sum to 1");
    }
    const std::size_t per = n / splits;
    std::vector<double> scores(splits);
    for (std::size_t s = 0; s < splits; ++s) {
        std::vector<double> marginal(k, 0.0);
        for (std::size_t i = s * per; i < (s + 1) * per; ++i)
            for (std::size_t j = 0; j < k; ++j) marginal[j] += probs.at(i, j);
        for (double& m : marginal) m /= static_cast<double>(per);
        double kl = 0.0;
        for (std::size_t i = s * per; i < (s + 1) * per; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                const double p = probs.at(i, j);
                if (p > 0.0) kl += p * (std::log(p) - std::log(marginal[j]));
            }
        scores[s] = std::exp(kl / static_cast<double>(per));
    }
    InceptionScore out;
    out.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(splits);
    double var = 0.0;
    for (double v : scores) var += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(var / static_cast<double>(splits));
    return out;
}

Tensor matrix_sqrt_psd(const Tensor& s) {
    require_square(s, "matrix_sqrt_psd");
    if (!s.all_finite()) throw NumericError("matrix_sqrt_psd: non-finite input");
    return from_eigen(sqrt_psd(to_eigen(s)));
}

GaussianStats fit_gaussian(const Tensor& features) {
    if (features.rank() != 2 || features.dim(0) < 2)
        throw ShapeError("fit_gaussian: expected [N>=2, F] features, got " + shape_string(features.shape()));
    const std::size_t n = features.dim(0), f = features.dim(1);
    GaussianStats g{Tensor({f}), Tensor({f, f})};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) g.mean[j] += features.at(i, j);
    for (std::size_t j = 0; j < f; ++j) g.mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < f; ++a) {
            const double da = features.at(i, a) - g.mean[a];
            for (std::size_t b = a; b < f; ++b) g.cov.raw()[a * f + b] += da * (features.at(i, b) - g.mean[b]);
        }
    for (std::size_t a = 0; a < f; ++a)
        for (std::size_t b = a; b < f; ++b) {
            const double v = g.cov.at(a, b) / static_cast<double>(n - 1);
            g.cov.raw()[a * f + b] = v;
            g.cov.raw()[b * f + a] = v;
        }
    return g;
}

double frechet_distance(const Tensor& mu1, const Tensor& s1, const Tensor& mu2, const Tensor& s2) {
    require_square(s1, "frechet_distance");
    require_square(s2, "frechet_distance");
    const std::size_t f = s1.dim(0);
    if (mu1.numel() != f || mu2.numel() != f || s2.dim(0) != f)
        throw ShapeError("frechet_distance: dimension mismatch (" + shape_string(mu1.shape()) + ", " +
                         shape_string(s1.shape()) + ", " + shape_string(mu2.shape()) + ", " + shape_string(s2.shape()) + ")");
    double dist = 0.0;
    for (std::size_t i = 0; i < f; ++i) dist += (mu1[i] - mu2[i]) * (mu1[i] - mu2[i]);
    const Mat a = to_eigen(s1), b = to_eigen(s2);
    const Mat root_a = sqrt_psd(a);
    Mat inner = root_a * b * root_a;
    inner = 0.5 * (inner + inner.transpose());
    const double cross = sqrt_psd(inner).trace();
    dist += a.trace() + b.trace() - 2.0 * cross;
    return std::max(dist, 0.0);
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    return frechet_distance(a.mean, a.cov, b.mean, b.cov);
}

namespace {

constexpr double kProbeSlope = 0.2;
constexpr std::size_t kEvalChunk = 64;
const ConvGeometry kProbeConv = ConvGeometry::uniform(3, 3, 2, 1);

std::size_t down(std::size_t n) { return (n + 2 - 3) / 2 + 1; }

}  // namespace

Probe::Probe(std::size_t frames, std::size_t height, std::size_t width, std::size_t num_classes, std::uint64_t seed)
    : frames_(frames), height_(height), width_(width), classes_(num_classes) {
    if (num_classes < 2) throw ContractError("probe: need at least two classes");
    Rng rng(seed);
    params_.add("probe.conv0.weight", {8, 1, 3, 3, 3}, 27, rng);
    params_.add("probe.conv0.bias", {8}, 27, rng);
    params_.add("probe.conv1.weight", {16, 8, 3, 3, 3}, 8 * 27, rng);
    params_.add("probe.conv1.bias", {16}, 8 * 27, rng);
    flat_ = 16 * down(down(frames)) * down(down(height)) * down(down(width));
    params_.add("probe.fc.weight", {flat_, kProbeFeatures}, flat_, rng);
    params_.add("probe.fc.bias", {kProbeFeatures}, flat_, rng);
    params_.add("probe.out.weight", {kProbeFeatures, num_classes}, kProbeFeatures, rng);
    params_.add("probe.out.bias", {num_classes}, kProbeFeatures, rng);
}

Probe::Outputs Probe::forward(Tape&, const std::vector<Var>& p, const Var& videos) const {
    const Shape& s = videos.shape();
    if (s.size() != 5 || s[1] != 1 || s[2] != frames_ || s[3] != height_ || s[4] != width_)
        throw ShapeError("probe: expected [N,1," + std::to_string(frames_) + "," + std::to_string(height_) + "," +
                         std::to_string(width_) + "] videos, got " + shape_string(s));
    Var h = leaky_relu(conv(videos, p[0], p[1], kProbeConv), kProbeSlope);
    h = leaky_relu(conv(h, p[2], p[3], kProbeConv), kProbeSlope);
    h = reshape(h, {s[0], flat_});
    Var feats = apply_activation(add_bias(matmul(h, p[4]), p[5]), Activation::tanh);
    Var logits = add_bias(matmul(feats, p[6]), p[7]);
    return {feats, logits};
}

void Probe::evaluate(const Tensor& videos, Tensor* features, Tensor* probs) const {
    const std::size_t n = videos.dim(0), per = videos.numel() / std::max<std::size_t>(n, 1);
    if (features) *features = Tensor({n, kProbeFeatures});
    if (probs) *probs = Tensor({n, classes_});
    for (std::size_t start = 0; start < n; start += kEvalChunk) {
        const std::size_t count = std::min(kEvalChunk, n - start);
        Shape shape = videos.shape();
        shape[0] = count;
        Tensor chunk(shape, std::vector<double>(videos.raw() + start * per, videos.raw() + (start + count) * per));
        Tape tape;
        const auto bound = params_.bind(tape, false);
        const Outputs out = forward(tape, bound, tape.constant(std::move(chunk)));
        if (features)
            std::copy_n(out.features.value().raw(), count * kProbeFeatures, features->raw() + start * kProbeFeatures);
        if (probs) {
            const Tensor p = softmax_rows(out.logits.value());
            std::copy_n(p.raw(), count * classes_, probs->raw() + start * classes_);
        }
    }
}

Tensor Probe::features(const Tensor& videos) const {
    Tensor f;
    evaluate(videos, &f, nullptr);
    return f;
}

Tensor Probe::probabilities(const Tensor& videos) const {
    Tensor p;
    evaluate(videos, nullptr, &p);
    return p;
}

double Probe::accuracy(const LabeledVideos& data) const {
    if (data.size() == 0) throw ContractError("probe accuracy: empty dataset");
    const Tensor p = probabilities(data.batch_channel_first(0, data.size()));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < classes_; ++j)
            if (p.at(i, j) > p.at(i, best)) best = j;
        hits += best == data.labels[i];
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

Probe train_probe(const LabeledVideos& train, const LabeledVideos& held_out, const ProbeOptions& options) {
    const std::size_t k = train.num_classes;
    if (train.size() < 50 * k) throw ContractError("train_probe: need at least 50 training samples per class");
    if (options.batch_size == 0 || options.steps == 0) throw ContractError("train_probe: steps and batch_size must be positive");
    Probe probe(train.frames(), train.height(), train.width(), k, derive_seed(options.seed, 1));
    AdamState adam;
    adam.hyper.lr = options.lr;
    adam.hyper.beta1 = 0.9;
    Rng rng(derive_seed(options.seed, 2));
    std::vector<std::size_t> idx(options.batch_size), labels(options.batch_size);
    for (std::size_t step = 0; step < options.steps; ++step) {
        for (std::size_t i = 0; i < options.batch_size; ++i) {
            idx[i] = rng.below(train.size());
            labels[i] = train.labels[idx[i]];
        }
        Tape tape;
        const auto bound = probe.params().bind(tape);
        const auto out = probe.forward(tape, bound, tape.constant(train.gather_channel_first(idx)));
        tape.backward(softmax_cross_entropy(out.logits, labels));
        probe.params().pull_grads(tape, bound);
        adam_step(probe.params(), adam);
    }
    probe.held_out_accuracy = probe.accuracy(held_out);
    const double chance = 1.0 / static_cast<double>(k);
    if (probe.held_out_accuracy < chance + 0.1)
        throw TrainingError("train_probe: held-out accuracy " + std::to_string(probe.held_out_accuracy) +
                            " does not beat chance " + std::to_string(chance));
    return probe;
}

}  // namespace ndv
