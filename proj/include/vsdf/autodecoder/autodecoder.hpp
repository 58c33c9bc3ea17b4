#pragma once

#include "vsdf/geometry/marching_cubes.hpp"
#include "vsdf/geometry/sampling.hpp"
#include "vsdf/nn/mlp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vsdf {

/// Shape code z; stored in single precision like the decoder weights.
using LatentVector = Eigen::VectorXf;

/// f(z, x) -> signed distance. The network input is z followed by x.
template <typename Scalar>
struct DecoderWeights {
    nn::Mlp<Scalar> net;
    int latent_dim = 0;

    template <typename Other>
    DecoderWeights<Other> cast() const {
        return {net.template cast<Other>(), latent_dim};
    }
};

/// Six ReLU layers of `width`, input re-joined at layer 3, scalar output.
nn::Architecture decoder_architecture(int latent_dim, int width = 128, int hidden_layers = 6, int skip_layer = 3);

template <typename Scalar>
DecoderWeights<Scalar> make_decoder(int latent_dim, std::uint64_t seed, int width = 128, int hidden_layers = 6,
                                    int skip_layer = 3) {
    return {nn::Mlp<Scalar>::random(decoder_architecture(latent_dim, width, hidden_layers, skip_layer), seed),
            latent_dim};
}

template <typename Scalar>
void check_latent(const DecoderWeights<Scalar>& w, Eigen::Index dim) {
    if (dim != w.latent_dim)
        throw InvalidArgument("latent dimension " + std::to_string(dim) + " does not match decoder dimension " +
                              std::to_string(w.latent_dim));
}

template <typename Scalar>
nn::Matrix<Scalar> decoder_input(const nn::Vector<Scalar>& z, const Point3& x) {
    nn::Matrix<Scalar> in(z.size() + 3, 1);
    in.col(0) << z, x.cast<Scalar>();
    return in;
}

template <typename Scalar>
Scalar decoder_forward(const DecoderWeights<Scalar>& w, const nn::Vector<Scalar>& z, const Point3& x) {
    check_latent(w, z.size());
    return w.net.forward(decoder_input(z, x))(0, 0);
}

template <typename Scalar>
struct DecoderGradients {
    nn::Mlp<Scalar> weights;  // d loss / d theta
    nn::Vector<Scalar> latent;
    Scalar prediction;
    Scalar loss;
};

/// Exact gradients of the squared error (f(z, x) - target)^2.
template <typename Scalar>
DecoderGradients<Scalar> decoder_gradients(const DecoderWeights<Scalar>& w, const nn::Vector<Scalar>& z,
                                           const Point3& x, Scalar target) {
    check_latent(w, z.size());
    typename nn::Mlp<Scalar>::Cache cache;
    const Scalar f = w.net.forward(decoder_input(z, x), cache)(0, 0);
    const Scalar r = f - target;
    DecoderGradients<Scalar> g{nn::Mlp<Scalar>(w.net.architecture()), {}, f, r * r};
    nn::Matrix<Scalar> dout(1, 1);
    dout(0, 0) = Scalar(2) * r;
    const nn::Matrix<Scalar> dx = w.net.backward(cache, dout, g.weights);
    g.latent = dx.col(0).head(w.latent_dim);
    return g;
}

/// d/dz of reg_weight * |z|^2.
template <typename Scalar>
nn::Vector<Scalar> regularization_gradient(const nn::Vector<Scalar>& z, Scalar reg_weight) {
    return Scalar(2) * reg_weight * z;
}

struct SdfTrainConfig {
    int latent_dim = 64;
    int width = 128;
    int hidden_layers = 6;
    int skip_layer = 3;
    int epochs = 100;
    int batch_size = 4096;
    double learning_rate = 5e-4;
    double latent_learning_rate = 1e-3;
    /// Multiply both rates by lr_decay every lr_decay_every epochs (0 disables).
    double lr_decay = 0.5;
    int lr_decay_every = 0;
    double reg_weight = 1e-4;
    double latent_init_sigma = 0.01;
    std::uint64_t seed = 1;

    void validate() const;
};

struct TrainReport {
    std::vector<double> data_loss;  // per epoch, mean squared error
    std::vector<double> reg_loss;   // per epoch, reg_weight * mean |z|^2 over batch points
    double probe_loss_initial = 0.0;
    double probe_loss_final = 0.0;
    double wall_seconds = 0.0;
};

struct TrainedAutodecoder {
    DecoderWeights<float> weights;
    std::vector<std::string> shape_ids;
    std::vector<LatentVector> latents;
    TrainReport report;

    const LatentVector& latent(const std::string& shape_id) const;
};

/// Jointly fits decoder weights and one latent per shape by minimizing the
/// per-point squared error plus reg_weight * |z|^2.
///
/// Throws InvalidArgument for fewer than two shapes or an empty sample set and
/// TrainingDiverged (with epoch and batch) on a non-finite loss.
TrainedAutodecoder train_deepsdf(const std::vector<SampleSet>& corpus, const SdfTrainConfig& config);

struct InferConfig {
    int iterations = 400;
    double learning_rate = 5e-3;
    double reg_weight = 1e-4;
    double latent_init_sigma = 0.01;
    std::uint64_t seed = 1;
    int batch_size = 8192;
};

/// Mean data loss + regularization of a latent against a sample set.
double latent_loss(const DecoderWeights<float>& w, const LatentVector& z, const SampleSet& samples,
                   double reg_weight);

/// Fits a latent with the decoder frozen. Returns the lowest-loss iterate, so
/// the returned loss never exceeds the initial one. Starts from `init` when given.
LatentVector infer_latent(const DecoderWeights<float>& w, const SampleSet& samples, const InferConfig& config,
                          const LatentVector* init = nullptr);

/// Network of x alone with z folded into the biases; equals f(z, .) up to
/// float rounding.
nn::Mlp<float> condition_decoder(const DecoderWeights<float>& w, const LatentVector& z);

/// Batched field view of f(z, .), valid for concurrent use.
ShapeField decoder_field(const DecoderWeights<float>& w, const LatentVector& z, double bounding_radius = 1.0);

/// Evaluates the decoder over the lattice and extracts the zero level set.
Isosurface decode_to_mesh(const DecoderWeights<float>& w, const LatentVector& z, const GridSpec& grid);

}  // namespace vsdf
