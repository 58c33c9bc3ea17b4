#pragma once

#include "vsdf/autodecoder/autodecoder.hpp"
#include "vsdf/nn/mlp.hpp"
#include "vsdf/params/geom_params.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace vsdf {

/// Surrogate g(z) -> GeomParams.
///
/// Inputs are standardized and outputs de-standardized around the network, so
/// g(z) = out_shift + out_scale .* net((z - in_shift) .* in_scale). A freshly
/// constructed estimator has identity transforms.
template <typename Scalar>
struct EstimatorWeights {
    nn::Mlp<Scalar> net;
    nn::Vector<Scalar> in_shift, in_scale;
    nn::Vector<Scalar> out_shift, out_scale;

    EstimatorWeights() = default;
    explicit EstimatorWeights(nn::Mlp<Scalar> n) : net(std::move(n)) {
        const int m = net.architecture().input_dim;
        const int k = net.architecture().output_dim;
        in_shift = nn::Vector<Scalar>::Zero(m);
        in_scale = nn::Vector<Scalar>::Ones(m);
        out_shift = nn::Vector<Scalar>::Zero(k);
        out_scale = nn::Vector<Scalar>::Ones(k);
    }

    int latent_dim() const { return net.architecture().input_dim; }

    template <typename Other>
    EstimatorWeights<Other> cast() const {
        EstimatorWeights<Other> out(net.template cast<Other>());
        out.in_shift = in_shift.template cast<Other>();
        out.in_scale = in_scale.template cast<Other>();
        out.out_shift = out_shift.template cast<Other>();
        out.out_scale = out_scale.template cast<Other>();
        return out;
    }
};

/// Three ReLU layers of `width` and a linear 7-wide output.
nn::Architecture estimator_architecture(int latent_dim, int width = 128, int hidden_layers = 3);

template <typename Scalar>
void check_estimator_input(const EstimatorWeights<Scalar>& w, Eigen::Index dim) {
    if (dim != w.latent_dim())
        throw InvalidArgument("latent dimension " + std::to_string(dim) + " does not match estimator dimension " +
                              std::to_string(w.latent_dim()));
}

template <typename Scalar>
nn::Vector<Scalar> estimator_forward(const EstimatorWeights<Scalar>& w, const nn::Vector<Scalar>& z) {
    check_estimator_input(w, z.size());
    const nn::Vector<Scalar> in = (z - w.in_shift).cwiseProduct(w.in_scale);
    const nn::Vector<Scalar> y = w.net.forward(in).col(0);
    return w.out_shift + w.out_scale.cwiseProduct(y);
}

/// Value and gradient (w.r.t. z and the network parameters) of
/// mean_k (g(z)_k - target_k)^2.
template <typename Scalar>
struct EstimatorGradients {
    nn::Mlp<Scalar> weights;
    nn::Vector<Scalar> latent;
    nn::Vector<Scalar> prediction;
    Scalar loss;
};

template <typename Scalar>
EstimatorGradients<Scalar> estimator_gradients(const EstimatorWeights<Scalar>& w, const nn::Vector<Scalar>& z,
                                               const nn::Vector<Scalar>& target) {
    check_estimator_input(w, z.size());
    typename nn::Mlp<Scalar>::Cache cache;
    const nn::Matrix<Scalar> in = (z - w.in_shift).cwiseProduct(w.in_scale);
    const nn::Vector<Scalar> y = w.net.forward(in, cache).col(0);
    EstimatorGradients<Scalar> g{nn::Mlp<Scalar>(w.net.architecture()), {}, {}, Scalar(0)};
    g.prediction = w.out_shift + w.out_scale.cwiseProduct(y);
    const nn::Vector<Scalar> r = g.prediction - target;
    const Scalar k = Scalar(r.size());
    g.loss = r.squaredNorm() / k;
    nn::Matrix<Scalar> dout = (Scalar(2) / k) * r.cwiseProduct(w.out_scale);
    const nn::Matrix<Scalar> din = w.net.backward(cache, dout, g.weights);
    g.latent = din.col(0).cwiseProduct(w.in_scale);
    return g;
}

/// Raw prediction; p0 is learned, not forced to 1.
GeomParams estimate_params(const EstimatorWeights<float>& w, const LatentVector& z);

struct ParamRecord {
    LatentVector latent;
    GeomParams params;
};

struct EstimatorTrainConfig {
    int width = 128;
    int hidden_layers = 3;
    double train_fraction = 0.8;
    double test_fraction = 0.2;
    int epochs = 400;
    int batch_size = 64;
    double learning_rate = 5e-4;
    std::uint64_t seed = 1;
    /// Standardize inputs/outputs from training statistics.
    bool standardize = true;

    void validate() const;
};

struct SplitMetrics {
    double mse = 0.0;
    double r2 = 0.0;
    std::size_t count = 0;
};

struct EstimatorReport {
    SplitMetrics train, test;
    std::vector<double> epoch_loss;
    std::vector<std::size_t> test_indices;
};

struct TrainedEstimator {
    EstimatorWeights<float> weights;
    EstimatorReport report;
};

/// Mean squared error over all records and components, and the coefficient of
/// determination 1 - SSE/SST pooled over components.
SplitMetrics evaluate_estimator(const EstimatorWeights<float>& w, const std::vector<ParamRecord>& data);

/// Shuffles the records with config.seed, holds out test_fraction and fits the
/// rest with minibatch Adam. Throws InvalidArgument for fewer than 10 records
/// or fractions not summing to 1, TrainingDiverged on a non-finite loss.
TrainedEstimator train_estimator(const std::vector<ParamRecord>& data, const EstimatorTrainConfig& config);

/// Same, with an explicit held-out set (the split fractions are ignored).
TrainedEstimator train_estimator(const std::vector<ParamRecord>& train, const std::vector<ParamRecord>& test,
                                 const EstimatorTrainConfig& config);

struct LatentOptimConfig {
    int max_steps = 5000;
    double tolerance = 1e-6;
    double step_size = 1.0;
    /// Step multiplier after an accepted step; halving applies on any increase.
    double step_growth = 1.2;
    double min_step = 1e-12;
    double init_sigma = 0.01;
    /// Adds latent_reg * |z|^2 to the descent objective (0 = plain MSE).
    double latent_reg = 0.0;
    /// Initial spread in whitened coordinates when optimizing under a prior.
    double prior_init_sigma = 0.5;
    /// Penalty on |c|^2 in whitened coordinates under a prior. Small enough not
    /// to stop convergence at the default tolerance, large enough to keep the
    /// iterate where the decoder produces measurable cars.
    double prior_reg = 3e-7;
    bool keep_latents = false;

    void validate() const;
};

struct TraceRow {
    int iteration;
    GeomParams params;
    double mse;
};

struct OptimizationTrace {
    std::vector<TraceRow> rows;          // accepted iterates, starting with the initial one
    std::vector<LatentVector> latents;   // parallel to rows when keep_latents is set
    bool converged = false;
};

struct OptimizationResult {
    LatentVector latent;
    OptimizationTrace trace;
};

/// Gaussian fitted to a set of latent codes. Optimizing the whitened
/// coordinates c, with z = mean + factor c, preconditions descent by the code
/// covariance: steps follow the directions the codes actually vary in instead
/// of leaving the region the decoder and estimator were trained on.
struct LatentPrior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd factor;  // lower Cholesky factor of the (ridged) covariance

    int dim() const { return static_cast<int>(mean.size()); }
    Eigen::VectorXd to_latent(const Eigen::VectorXd& c) const { return mean + factor * c; }
};

/// Sample mean and covariance of the codes; the covariance gets
/// ridge * trace / dim added on the diagonal so the factor exists even when
/// the codes span a lower-dimensional subspace. Needs at least two codes.
LatentPrior fit_latent_prior(const std::vector<LatentVector>& codes, double ridge = 1e-6);

/// Called with each accepted row, e.g. to stream progress.
using TraceCallback = std::function<void(const TraceRow&)>;

/// z0 ~ N(0, init_sigma^2) drawn from init_seed.
LatentVector initial_latent(int dim, std::uint64_t init_seed, double sigma = 0.01);

/// Gradient descent on mse(g(z), target) with z only. A step that raises the
/// objective is rejected and the step size halved. Stops once the mse reaches
/// the tolerance (converged) or after max_steps / when the step underflows
/// (best iterate returned, converged = false).
OptimizationResult optimize_latent_to_target(const EstimatorWeights<float>& est, const GeomParams& target,
                                             std::uint64_t init_seed, const LatentOptimConfig& config = {},
                                             const TraceCallback& on_row = {});

/// Same descent in the prior's whitened coordinates, started from
/// c0 ~ N(0, prior_init_sigma^2) drawn from init_seed. Latents in the result
/// (and kept trace latents) are mapped back to z.
OptimizationResult optimize_latent_with_prior(const EstimatorWeights<float>& est, const LatentPrior& prior,
                                              const GeomParams& target, std::uint64_t init_seed,
                                              const LatentOptimConfig& config = {},
                                              const TraceCallback& on_row = {});

/// Same, starting from an explicit latent.
OptimizationResult optimize_latent_from(const EstimatorWeights<float>& est, const GeomParams& target,
                                        const LatentVector& init, const LatentOptimConfig& config = {},
                                        const TraceCallback& on_row = {});

}  // namespace vsdf
