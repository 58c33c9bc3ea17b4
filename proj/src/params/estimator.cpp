#include "vsdf/params/estimator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace vsdf {

nn::Architecture estimator_architecture(int latent_dim, int width, int hidden_layers) {
    if (latent_dim <= 0) throw InvalidArgument("estimator: latent_dim must be positive");
    nn::Architecture arch;
    arch.input_dim = latent_dim;
    arch.hidden.assign(hidden_layers, width);
    arch.output_dim = kNumParams;
    arch.validate();
    return arch;
}

GeomParams estimate_params(const EstimatorWeights<float>& w, const LatentVector& z) {
    return estimator_forward(w, z).cast<double>();
}

void EstimatorTrainConfig::validate() const {
    if (width <= 0 || hidden_layers <= 0 || epochs <= 0 || batch_size <= 0)
        throw InvalidArgument("EstimatorTrainConfig: sizes must be positive");
    if (!(learning_rate > 0)) throw InvalidArgument("EstimatorTrainConfig: learning rate must be positive");
    if (train_fraction <= 0 || test_fraction < 0 || std::abs(train_fraction + test_fraction - 1.0) > 1e-9)
        throw InvalidArgument(fmt::format("EstimatorTrainConfig: split fractions {} + {} must sum to 1",
                                          train_fraction, test_fraction));
}

SplitMetrics evaluate_estimator(const EstimatorWeights<float>& w, const std::vector<ParamRecord>& data) {
    SplitMetrics m;
    m.count = data.size();
    if (data.empty()) return m;
    GeomParams mean = GeomParams::Zero();
    for (const auto& r : data) mean += r.params;
    mean /= static_cast<double>(data.size());
    double sse = 0.0, sst = 0.0;
    for (const auto& r : data) {
        sse += (estimate_params(w, r.latent) - r.params).squaredNorm();
        sst += (r.params - mean).squaredNorm();
    }
    m.mse = sse / static_cast<double>(data.size() * kNumParams);
    m.r2 = sst > 0 ? 1.0 - sse / sst : (sse == 0 ? 1.0 : 0.0);
    return m;
}

namespace {

using MatrixF = nn::Matrix<float>;

void check_records(const std::vector<ParamRecord>& data, int dim, const char* what) {
    for (const auto& r : data) {
        if (r.latent.size() != dim)
            throw InvalidArgument(fmt::format("{}: mixed latent dimensions {} and {}", what, dim, r.latent.size()));
        if (!r.latent.allFinite() || !r.params.allFinite())
            throw InvalidArgument(fmt::format("{}: non-finite record", what));
    }
}

// Per-row mean and spread of the columns of x; tiny spreads are floored.
void column_stats(const MatrixF& x, double floor, Eigen::VectorXf& mean, Eigen::VectorXf& spread) {
    const Eigen::VectorXd xm = x.cast<double>().rowwise().mean();
    const Eigen::VectorXd var =
        (x.cast<double>().colwise() - xm).array().square().rowwise().mean().matrix();
    mean = xm.cast<float>();
    spread = var.cwiseSqrt().cwiseMax(floor).cast<float>();
}

}  // namespace

TrainedEstimator train_estimator(const std::vector<ParamRecord>& data, const EstimatorTrainConfig& config) {
    config.validate();
    if (data.size() < 10)
        throw InvalidArgument(fmt::format("train_estimator: need at least 10 records, got {}", data.size()));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(config.test_fraction * data.size()));
    std::vector<ParamRecord> train, test;
    std::vector<std::size_t> test_idx(order.begin(), order.begin() + n_test);
    std::sort(test_idx.begin(), test_idx.end());
    for (std::size_t k = 0; k < order.size(); ++k) (k < n_test ? test : train).push_back(data[order[k]]);
    auto out = train_estimator(train, test, config);
    out.report.test_indices = std::move(test_idx);
    return out;
}

TrainedEstimator train_estimator(const std::vector<ParamRecord>& train, const std::vector<ParamRecord>& test,
                                 const EstimatorTrainConfig& config) {
    if (train.empty()) throw InvalidArgument("train_estimator: empty training split");
    if (config.width <= 0 || config.hidden_layers <= 0 || config.epochs <= 0 || config.batch_size <= 0 ||
        !(config.learning_rate > 0))
        throw InvalidArgument("EstimatorTrainConfig: sizes and rate must be positive");
    const int m = static_cast<int>(train.front().latent.size());
    check_records(train, m, "train_estimator");
    check_records(test, m, "train_estimator");

    const auto n = static_cast<Eigen::Index>(train.size());
    MatrixF x(m, n), y(kNumParams, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        x.col(j) = train[j].latent;
        y.col(j) = train[j].params.cast<float>();
    }

    TrainedEstimator out;
    out.weights = EstimatorWeights<float>(
        nn::Mlp<float>::random(estimator_architecture(m, config.width, config.hidden_layers), config.seed));
    auto& w = out.weights;
    if (config.standardize) {
        Eigen::VectorXf spread;
        column_stats(x, 1e-6, w.in_shift, spread);
        w.in_scale = spread.cwiseInverse();
        column_stats(y, 1e-3, w.out_shift, w.out_scale);
    }
    const MatrixF xs = (x.colwise() - w.in_shift).array().colwise() * w.in_scale.array();
    const MatrixF ys = (y.colwise() - w.out_shift).array().colwise() / w.out_scale.array();

    nn::MlpAdam<float> adam(w.net);
    nn::Mlp<float> grads(w.net.architecture());
    nn::Mlp<float>::Cache cache;
    const typename nn::AdamBlock<float>::Options opt{config.learning_rate};
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    MatrixF bx, by, dout;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (Eigen::Index start = 0; start < n; start += config.batch_size) {
            const Eigen::Index b = std::min<Eigen::Index>(config.batch_size, n - start);
            bx.resize(m, b);
            by.resize(kNumParams, b);
            for (Eigen::Index j = 0; j < b; ++j) {
                bx.col(j) = xs.col(order[start + j]);
                by.col(j) = ys.col(order[start + j]);
            }
            const MatrixF& pred = w.net.forward(bx, cache);
            dout = pred - by;
            const double loss = dout.squaredNorm() / static_cast<double>(b * kNumParams);
            if (!std::isfinite(loss))
                throw TrainingDiverged(fmt::format("train_estimator: non-finite loss at epoch {}", epoch));
            total += loss * static_cast<double>(b);
            dout *= 2.0f / static_cast<float>(b * kNumParams);
            w.net.backward(cache, dout, grads);
            adam.step(w.net, grads, opt);
        }
        out.report.epoch_loss.push_back(total / static_cast<double>(n));
    }
    if (!w.net.all_finite()) throw TrainingDiverged("train_estimator: non-finite weights");
    out.report.train = evaluate_estimator(w, train);
    out.report.test = evaluate_estimator(w, test);
    return out;
}

void LatentOptimConfig::validate() const {
    if (max_steps < 0) throw InvalidArgument("LatentOptimConfig: max_steps must be non-negative");
    if (!(tolerance >= 0) || !(step_size > 0) || !(step_growth >= 1) || !(min_step > 0) || !(init_sigma >= 0) ||
        !(latent_reg >= 0) || !(prior_reg >= 0))
        throw InvalidArgument("LatentOptimConfig: invalid step or tolerance settings");
}

LatentVector initial_latent(int dim, std::uint64_t init_seed, double sigma) {
    if (dim <= 0) throw InvalidArgument("initial_latent: dimension must be positive");
    std::mt19937_64 rng(init_seed);
    std::normal_distribution<double> n(0.0, sigma);
    LatentVector z(dim);
    for (int i = 0; i < dim; ++i) z[i] = static_cast<float>(n(rng));
    return z;
}

OptimizationResult optimize_latent_to_target(const EstimatorWeights<float>& est, const GeomParams& target,
                                             std::uint64_t init_seed, const LatentOptimConfig& config,
                                             const TraceCallback& on_row) {
    config.validate();
    return optimize_latent_from(est, target, initial_latent(est.latent_dim(), init_seed, config.init_sigma), config,
                                on_row);
}

LatentPrior fit_latent_prior(const std::vector<LatentVector>& codes, double ridge) {
    if (codes.size() < 2) throw InvalidArgument("fit_latent_prior: need at least two codes");
    if (!(ridge > 0)) throw InvalidArgument("fit_latent_prior: ridge must be positive");
    const Eigen::Index m = codes.front().size();
    Eigen::MatrixXd Z(m, static_cast<Eigen::Index>(codes.size()));
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (codes[i].size() != m) throw InvalidArgument("fit_latent_prior: mixed latent dimensions");
        Z.col(static_cast<Eigen::Index>(i)) = codes[i].cast<double>();
    }
    LatentPrior p;
    p.mean = Z.rowwise().mean();
    Z.colwise() -= p.mean;
    Eigen::MatrixXd cov = Z * Z.transpose() / static_cast<double>(codes.size());
    const double floor = ridge * std::max(cov.trace(), 1e-300) / static_cast<double>(m);
    cov.diagonal().array() += floor;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw DegenerateGeometry("fit_latent_prior: covariance is not positive definite");
    p.factor = llt.matrixL();
    return p;
}

namespace {

// Step-halving descent on mse(g(z(c)), t) + reg |c|^2 over c, where
// z(c) = c (reg = latent_reg) without a prior and mean + L c (reg = prior_reg)
// with one.
OptimizationResult descend(const EstimatorWeights<float>& est, const LatentPrior* prior, const GeomParams& target,
                           const Eigen::VectorXd& init, const LatentOptimConfig& config, const TraceCallback& on_row) {
    config.validate();
    check_estimator_input(est, prior ? prior->dim() : init.size());
    if (prior && (init.size() != prior->dim() || prior->factor.rows() != prior->dim() || prior->factor.cols() != prior->dim()))
        throw InvalidArgument("optimize_latent_with_prior: prior dimensions disagree");
    if (!target.allFinite() || (target.array() <= 0).any())
        throw InvalidArgument("optimize_latent_to_target: target components must be positive and finite");
    const auto g = est.cast<double>();
    const Eigen::VectorXd t = target;
    auto to_z = [&](const Eigen::VectorXd& c) -> Eigen::VectorXd { return prior ? prior->to_latent(c) : c; };
    const double reg = prior ? config.prior_reg : config.latent_reg;

    struct Eval {
        EstimatorGradients<double> grad;
        Eigen::VectorXd dc;
        double objective;
    };
    auto evaluate = [&](const Eigen::VectorXd& c) {
        Eval e{estimator_gradients(g, to_z(c), t), {}, 0.0};
        e.objective = e.grad.loss + reg * c.squaredNorm();
        e.dc = prior ? Eigen::VectorXd(prior->factor.transpose() * e.grad.latent) : e.grad.latent;
        e.dc += 2.0 * reg * c;
        return e;
    };

    OptimizationResult result;
    auto& trace = result.trace;
    auto record = [&](int iter, const Eigen::VectorXd& c, const Eval& e) {
        trace.rows.push_back({iter, e.grad.prediction, e.grad.loss});
        if (config.keep_latents) trace.latents.push_back(to_z(c).cast<float>());
        if (on_row) on_row(trace.rows.back());
    };

    Eigen::VectorXd c = init;
    Eval cur = evaluate(c);
    if (!std::isfinite(cur.objective)) throw TrainingDiverged("optimize_latent_to_target: non-finite initial loss");
    record(0, c, cur);
    double step = config.step_size;
    for (int it = 1; it <= config.max_steps && cur.grad.loss > config.tolerance; ++it) {
        const Eigen::VectorXd trial = c - step * cur.dc;
        Eval next = evaluate(trial);
        // The mse condition keeps the trace monotone when a penalty is active.
        if (std::isfinite(next.objective) && next.objective <= cur.objective && next.grad.loss <= cur.grad.loss) {
            c = trial;
            cur = std::move(next);
            record(it, c, cur);
            step *= config.step_growth;
        } else {
            step *= 0.5;
            if (step < config.min_step) break;
        }
    }
    trace.converged = cur.grad.loss <= config.tolerance;
    result.latent = to_z(c).cast<float>();
    return result;
}

}  // namespace

OptimizationResult optimize_latent_from(const EstimatorWeights<float>& est, const GeomParams& target,
                                        const LatentVector& init, const LatentOptimConfig& config,
                                        const TraceCallback& on_row) {
    return descend(est, nullptr, target, init.cast<double>(), config, on_row);
}

OptimizationResult optimize_latent_with_prior(const EstimatorWeights<float>& est, const LatentPrior& prior,
                                              const GeomParams& target, std::uint64_t init_seed,
                                              const LatentOptimConfig& config, const TraceCallback& on_row) {
    config.validate();
    if (!(config.prior_init_sigma >= 0)) throw InvalidArgument("LatentOptimConfig: invalid prior_init_sigma");
    const Eigen::VectorXd c0 = initial_latent(prior.dim(), init_seed, config.prior_init_sigma).cast<double>();
    return descend(est, &prior, target, c0, config, on_row);
}

}  // namespace vsdf
