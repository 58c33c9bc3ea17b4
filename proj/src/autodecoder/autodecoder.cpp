#include "vsdf/autodecoder/autodecoder.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

namespace vsdf {

nn::Architecture decoder_architecture(int latent_dim, int width, int hidden_layers, int skip_layer) {
    if (latent_dim <= 0) throw InvalidArgument("decoder: latent_dim must be positive");
    nn::Architecture arch;
    arch.input_dim = latent_dim + 3;
    arch.hidden.assign(hidden_layers, width);
    arch.output_dim = 1;
    arch.skip_layer = skip_layer < hidden_layers ? skip_layer : -1;
    arch.validate();
    return arch;
}

void SdfTrainConfig::validate() const {
    if (latent_dim <= 0 || width <= 0 || hidden_layers <= 0 || epochs <= 0 || batch_size <= 0)
        throw InvalidArgument("SdfTrainConfig: sizes must be positive");
    if (!(learning_rate > 0) || !(latent_learning_rate > 0) || !(latent_init_sigma > 0) || !(reg_weight >= 0))
        throw InvalidArgument("SdfTrainConfig: rates and sigma must be positive");
}

const LatentVector& TrainedAutodecoder::latent(const std::string& shape_id) const {
    const auto it = std::find(shape_ids.begin(), shape_ids.end(), shape_id);
    if (it == shape_ids.end()) throw InvalidArgument("unknown shape id " + shape_id);
    return latents[it - shape_ids.begin()];
}

namespace {

using MatrixF = nn::Matrix<float>;

struct FlatSamples {
    std::vector<int> shape;
    MatrixF points;  // 3 x N
    Eigen::VectorXf values;
};

FlatSamples flatten(const std::vector<SampleSet>& corpus) {
    std::size_t total = 0;
    for (const auto& s : corpus) total += s.count();
    FlatSamples f;
    f.shape.reserve(total);
    f.points.resize(3, static_cast<Eigen::Index>(total));
    f.values.resize(static_cast<Eigen::Index>(total));
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i)
        for (const auto& s : corpus[i].samples) {
            f.shape.push_back(static_cast<int>(i));
            f.points.col(at) = s.point.cast<float>();
            f.values[at] = static_cast<float>(s.value);
            ++at;
        }
    return f;
}

// Fills the network input for a set of sample indices.
void gather(const FlatSamples& data, const MatrixF& latents, std::span<const std::size_t> idx, MatrixF& in,
            Eigen::VectorXf& target) {
    const Eigen::Index m = latents.rows();
    in.resize(m + 3, static_cast<Eigen::Index>(idx.size()));
    target.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const auto s = idx[j];
        in.col(j).head(m) = latents.col(data.shape[s]);
        in.col(j).tail(3) = data.points.col(s);
        target[j] = data.values[s];
    }
}

double mean_loss(const nn::Mlp<float>& net, const FlatSamples& data, const MatrixF& latents,
                 std::span<const std::size_t> idx, double reg_weight) {
    MatrixF in;
    Eigen::VectorXf target;
    gather(data, latents, idx, in, target);
    const MatrixF out = net.forward(in);
    const double data_term = (out.row(0).transpose() - target).cast<double>().squaredNorm() / idx.size();
    double reg = 0.0;
    for (auto s : idx) reg += latents.col(data.shape[s]).cast<double>().squaredNorm();
    return data_term + reg_weight * reg / idx.size();
}

}  // namespace

TrainedAutodecoder train_deepsdf(const std::vector<SampleSet>& corpus, const SdfTrainConfig& config) {
    config.validate();
    if (corpus.size() < 2) throw InvalidArgument("train_deepsdf: need at least two shapes");
    for (const auto& s : corpus)
        if (s.count() == 0) throw InvalidArgument("train_deepsdf: empty sample set " + s.shape_id);

    const auto start = std::chrono::steady_clock::now();
    const int m = config.latent_dim;
    const int n_shapes = static_cast<int>(corpus.size());
    const FlatSamples data = flatten(corpus);
    const std::size_t total = data.shape.size();

    std::mt19937_64 rng(config.seed);
    TrainedAutodecoder result;
    result.weights = make_decoder<float>(m, rng(), config.width, config.hidden_layers, config.skip_layer);
    auto& net = result.weights.net;

    MatrixF latents(m, n_shapes);
    {
        std::normal_distribution<double> gauss(0.0, config.latent_init_sigma);
        for (int i = 0; i < n_shapes; ++i)
            for (int k = 0; k < m; ++k) latents(k, i) = static_cast<float>(gauss(rng));
    }

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> probe = order;
    std::shuffle(probe.begin(), probe.end(), rng);
    probe.resize(std::min<std::size_t>(probe.size(), 4096));
    std::sort(probe.begin(), probe.end());
    result.report.probe_loss_initial = mean_loss(net, data, latents, probe, config.reg_weight);

    nn::MlpAdam<float> opt(net);
    nn::AdamBlock<float> latent_opt(m, n_shapes);
    nn::Mlp<float> grads(net.architecture());
    MatrixF in, latent_grad(m, n_shapes), dout;
    Eigen::VectorXf target;
    Eigen::RowVectorXf resid;
    typename nn::Mlp<float>::Cache cache;
    std::vector<int> touched;
    std::vector<int> count(n_shapes);
    const float reg = static_cast<float>(config.reg_weight);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double decay = 1.0;
        if (config.lr_decay_every > 0) decay = std::pow(config.lr_decay, epoch / config.lr_decay_every);
        const nn::AdamBlock<float>::Options wopt{config.learning_rate * decay};
        const nn::AdamBlock<float>::Options zopt{config.latent_learning_rate * decay};

        std::shuffle(order.begin(), order.end(), rng);
        double data_sum = 0.0, reg_sum = 0.0;
        int batches = 0;
        for (std::size_t b0 = 0; b0 < total; b0 += config.batch_size, ++batches) {
            const std::size_t b1 = std::min(total, b0 + config.batch_size);
            const std::span<const std::size_t> idx(order.data() + b0, b1 - b0);
            const auto bn = static_cast<float>(idx.size());
            gather(data, latents, idx, in, target);

            net.forward(in, cache);
            resid = cache.pre.back().row(0) - target.transpose();
            const double data_loss = resid.cast<double>().squaredNorm() / bn;

            std::fill(count.begin(), count.end(), 0);
            for (auto s : idx) ++count[data.shape[s]];
            double reg_loss = 0.0;
            touched.clear();
            for (int i = 0; i < n_shapes; ++i)
                if (count[i] > 0) {
                    touched.push_back(i);
                    reg_loss += count[i] * latents.col(i).cast<double>().squaredNorm();
                }
            reg_loss *= config.reg_weight / bn;
            if (!std::isfinite(data_loss) || !std::isfinite(reg_loss))
                throw TrainingDiverged(fmt::format("train_deepsdf: non-finite loss at epoch {}, batch {}", epoch, batches));
            data_sum += data_loss;
            reg_sum += reg_loss;

            dout = (2.0f / bn) * resid;
            const MatrixF& din = net.backward(cache, dout, grads);
            latent_grad.setZero();
            for (std::size_t j = 0; j < idx.size(); ++j) latent_grad.col(data.shape[idx[j]]) += din.col(j).head(m);
            for (int i : touched) latent_grad.col(i) += (2.0f * reg * count[i] / bn) * latents.col(i);

            opt.step(net, grads, wopt);
            latent_opt.step_columns(latents, latent_grad, touched, zopt);
        }
        result.report.data_loss.push_back(data_sum / batches);
        result.report.reg_loss.push_back(reg_sum / batches);
    }

    result.report.probe_loss_final = mean_loss(net, data, latents, probe, config.reg_weight);
    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (int i = 0; i < n_shapes; ++i) {
        result.shape_ids.push_back(corpus[i].shape_id);
        result.latents.push_back(latents.col(i));
    }
    return result;
}

double latent_loss(const DecoderWeights<float>& w, const LatentVector& z, const SampleSet& samples,
                   double reg_weight) {
    check_latent(w, z.size());
    if (samples.count() == 0) throw InvalidArgument("latent_loss: empty sample set");
    const Eigen::Index m = z.size();
    double sum = 0.0;
    constexpr std::size_t kChunk = 8192;
    MatrixF in;
    for (std::size_t s0 = 0; s0 < samples.count(); s0 += kChunk) {
        const std::size_t s1 = std::min(samples.count(), s0 + kChunk);
        in.resize(m + 3, static_cast<Eigen::Index>(s1 - s0));
        for (std::size_t j = s0; j < s1; ++j) {
            in.col(j - s0).head(m) = z;
            in.col(j - s0).tail(3) = samples.samples[j].point.cast<float>();
        }
        const MatrixF out = w.net.forward(in);
        for (std::size_t j = s0; j < s1; ++j) {
            const double r = double(out(0, j - s0)) - samples.samples[j].value;
            sum += r * r;
        }
    }
    return sum / samples.count() + reg_weight * z.cast<double>().squaredNorm();
}

LatentVector infer_latent(const DecoderWeights<float>& w, const SampleSet& samples, const InferConfig& config,
                          const LatentVector* init) {
    if (samples.count() == 0) throw InvalidArgument("infer_latent: empty sample set");
    const int m = w.latent_dim;
    std::mt19937_64 rng(config.seed);
    LatentVector z(m);
    if (init) {
        check_latent(w, init->size());
        z = *init;
    } else {
        std::normal_distribution<double> gauss(0.0, config.latent_init_sigma);
        for (int k = 0; k < m; ++k) z[k] = static_cast<float>(gauss(rng));
    }

    const double initial = latent_loss(w, z, samples, config.reg_weight);
    double best_loss = initial;
    LatentVector best = z;

    std::vector<std::size_t> order(samples.count());
    std::iota(order.begin(), order.end(), 0);
    nn::AdamBlock<float> opt(m, 1);
    const nn::AdamBlock<float>::Options o{config.learning_rate};
    nn::Mlp<float> grads(w.net.architecture());
    MatrixF in;
    const std::size_t bs = std::min<std::size_t>(config.batch_size, samples.count());

    for (int it = 0; it < config.iterations; ++it) {
        std::shuffle(order.begin(), order.end(), rng);
        in.resize(m + 3, static_cast<Eigen::Index>(bs));
        Eigen::RowVectorXf target(bs);
        for (std::size_t j = 0; j < bs; ++j) {
            const auto& s = samples.samples[order[j]];
            in.col(j).head(m) = z;
            in.col(j).tail(3) = s.point.cast<float>();
            target[j] = static_cast<float>(s.value);
        }
        typename nn::Mlp<float>::Cache cache;
        const MatrixF out = w.net.forward(in, cache);
        const MatrixF dout = (2.0f / bs) * (out.row(0) - target);
        const MatrixF din = w.net.backward(cache, dout, grads);
        MatrixF gz = din.topRows(m).rowwise().sum();
        gz += 2.0f * static_cast<float>(config.reg_weight) * z;
        opt.step(z, gz, o);

        if ((it + 1) % 20 == 0 || it + 1 == config.iterations) {
            const double loss = latent_loss(w, z, samples, config.reg_weight);
            if (!std::isfinite(loss) || loss > 10.0 * initial)
                throw TrainingDiverged(fmt::format("infer_latent: loss {} at iteration {} (initial {})", loss, it, initial));
            if (loss < best_loss) {
                best_loss = loss;
                best = z;
            }
        }
    }
    return best;
}

nn::Mlp<float> condition_decoder(const DecoderWeights<float>& w, const LatentVector& z) {
    check_latent(w, z.size());
    const auto& arch = w.net.architecture();
    nn::Architecture a = arch;
    a.input_dim = 3;
    nn::Mlp<float> net(a);
    const Eigen::Index m = w.latent_dim;
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        const auto& src = w.net.layers()[l];
        auto& dst = net.layers()[l];
        if (l == 0) {
            dst.weight = src.weight.rightCols(3);
            dst.bias = src.bias + src.weight.leftCols(m) * z;
        } else if (static_cast<int>(l) == arch.skip_layer) {
            const Eigen::Index h = arch.hidden[l - 1];
            dst.weight.leftCols(h) = src.weight.leftCols(h);
            dst.weight.rightCols(3) = src.weight.rightCols(3);
            dst.bias = src.bias + src.weight.middleCols(h, m) * z;
        } else {
            dst = src;
        }
    }
    return net;
}

ShapeField decoder_field(const DecoderWeights<float>& w, const LatentVector& z, double bounding_radius) {
    // The latent part of every layer that sees the input is folded into its bias.
    auto net = std::make_shared<const nn::Mlp<float>>(condition_decoder(w, z));
    auto batch = [net](std::span<const Point3> pts, std::span<double> out) {
        thread_local MatrixF in;
        thread_local nn::Mlp<float>::Cache cache;
        in.resize(3, static_cast<Eigen::Index>(pts.size()));
        for (std::size_t j = 0; j < pts.size(); ++j) in.col(j) = pts[j].cast<float>();
        net->forward(in, cache);
        const auto& f = cache.pre.back();
        for (std::size_t j = 0; j < pts.size(); ++j) out[j] = f(0, j);
    };
    auto point = [batch](const Point3& p) {
        double v = 0.0;
        batch(std::span<const Point3>(&p, 1), std::span<double>(&v, 1));
        return v;
    };
    return ShapeField(point, bounding_radius, batch);
}

Isosurface decode_to_mesh(const DecoderWeights<float>& w, const LatentVector& z, const GridSpec& grid) {
    // Learned fields are only approximately 1-Lipschitz; widen the band.
    return marching_cubes(decoder_field(w, z), grid, {.block = 16, .band_slack = 1.25});
}

}  // namespace vsdf
