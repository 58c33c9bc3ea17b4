#pragma once

#include "vsdf/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace vsdf::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Layer widths of a fully connected ReLU network with a linear output.
///
/// When skip_layer = k > 0, hidden layer k receives the previous activations
/// concatenated with the raw network input.
struct Architecture {
    int input_dim = 0;
    std::vector<int> hidden;
    int output_dim = 1;
    int skip_layer = -1;

    int num_layers() const { return static_cast<int>(hidden.size()) + 1; }
    int layer_in(int l) const {
        int in = l == 0 ? input_dim : hidden[l - 1];
        if (l == skip_layer) in += input_dim;
        return in;
    }
    int layer_out(int l) const { return l < static_cast<int>(hidden.size()) ? hidden[l] : output_dim; }
    void validate() const {
        if (input_dim <= 0 || output_dim <= 0) throw InvalidArgument("Architecture: non-positive width");
        for (int w : hidden)
            if (w <= 0) throw InvalidArgument("Architecture: non-positive hidden width");
        if (skip_layer == 0 || skip_layer > static_cast<int>(hidden.size()))
            throw InvalidArgument("Architecture: skip layer must index a hidden layer > 0");
    }
    friend bool operator==(const Architecture&, const Architecture&) = default;
};

template <typename Scalar>
struct Dense {
    Matrix<Scalar> weight;  // out x in
    Vector<Scalar> bias;
};

/// Multi-layer perceptron over column batches (one sample per column).
template <typename Scalar>
class Mlp {
public:
    using MatrixType = Matrix<Scalar>;
    using VectorType = Vector<Scalar>;

    Mlp() = default;

    /// Zero-initialized network.
    explicit Mlp(Architecture arch) : arch_(std::move(arch)) {
        arch_.validate();
        for (int l = 0; l < arch_.num_layers(); ++l)
            layers_.push_back({MatrixType::Zero(arch_.layer_out(l), arch_.layer_in(l)),
                               VectorType::Zero(arch_.layer_out(l))});
    }

    /// He-uniform weights, zero biases.
    static Mlp random(Architecture arch, std::uint64_t seed) {
        Mlp net(std::move(arch));
        std::mt19937_64 rng(seed);
        for (auto& layer : net.layers_) {
            const double bound = std::sqrt(6.0 / layer.weight.cols());
            std::uniform_real_distribution<double> u(-bound, bound);
            for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
                for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = Scalar(u(rng));
        }
        // Scale the output layer down so initial predictions stay small.
        net.layers_.back().weight *= Scalar(0.1);
        return net;
    }

    const Architecture& architecture() const { return arch_; }
    std::vector<Dense<Scalar>>& layers() { return layers_; }
    const std::vector<Dense<Scalar>>& layers() const { return layers_; }

    template <typename Other>
    Mlp<Other> cast() const {
        Mlp<Other> out(arch_);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            out.layers()[l].weight = layers_[l].weight.template cast<Other>();
            out.layers()[l].bias = layers_[l].bias.template cast<Other>();
        }
        return out;
    }

    /// Activations kept for the backward pass.
    struct Cache {
        MatrixType input;
        std::vector<MatrixType> pre;   // pre-activation of every layer
        std::vector<MatrixType> post;  // ReLU output of each hidden layer
        // Reused buffers; keeping one Cache across batches avoids reallocation.
        MatrixType joined, delta, dprev, dinput;
    };

    template <typename Derived>
    MatrixType forward(const Eigen::MatrixBase<Derived>& x) const {
        Cache cache;
        return forward(x, cache);
    }

    template <typename Derived>
    MatrixType forward(const Eigen::MatrixBase<Derived>& x, Cache& cache) const {
        if (x.rows() != arch_.input_dim)
            throw InvalidArgument("Mlp::forward: expected input dimension " + std::to_string(arch_.input_dim) +
                                  ", got " + std::to_string(x.rows()));
        cache.input = x;
        cache.pre.resize(layers_.size());
        cache.post.resize(layers_.size() - 1);
        const MatrixType* h = &cache.input;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& layer = layers_[l];
            if (static_cast<int>(l) == arch_.skip_layer) {
                cache.joined.resize(h->rows() + cache.input.rows(), h->cols());
                cache.joined.topRows(h->rows()) = *h;
                cache.joined.bottomRows(cache.input.rows()) = cache.input;
                h = &cache.joined;
            }
            cache.pre[l].noalias() = layer.weight * *h;
            cache.pre[l].colwise() += layer.bias;
            if (l + 1 < layers_.size()) {
                cache.post[l].resize(cache.pre[l].rows(), cache.pre[l].cols());
                cache.post[l].array() = cache.pre[l].array().max(Scalar(0));
                h = &cache.post[l];
            }
        }
        return cache.pre.back();
    }

    /// Gradients of sum_j <dout_j, f(x_j)> with respect to every parameter
    /// (written into `grads`, overwritten) and the input (returned).
    const MatrixType& backward(Cache& cache, const MatrixType& dout, Mlp& grads) const {
        if (grads.layers_.size() != layers_.size()) grads = Mlp(arch_);
        MatrixType& delta = cache.delta;
        MatrixType& dprev = cache.dprev;
        MatrixType& dinput = cache.dinput;
        delta = dout;
        dinput.setZero(cache.input.rows(), cache.input.cols());
        const Eigen::Index ni = cache.input.rows();
        for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
            const auto& layer = layers_[l];
            const bool skip = l == arch_.skip_layer;
            const MatrixType& prev = l == 0 ? cache.input : cache.post[l - 1];
            const Eigen::Index np = prev.rows();
            auto& g = grads.layers_[l];
            g.bias = delta.rowwise().sum();
            g.weight.leftCols(np).noalias() = delta * prev.transpose();
            if (skip) {
                g.weight.rightCols(ni).noalias() = delta * cache.input.transpose();
                dinput.noalias() += layer.weight.rightCols(ni).transpose() * delta;
            }
            if (l == 0) {
                dinput.noalias() += layer.weight.leftCols(np).transpose() * delta;
                break;
            }
            dprev.noalias() = layer.weight.leftCols(np).transpose() * delta;
            delta.resize(dprev.rows(), dprev.cols());
            delta.array() = (cache.pre[l - 1].array() > Scalar(0)).select(dprev.array(), Scalar(0));
        }
        return dinput;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
        return n;
    }

    /// All weights then biases, layer by layer.
    VectorType flatten() const {
        VectorType out(parameter_count());
        Eigen::Index at = 0;
        for (const auto& l : layers_) {
            out.segment(at, l.weight.size()) = l.weight.reshaped();
            at += l.weight.size();
            out.segment(at, l.bias.size()) = l.bias;
            at += l.bias.size();
        }
        return out;
    }

    void unflatten(const VectorType& flat) {
        if (static_cast<std::size_t>(flat.size()) != parameter_count())
            throw InvalidArgument("Mlp::unflatten: size mismatch");
        Eigen::Index at = 0;
        for (auto& l : layers_) {
            l.weight.reshaped() = flat.segment(at, l.weight.size());
            at += l.weight.size();
            l.bias = flat.segment(at, l.bias.size());
            at += l.bias.size();
        }
    }

    bool all_finite() const {
        for (const auto& l : layers_)
            if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }

private:
    Architecture arch_;
    std::vector<Dense<Scalar>> layers_;
};

/// Adaptive-moment optimizer state for one dense block of parameters.
template <typename Scalar>
class AdamBlock {
public:
    struct Options {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    AdamBlock() = default;
    AdamBlock(Eigen::Index rows, Eigen::Index cols)
        : m_(Matrix<Scalar>::Zero(rows, cols)), v_(Matrix<Scalar>::Zero(rows, cols)) {}

    template <typename P, typename G>
    void step(Eigen::MatrixBase<P>& param, const Eigen::MatrixBase<G>& grad, const Options& o) {
        ++t_;
        m_ = Scalar(o.beta1) * m_ + Scalar(1 - o.beta1) * grad;
        v_ = Scalar(o.beta2) * v_ + Scalar(1 - o.beta2) * grad.cwiseAbs2();
        const Scalar c1 = Scalar(1 - std::pow(o.beta1, t_));
        const Scalar c2 = Scalar(1 - std::pow(o.beta2, t_));
        param.array() -= Scalar(o.lr) * (m_.array() / c1) / ((v_.array() / c2).sqrt() + Scalar(o.eps));
    }

    /// Column-wise variant: only listed columns advance, each with its own step count.
    template <typename P, typename G>
    void step_columns(Eigen::MatrixBase<P>& param, const Eigen::MatrixBase<G>& grad,
                      const std::vector<int>& columns, const Options& o) {
        if (col_t_.size() != static_cast<std::size_t>(param.cols())) col_t_.assign(param.cols(), 0);
        for (int c : columns) {
            const long t = ++col_t_[c];
            m_.col(c) = Scalar(o.beta1) * m_.col(c) + Scalar(1 - o.beta1) * grad.col(c);
            v_.col(c) = Scalar(o.beta2) * v_.col(c) + Scalar(1 - o.beta2) * grad.col(c).cwiseAbs2();
            const Scalar c1 = Scalar(1 - std::pow(o.beta1, t));
            const Scalar c2 = Scalar(1 - std::pow(o.beta2, t));
            param.col(c).array() -=
                Scalar(o.lr) * (m_.col(c).array() / c1) / ((v_.col(c).array() / c2).sqrt() + Scalar(o.eps));
        }
    }

private:
    Matrix<Scalar> m_, v_;
    long t_ = 0;
    std::vector<long> col_t_;
};

/// Adam over every tensor of an Mlp.
template <typename Scalar>
class MlpAdam {
public:
    explicit MlpAdam(const Mlp<Scalar>& net) {
        for (const auto& l : net.layers()) {
            w_.emplace_back(l.weight.rows(), l.weight.cols());
            b_.emplace_back(l.bias.rows(), 1);
        }
    }

    void step(Mlp<Scalar>& net, const Mlp<Scalar>& grads, const typename AdamBlock<Scalar>::Options& o) {
        for (std::size_t l = 0; l < w_.size(); ++l) {
            w_[l].step(net.layers()[l].weight, grads.layers()[l].weight, o);
            b_[l].step(net.layers()[l].bias, grads.layers()[l].bias, o);
        }
    }

private:
    std::vector<AdamBlock<Scalar>> w_, b_;
};

}  // namespace vsdf::nn
