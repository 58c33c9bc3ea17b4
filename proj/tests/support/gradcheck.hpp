#pragma once

// Finite-difference checks for the decoder and estimator gradients.
//
// ReLU networks are piecewise linear, so a central difference straddling a
// kink is meaningless. Each probe compares the activation pattern at both
// ends with the one at the base point and falls back to a one-sided
// difference (or a smaller step) when a side crosses a kink.

#include "vsdf/autodecoder/autodecoder.hpp"
#include "vsdf/params/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

namespace vsdf::testing {

struct GradCheckResult {
    double relative_error = 0.0;  // |analytic - fd| / max(|analytic|, |fd|)
    int probes = 0;
    int one_sided = 0;
    int skipped = 0;  // kinks on both sides at every step size tried
};

using Pattern = std::vector<bool>;

inline Pattern activation_pattern(const nn::Mlp<double>& net, const nn::Matrix<double>& input) {
    nn::Mlp<double>::Cache cache;
    net.forward(input, cache);
    Pattern p;
    for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l)
        for (Eigen::Index i = 0; i < cache.pre[l].size(); ++i) p.push_back(cache.pre[l](i) > 0);
    return p;
}

/// One scalar probe: f(theta) and its activation pattern, theta moved by t.
using Probe = std::function<std::pair<double, Pattern>(double t)>;

/// Derivative at t = 0 by kink-aware finite differences; returns false if
/// both sides cross a kink at every step tried.
inline bool kink_aware_derivative(const Probe& probe, double h, double& out, bool& one_sided) {
    const auto [f0, p0] = probe(0.0);
    for (int attempt = 0; attempt < 4; ++attempt, h *= 0.1) {
        const auto [fp, pp] = probe(h);
        const auto [fm, pm] = probe(-h);
        const bool okp = pp == p0, okm = pm == p0;
        one_sided = !(okp && okm);
        if (okp && okm) {
            out = (fp - fm) / (2 * h);
            return true;
        }
        if (okp) {
            out = (fp - f0) / h;
            return true;
        }
        if (okm) {
            out = (f0 - fm) / h;
            return true;
        }
    }
    return false;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double scale = std::max({a.norm(), b.norm(), 1e-300});
    return (a - b).norm() / scale;
}

/// Random subset of parameter indices to probe.
inline std::vector<Eigen::Index> probe_subset(Eigen::Index count, int probes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Eigen::Index> params(static_cast<std::size_t>(count));
    std::iota(params.begin(), params.end(), Eigen::Index{0});
    std::shuffle(params.begin(), params.end(), rng);
    params.resize(std::min<std::size_t>(params.size(), static_cast<std::size_t>(probes)));
    return params;
}

/// Decoder: squared error of f(z, x) against a target, w.r.t. z and a random
/// subset of `weight_probes` network parameters.
inline GradCheckResult check_decoder_gradients(const DecoderWeights<double>& w, const Eigen::VectorXd& z,
                                               const Point3& x, double target, int weight_probes,
                                               std::uint64_t seed) {
    const auto g = decoder_gradients(w, z, x, target);
    const Eigen::VectorXd flat_grad = g.weights.flatten();
    const Eigen::VectorXd theta = w.net.flatten();

    const auto params = probe_subset(theta.size(), weight_probes, seed);

    GradCheckResult r;
    std::vector<double> analytic, numeric;
    auto record = [&](const Probe& probe, double a, double scale) {
        double d = 0.0;
        bool side = false;
        ++r.probes;
        if (!kink_aware_derivative(probe, 1e-6 * std::max(1.0, std::abs(scale)), d, side)) {
            ++r.skipped;
            return;
        }
        r.one_sided += side;
        analytic.push_back(a);
        numeric.push_back(d);
    };

    for (Eigen::Index i = 0; i < z.size(); ++i) {
        Probe probe = [&, i](double t) {
            Eigen::VectorXd zz = z;
            zz[i] += t;
            const double f = decoder_forward(w, zz, x) - target;
            return std::make_pair(f * f, activation_pattern(w.net, decoder_input(zz, x)));
        };
        record(probe, g.latent[i], z[i]);
    }
    const nn::Matrix<double> in = decoder_input(Eigen::VectorXd(z), x);
    for (Eigen::Index k : params) {
        Probe probe = [&, k](double t) {
            DecoderWeights<double> ww = w;
            Eigen::VectorXd th = theta;
            th[k] += t;
            ww.net.unflatten(th);
            const double f = decoder_forward(ww, z, x) - target;
            return std::make_pair(f * f, activation_pattern(ww.net, in));
        };
        record(probe, flat_grad[k], theta[k]);
    }
    r.relative_error = relative_error(Eigen::Map<Eigen::VectorXd>(analytic.data(), analytic.size()),
                                      Eigen::Map<Eigen::VectorXd>(numeric.data(), numeric.size()));
    return r;
}

/// Estimator: mse(g(z), target) w.r.t. z and a random subset of
/// `weight_probes` network parameters.
inline GradCheckResult check_estimator_gradients(const EstimatorWeights<double>& w, const Eigen::VectorXd& z,
                                                 const Eigen::VectorXd& target, int weight_probes,
                                                 std::uint64_t seed) {
    const auto g = estimator_gradients(w, z, target);
    const Eigen::VectorXd flat_grad = g.weights.flatten();
    const Eigen::VectorXd theta = w.net.flatten();
    auto standardized = [&](const Eigen::VectorXd& zz) {
        nn::Matrix<double> in = (zz - w.in_shift).cwiseProduct(w.in_scale);
        return in;
    };
    auto loss = [&](const EstimatorWeights<double>& ww, const Eigen::VectorXd& zz) {
        return (estimator_forward(ww, zz) - target).squaredNorm() / static_cast<double>(target.size());
    };

    GradCheckResult r;
    std::vector<double> analytic, numeric;
    auto record = [&](const Probe& probe, double a, double scale) {
        double d = 0.0;
        bool side = false;
        ++r.probes;
        if (!kink_aware_derivative(probe, 1e-6 * std::max(1.0, std::abs(scale)), d, side)) {
            ++r.skipped;
            return;
        }
        r.one_sided += side;
        analytic.push_back(a);
        numeric.push_back(d);
    };
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        Probe probe = [&, i](double t) {
            Eigen::VectorXd zz = z;
            zz[i] += t;
            return std::make_pair(loss(w, zz), activation_pattern(w.net, standardized(zz)));
        };
        record(probe, g.latent[i], z[i]);
    }
    const nn::Matrix<double> in = standardized(z);
    for (Eigen::Index k : probe_subset(theta.size(), weight_probes, seed)) {
        Probe probe = [&, k](double t) {
            EstimatorWeights<double> ww = w;
            Eigen::VectorXd th = theta;
            th[k] += t;
            ww.net.unflatten(th);
            return std::make_pair(loss(ww, z), activation_pattern(ww.net, in));
        };
        record(probe, flat_grad[k], theta[k]);
    }
    r.relative_error = relative_error(Eigen::Map<Eigen::VectorXd>(analytic.data(), analytic.size()),
                                      Eigen::Map<Eigen::VectorXd>(numeric.data(), numeric.size()));
    return r;
}

/// Random configurations used by both the unit tests and the acceptance run.
struct GradConfig {
    DecoderWeights<double> decoder;
    Eigen::VectorXd z;
    Point3 x;
    double sdf_target;
    EstimatorWeights<double> estimator;
    Eigen::VectorXd params_target;
};

inline GradConfig random_grad_config(std::uint64_t seed, int latent_dim = 64, int width = 128) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    GradConfig c{make_decoder<double>(latent_dim, seed, width), Eigen::VectorXd(latent_dim), {}, 0.0, {}, {}};
    // Random biases so that roughly half the units are active.
    for (auto& layer : c.decoder.net.layers())
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = 0.1 * n(rng);
    for (auto& v : c.z) v = 0.3 * n(rng);
    c.x = {u(rng), u(rng), u(rng)};
    c.sdf_target = 0.2 * u(rng);

    c.estimator = EstimatorWeights<double>(
        nn::Mlp<double>::random(estimator_architecture(latent_dim, width, 3), seed ^ 0xabcdefULL));
    for (auto& layer : c.estimator.net.layers())
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = 0.1 * n(rng);
    for (Eigen::Index i = 0; i < latent_dim; ++i) {
        c.estimator.in_shift[i] = 0.05 * n(rng);
        c.estimator.in_scale[i] = 5.0 + 20.0 * std::abs(u(rng));
    }
    for (Eigen::Index k = 0; k < kNumParams; ++k) {
        c.estimator.out_shift[k] = 0.3 + 0.2 * std::abs(u(rng));
        c.estimator.out_scale[k] = 0.01 + 0.05 * std::abs(u(rng));
    }
    c.params_target = reference_target();
    return c;
}

}  // namespace vsdf::testing
