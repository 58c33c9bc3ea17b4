#include "vsdf/errors.hpp"
#include "vsdf/params/augment.hpp"
#include "vsdf/params/estimator.hpp"

#include <doctest.h>

#include <random>

using namespace vsdf;

namespace {

// Records whose parameters are an exact affine function of an 8-d latent.
std::vector<ParamRecord> affine_records(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g(0.0f, 0.05f);
    Eigen::Matrix<double, 7, 8> A;
    std::mt19937_64 arng(99);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 8; ++j) A(i, j) = i == 0 ? 0.0 : u(arng);
    std::vector<ParamRecord> out;
    for (int k = 0; k < n; ++k) {
        LatentVector z(8);
        for (auto& v : z) v = g(rng);
        GeomParams p = reference_target() + A * z.cast<double>();
        out.push_back({z, p});
    }
    return out;
}

EstimatorTrainConfig quick(int epochs = 150) {
    EstimatorTrainConfig c;
    c.width = 32;
    c.epochs = epochs;
    c.learning_rate = 2e-3;
    return c;
}

}  // namespace

TEST_CASE("estimator layout: three hidden layers and seven outputs") {
    const auto a = estimator_architecture(64);
    CHECK(a.hidden == std::vector<int>(3, 128));
    CHECK(a.output_dim == 7);
    CHECK(a.input_dim == 64);
}

TEST_CASE("standardization wraps the network") {
    EstimatorWeights<double> w(nn::Mlp<double>(estimator_architecture(2, 4, 2)));
    // Zero network: output is exactly out_shift whatever the input.
    w.out_shift.setConstant(0.5);
    Eigen::VectorXd z(2);
    z << 3, -4;
    CHECK((estimator_forward(w, z) - Eigen::VectorXd::Constant(7, 0.5)).norm() == 0.0);
    // Output bias 1 on the last layer: out_shift + out_scale.
    w.net.layers().back().bias.setOnes();
    w.out_scale.setConstant(2.0);
    CHECK((estimator_forward(w, z) - Eigen::VectorXd::Constant(7, 2.5)).norm() == 0.0);
    CHECK_THROWS_AS(estimator_forward(w, Eigen::VectorXd(Eigen::VectorXd::Zero(3))), InvalidArgument);
}

TEST_CASE("evaluate_estimator: mean predictor has zero R^2") {
    const auto data = affine_records(50, 1);
    GeomParams mean = GeomParams::Zero();
    for (const auto& r : data) mean += r.params;
    mean /= 50.0;
    EstimatorWeights<float> w(nn::Mlp<float>(estimator_architecture(8, 4, 1)));
    w.out_shift = mean.cast<float>();
    const auto m = evaluate_estimator(w, data);
    CHECK(m.count == 50);
    CHECK(std::abs(m.r2) < 1e-5);
    double mse = 0;
    for (const auto& r : data) mse += (r.params - w.out_shift.cast<double>()).squaredNorm();
    CHECK(m.mse == doctest::Approx(mse / (50.0 * 7)).epsilon(1e-5));
}

TEST_CASE("estimator learns an affine map, deterministically") {
    const auto data = affine_records(400, 2);
    const auto a = train_estimator(data, quick());
    const auto b = train_estimator(data, quick());
    CHECK(a.report.test.count == 80);
    CHECK(a.report.train.count == 320);
    CHECK(a.report.test.r2 > 0.95);
    CHECK(a.report.test.mse < 1e-4);
    CHECK(a.weights.net.flatten() == b.weights.net.flatten());
    CHECK(a.report.test_indices == b.report.test_indices);
    CHECK(a.report.epoch_loss.back() < a.report.epoch_loss.front());
}

TEST_CASE("explicit held-out set") {
    const auto data = affine_records(300, 3);
    const std::vector<ParamRecord> train(data.begin(), data.begin() + 200), test(data.begin() + 200, data.end());
    const auto r = train_estimator(train, test, quick(60));
    CHECK(r.report.train.count == 200);
    CHECK(r.report.test.count == 100);
    CHECK(r.report.test.mse == doctest::Approx(evaluate_estimator(r.weights, test).mse));
}

TEST_CASE("estimator input validation") {
    const auto data = affine_records(9, 4);
    CHECK_THROWS_AS(train_estimator(data, quick()), InvalidArgument);
    auto bad = quick();
    bad.test_fraction = 0.3;
    CHECK_THROWS_AS(train_estimator(affine_records(40, 4), bad), InvalidArgument);
    auto mixed = affine_records(20, 4);
    mixed[3].latent = LatentVector::Zero(5);
    CHECK_THROWS_AS(train_estimator(mixed, quick()), InvalidArgument);
}

TEST_CASE("latent optimization reaches a reachable target") {
    const auto est = train_estimator(affine_records(400, 5), quick()).weights;
    // A target the estimator itself produces is reachable by construction.
    const LatentVector goal = LatentVector::Constant(8, 0.03f);
    const GeomParams target = estimate_params(est, goal);

    int streamed = 0;
    const auto r = optimize_latent_to_target(est, target, 1, {}, [&](const TraceRow&) { ++streamed; });
    REQUIRE(!r.trace.rows.empty());
    CHECK(r.trace.converged);
    CHECK(r.trace.rows.back().mse <= 1e-6);
    CHECK(streamed == static_cast<int>(r.trace.rows.size()));
    CHECK(r.trace.rows.front().iteration == 0);
    // Step halving only ever accepts non-increasing iterates.
    for (std::size_t i = 1; i < r.trace.rows.size(); ++i) CHECK(r.trace.rows[i].mse <= r.trace.rows[i - 1].mse);
    CHECK(params_mse(estimate_params(est, r.latent), target) == doctest::Approx(r.trace.rows.back().mse).epsilon(1e-3));

    SUBCASE("same seed, same result; other seed, other start") {
        const auto again = optimize_latent_to_target(est, target, 1);
        CHECK(again.latent == r.latent);
        const auto other = optimize_latent_to_target(est, target, 2);
        CHECK(other.trace.rows.front().params != r.trace.rows.front().params);
    }
    SUBCASE("kept latents are parallel to rows") {
        LatentOptimConfig c;
        c.keep_latents = true;
        const auto k = optimize_latent_to_target(est, target, 1, c);
        CHECK(k.trace.latents.size() == k.trace.rows.size());
        CHECK(k.trace.latents.back() == k.latent);
    }
    SUBCASE("zero steps returns the initial latent") {
        LatentOptimConfig c;
        c.max_steps = 0;
        c.tolerance = 0;
        const auto z = optimize_latent_to_target(est, target, 3, c);
        CHECK(z.latent == initial_latent(8, 3));
        CHECK_FALSE(z.trace.converged);
    }
}

TEST_CASE("latent optimization rejects bad targets") {
    const auto est = EstimatorWeights<float>(nn::Mlp<float>::random(estimator_architecture(8, 8), 1));
    GeomParams t = reference_target();
    t[3] = 0.0;
    CHECK_THROWS_AS(optimize_latent_to_target(est, t, 1), InvalidArgument);
    t[3] = std::nan("");
    CHECK_THROWS_AS(optimize_latent_to_target(est, t, 1), InvalidArgument);
}

TEST_CASE("initial latent is N(0, sigma^2) and seed-determined") {
    const auto a = initial_latent(4000, 7, 0.01);
    CHECK(a == initial_latent(4000, 7, 0.01));
    CHECK(a != initial_latent(4000, 8, 0.01));
    const double mean = a.cast<double>().mean();
    const double sd = std::sqrt((a.cast<double>().array() - mean).square().mean());
    CHECK(std::abs(mean) < 0.001);
    CHECK(sd == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("interpolate_latents") {
    const LatentVector a = LatentVector::Constant(3, 1.0f), b = LatentVector::Constant(3, 3.0f);
    CHECK(interpolate_latents(a, b, 0.0) == a);
    CHECK(interpolate_latents(a, b, 1.0) == b);
    CHECK(interpolate_latents(a, b, 0.25).isApprox(LatentVector::Constant(3, 1.5f)));
    CHECK_THROWS_AS(interpolate_latents(a, LatentVector::Zero(2), 0.5), InvalidArgument);
}

TEST_CASE("augmentation argument checks and failure floor") {
    const auto w = make_decoder<float>(4, 1, 16);
    const std::vector<LatentVector> one = {LatentVector::Zero(4)};
    const GridSpec g{24, 1.0};
    CHECK_THROWS_AS(augment_dataset(one, w, 10, 1, g, {}), InvalidArgument);
    const std::vector<LatentVector> two = {LatentVector::Zero(4), LatentVector::Ones(4)};
    CHECK_THROWS_AS(augment_dataset(two, w, 1, 1, g, {}), InvalidArgument);
    // An untrained decoder yields mostly unmeasurable blobs.
    AugmentStats stats;
    AugmentOptions opt;
    opt.min_attempts = 6;
    opt.threads = 1;
    CHECK_THROWS_AS(augment_dataset(two, w, 50, 1, g, {}, opt, &stats), ExtractionFailure);
    CHECK(stats.attempts >= 6);
    CHECK(2 * stats.failures > stats.attempts);
}

TEST_CASE("nearest_params and the height x width grid") {
    std::vector<GeomParams> data(4, reference_target());
    data[0][1] = 0.30;
    data[1][1] = 0.26;
    data[2][1] = 0.33;
    data[3][1] = 0.28;
    data[0][2] = 0.40;
    data[1][2] = 0.44;
    data[2][2] = 0.41;
    data[3][2] = 0.43;
    const auto nn = nearest_params(data, reference_target());
    CHECK(nn.index == 3);
    CHECK(nn.distance == doctest::Approx(0.0));

    const auto g = height_width_grid(data, reference_target());
    REQUIRE(g.size() == 9);
    CHECK(g[0][1] == doctest::Approx(0.26));
    CHECK(g[0][2] == doctest::Approx(0.40));
    CHECK(g[4][1] == doctest::Approx(0.29));   // median of 4 = mean of middle two
    CHECK(g[4][2] == doctest::Approx(0.42));
    CHECK(g[8][1] == doctest::Approx(0.33));
    CHECK(g[8][2] == doctest::Approx(0.44));
    CHECK(g[5][4] == reference_target()[4]);
    CHECK_THROWS_AS(height_width_grid({}, reference_target()), InvalidArgument);
}

TEST_CASE("latent prior: moments of the codes") {
    const std::vector<LatentVector> codes = {(LatentVector(2) << 1, 0).finished(), (LatentVector(2) << 3, 0).finished(),
                                             (LatentVector(2) << 2, 2).finished(), (LatentVector(2) << 2, -2).finished()};
    const auto p = fit_latent_prior(codes, 1e-6);
    CHECK(p.mean.isApprox(Eigen::Vector2d(2, 0)));
    // Covariance diag(0.5, 2), plus ridge 1e-6 * trace / 2 on the diagonal.
    const Eigen::MatrixXd cov = p.factor * p.factor.transpose();
    CHECK(cov(0, 0) == doctest::Approx(0.5 + 1.25e-6).epsilon(1e-12));
    CHECK(cov(1, 1) == doctest::Approx(2.0 + 1.25e-6).epsilon(1e-12));
    CHECK(std::abs(cov(0, 1)) < 1e-15);
    CHECK(p.factor(0, 1) == 0.0);
    CHECK(p.to_latent(Eigen::Vector2d(1, 0)).isApprox(p.mean + p.factor.col(0)));
    CHECK_THROWS_AS(fit_latent_prior({codes[0]}), InvalidArgument);
}

TEST_CASE("optimization under a prior stays in the span of the codes") {
    const auto data = affine_records(400, 6);
    const auto est = train_estimator(data, quick()).weights;
    // Codes confined to the first four latent axes: the fitted prior has
    // (almost) no spread along the other four.
    std::vector<LatentVector> codes;
    for (const auto& r : data) {
        LatentVector z = r.latent;
        z.tail(4).setZero();
        codes.push_back(z);
    }
    const auto prior = fit_latent_prior(codes);
    const GeomParams target = estimate_params(est, codes[17]);
    LatentOptimConfig c;
    c.keep_latents = true;
    const auto r = optimize_latent_with_prior(est, prior, target, 1, c);
    CHECK(r.trace.converged);
    CHECK(r.latent.tail(4).cwiseAbs().maxCoeff() < 1e-3);
    CHECK(r.trace.latents.back() == r.latent);
    CHECK(params_mse(estimate_params(est, r.latent), target) <= 1.01e-6);
    const auto again = optimize_latent_with_prior(est, prior, target, 1, c);
    CHECK(again.latent == r.latent);
    const auto other = optimize_latent_with_prior(est, prior, target, 2, c);
    CHECK((other.trace.latents.front() - r.trace.latents.front()).norm() > 1e-3);
}
