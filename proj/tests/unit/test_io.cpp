#include "vsdf/errors.hpp"
#include "vsdf/io/model_io.hpp"

#include <doctest.h>

#include <cstring>
#include <sstream>

using namespace vsdf;

namespace {

std::string bytes(const Checkpoint& ck) {
    std::ostringstream os;
    ck.write(os);
    return os.str();
}

Checkpoint parse(const std::string& s) {
    std::istringstream is(s);
    return Checkpoint::read(is);
}

DragModel tiny_drag() {
    DragModel m;
    m.base = 0.31;
    m.learning_rate = 0.1;
    RegressionTree t;
    t.depth = 2;
    t.feature = {3, 5, 1159};
    t.threshold = {0.1 + 1e-12, -0.25, 1.0 / 3.0};
    t.leaf = {-0.01, 0.02, 0.003, 0.0};
    m.trees = {t, t};
    return m;
}

}  // namespace

TEST_CASE("hand-built container has the documented layout") {
    Checkpoint ck;
    const float v[] = {1.5f};
    ck.put_f32("a", {1}, v);
    const std::string s = bytes(ck);
    // magic, version 1, 1 section, name length 1, "a", dtype 0, rank 1, dim 1, payload
    std::string want = "VSDF";
    auto u32 = [&](std::uint32_t x) { want.append(reinterpret_cast<const char*>(&x), 4); };
    u32(1);
    u32(1);
    u32(1);
    want += 'a';
    want += '\0';
    u32(1);
    const std::uint64_t dim = 1;
    want.append(reinterpret_cast<const char*>(&dim), 8);
    want.append(reinterpret_cast<const char*>(v), 4);
    CHECK(s == want);
}

TEST_CASE("round trip is byte identical") {
    Checkpoint ck;
    const std::vector<double> d = {1.0 / 3.0, -2.0};
    const std::vector<std::int32_t> i = {7, -9, 11};
    ck.put_f64("d", {2}, d);
    ck.put_i32("i", {3, 1}, i);
    ck.put_text("t", "hello\nworld");
    const auto s = bytes(ck);
    const auto back = parse(s);
    CHECK(bytes(back) == s);
    CHECK(back.get_f64("d") == d);
    std::vector<std::uint64_t> shape;
    CHECK(back.get_i32("i", &shape) == i);
    CHECK(shape == std::vector<std::uint64_t>{3, 1});
    CHECK(back.get_text("t") == "hello\nworld");
    CHECK_THROWS_AS(back.get_f32("d"), InvalidArgument);
    CHECK_THROWS_AS(back.get_f64("missing"), InvalidArgument);
}

TEST_CASE("writer rejects inconsistent sections") {
    Checkpoint ck;
    const std::vector<float> v = {1, 2, 3};
    CHECK_THROWS_AS(ck.put_f32("x", {2, 2}, v), InvalidArgument);
    ck.put_f32("x", {3}, v);
    CHECK_THROWS_AS(ck.put_f32("x", {3}, v), InvalidArgument);
    CHECK_THROWS_AS(ck.put_f32("", {3}, v), InvalidArgument);
}

TEST_CASE("reader rejects corrupt input") {
    Checkpoint ck;
    const std::vector<float> v = {1, 2, 3, 4};
    ck.put_f32("x", {4}, v);
    const auto s = bytes(ck);
    CHECK_THROWS_AS(parse("NOPE" + s.substr(4)), InvalidArgument);
    CHECK_THROWS_AS(parse(s.substr(0, s.size() - 1)), InvalidArgument);
    CHECK_THROWS_AS(parse(s.substr(0, 10)), InvalidArgument);
    std::string future = s;
    future[4] = 9;
    CHECK_THROWS_AS(parse(future), InvalidArgument);
    // A huge declared shape must fail cleanly rather than allocate.
    std::string huge = s;
    const std::uint64_t big = std::uint64_t{1} << 62;
    std::memcpy(huge.data() + 4 + 4 + 4 + 4 + 1 + 1 + 4, &big, 8);
    CHECK_THROWS_AS(parse(huge), InvalidArgument);
}

TEST_CASE("model bundle round trip") {
    ModelBundle b;
    b.decoder = make_decoder<float>(8, 3, 16);
    b.shape_ids = {"car_0000", "car_0001"};
    b.latents = {LatentVector::Constant(8, 0.5f), LatentVector::LinSpaced(8, -1, 1)};
    EstimatorWeights<float> est(nn::Mlp<float>::random(estimator_architecture(8, 16), 4));
    est.in_shift.setConstant(0.25f);
    est.out_scale.setConstant(0.1f);
    b.estimator = est;
    b.drag = tiny_drag();
    b.prior = LatentPrior{Eigen::VectorXd::LinSpaced(8, 0, 1), Eigen::MatrixXd::Identity(8, 8) * (1.0 / 3.0)};
    b.config_json = R"({"seed": 3})";

    const auto s = bytes(b.to_checkpoint());
    const auto back = ModelBundle::from_checkpoint(parse(s));
    CHECK(bytes(back.to_checkpoint()) == s);
    REQUIRE(back.decoder);
    CHECK(back.decoder->latent_dim == 8);
    CHECK(back.decoder->net.flatten() == b.decoder->net.flatten());
    CHECK(back.shape_ids == b.shape_ids);
    CHECK(back.latents[1] == b.latents[1]);
    REQUIRE(back.estimator);
    CHECK(back.estimator->in_shift == est.in_shift);
    const LatentVector z = LatentVector::Constant(8, 0.2f);
    CHECK(estimate_params(*back.estimator, z) == estimate_params(est, z));
    REQUIRE(back.drag);
    CHECK(back.drag->trees[1].threshold == b.drag->trees[1].threshold);
    CHECK(back.config_json == b.config_json);
    REQUIRE(back.prior);
    CHECK(back.prior->factor == b.prior->factor);
    CHECK(back.prior->mean == b.prior->mean);

    FeatureVector f = FeatureVector::Zero(kFeatureSize);
    f[3] = 0.1 + 1e-12;  // sits exactly on a threshold: must still go left after reload
    CHECK(back.drag->predict(f) == b.drag->predict(f));
}

TEST_CASE("partial bundles and bad content") {
    ModelBundle only_latents;
    only_latents.shape_ids = {"a"};
    only_latents.latents = {LatentVector::Zero(4)};
    const auto back = ModelBundle::from_checkpoint(only_latents.to_checkpoint());
    CHECK_FALSE(back.decoder);
    CHECK_FALSE(back.estimator);
    CHECK(back.latents.size() == 1);

    Checkpoint bad;
    put_mlp(bad, "decoder", nn::Mlp<float>::random(estimator_architecture(8, 4), 1));
    CHECK_THROWS_AS(get_decoder(bad), InvalidArgument);

    ModelBundle mismatched;
    mismatched.shape_ids = {"a", "b"};
    mismatched.latents = {LatentVector::Zero(4)};
    CHECK_THROWS_AS(mismatched.to_checkpoint(), InvalidArgument);

    auto m = tiny_drag();
    m.trees[0].feature[1] = 5000;
    Checkpoint ck;
    put_drag_model(ck, m);
    CHECK_THROWS_AS(get_drag_model(ck), InvalidArgument);
}
