#include "vsdf/autodecoder/autodecoder.hpp"
#include "vsdf/errors.hpp"
#include "vsdf/geometry/sdf.hpp"

#include <doctest.h>

#include <cmath>

using namespace vsdf;

namespace {

std::vector<SampleSet> two_spheres() {
    return {sample_shape(sphere(0.35), 2000, 1, {}, "small"), sample_shape(sphere(0.65), 2000, 2, {}, "large")};
}

SdfTrainConfig small_config() {
    SdfTrainConfig c;
    c.latent_dim = 4;
    c.width = 32;
    c.epochs = 150;
    c.batch_size = 1000;
    c.learning_rate = 2e-3;
    c.latent_learning_rate = 2e-3;
    return c;
}

// Mean distance of mesh vertices from the origin.
double mean_radius(const TriangleMesh& m) {
    double s = 0;
    for (const auto& v : m.vertices) s += v.norm();
    return s / static_cast<double>(m.vertices.size());
}

}  // namespace

TEST_CASE("training separates two spheres and is deterministic") {
    const auto corpus = two_spheres();
    const auto a = train_deepsdf(corpus, small_config());
    const auto b = train_deepsdf(corpus, small_config());
    REQUIRE(a.latents.size() == 2);
    CHECK(a.latents[0] == b.latents[0]);
    CHECK(a.weights.net.flatten() == b.weights.net.flatten());
    CHECK(a.report.data_loss.back() < 0.1 * a.report.data_loss.front());
    CHECK(a.report.probe_loss_final < a.report.probe_loss_initial);
    CHECK(a.latent("large") == a.latents[1]);
    CHECK_THROWS_AS(a.latent("missing"), InvalidArgument);

    // Each latent decodes to a sphere of roughly its own radius.
    const GridSpec g{48, 1.0};
    const double r0 = mean_radius(decode_to_mesh(a.weights, a.latents[0], g).mesh);
    const double r1 = mean_radius(decode_to_mesh(a.weights, a.latents[1], g).mesh);
    CHECK(r0 == doctest::Approx(0.35).epsilon(0.15));
    CHECK(r1 == doctest::Approx(0.65).epsilon(0.15));

    SUBCASE("latent inference never returns a worse latent than its start") {
        InferConfig ic;
        ic.iterations = 100;
        const LatentVector start = LatentVector::Zero(4);
        const auto z = infer_latent(a.weights, corpus[1], ic, &start);
        CHECK(latent_loss(a.weights, z, corpus[1], ic.reg_weight) <=
              latent_loss(a.weights, start, corpus[1], ic.reg_weight));
    }
    SUBCASE("decoder_field matches decoder_forward") {
        const auto f = decoder_field(a.weights, a.latents[0]);
        std::vector<Point3> pts = {{0.1, 0.2, -0.3}, {0.5, 0, 0}, {-0.9, 0.1, 0.4}};
        std::vector<double> out(pts.size());
        f.eval_batch(pts, out);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double direct = decoder_forward(a.weights, a.latents[0], pts[i]);
            CHECK(out[i] == doctest::Approx(direct).epsilon(1e-5));
            CHECK(f(pts[i]) == doctest::Approx(direct).epsilon(1e-5));
        }
    }
}

TEST_CASE("training input validation") {
    const auto corpus = two_spheres();
    CHECK_THROWS_AS(train_deepsdf({corpus[0]}, small_config()), InvalidArgument);
    auto bad = small_config();
    bad.learning_rate = 0;
    CHECK_THROWS_AS(train_deepsdf(corpus, bad), InvalidArgument);
    auto empty = corpus;
    empty[1].samples.clear();
    CHECK_THROWS_AS(train_deepsdf(empty, small_config()), InvalidArgument);
}

TEST_CASE("runaway learning rate is reported as divergence") {
    auto c = small_config();
    c.learning_rate = 1e12;
    c.latent_learning_rate = 1e12;
    CHECK_THROWS_AS(train_deepsdf(two_spheres(), c), TrainingDiverged);
}
