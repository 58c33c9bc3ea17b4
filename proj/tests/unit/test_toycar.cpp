#include "vsdf/errors.hpp"
#include "vsdf/geometry/marching_cubes.hpp"
#include "vsdf/params/extract.hpp"
#include "vsdf/toycar/toy_car.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace vsdf;

namespace {

TriangleMesh car_mesh(const ToyCar& car, int n) {
    return marching_cubes(normalized_field(car), GridSpec{n, 1.0}).mesh;
}

}  // namespace

TEST_CASE("fit_circle_3pts recovers constructed circles") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1, 1), ang(0, 2 * M_PI);
    for (int k = 0; k < 200; ++k) {
        const Eigen::Vector2d c(u(rng), u(rng));
        const double r = 0.1 + std::abs(u(rng));
        Eigen::Vector2d p[3];
        for (auto& q : p) {
            const double a = ang(rng);
            q = c + r * Eigen::Vector2d(std::cos(a), std::sin(a));
        }
        const double area = std::abs((p[1] - p[0]).x() * (p[2] - p[0]).y() - (p[1] - p[0]).y() * (p[2] - p[0]).x());
        if (area < 1e-3) continue;
        const auto fit = fit_circle_3pts(p[0], p[1], p[2]);
        CHECK((fit.center - c).norm() < 1e-9);
        CHECK(std::abs(fit.radius - r) < 1e-9);
    }
    CHECK_THROWS_AS(fit_circle_3pts({0, 0}, {1, 1}, {2, 2}), DegenerateGeometry);
}

TEST_CASE("default spec has the reference parameters") {
    const ToyCarSpec s;
    CHECK((true_params(s) - reference_target()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("spec_from_params inverts true_params") {
    GeomParams p;
    p << 1.0, 0.31, 0.40, 0.05, 0.58, 0.19, 0.23;
    const auto s = spec_from_params(p, {}, 2.5);
    CHECK((true_params(s) - p).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s.body_length == doctest::Approx(2.5));
}

TEST_CASE("validate names the bad field") {
    ToyCarSpec s;
    s.wheel_radius = s.ground_clearance * 0.5;  // wheels would not reach below the floor
    CHECK_THROWS_AS(validate(s), InvalidArgument);
    ToyCarSpec t;
    t.body_width = -1;
    try {
        validate(t);
        FAIL("no throw");
    } catch (const InvalidArgument& e) {
        CHECK(std::string(e.what()).find("body_width") != std::string::npos);
    }
}

TEST_CASE("corpus generation is deterministic and in range") {
    const auto a = generate_corpus(20, 5), b = generate_corpus(20, 5), c = generate_corpus(20, 6);
    REQUIRE(a.entries.size() == 20);
    const CorpusRanges r;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(a.entries[i].shape_id == b.entries[i].shape_id);
        CHECK(a.entries[i].true_params == b.entries[i].true_params);
        const auto& p = a.entries[i].true_params;
        CHECK(p[0] == 1.0);
        CHECK(p[1] >= r.height.lo);
        CHECK(p[1] <= r.height.hi);
        CHECK(p[4] >= r.wheelbase.lo);
        CHECK(p[4] <= r.wheelbase.hi);
    }
    CHECK(a.entries[0].true_params != c.entries[0].true_params);
    CHECK_THROWS_AS(generate_corpus(1, 5), InvalidArgument);
}

TEST_CASE("manifest round trip") {
    const auto m = generate_corpus(5, 3);
    std::stringstream ss;
    write_manifest(ss, m);
    const auto back = read_manifest(ss);
    REQUIRE(back.entries.size() == m.entries.size());
    CHECK(back.generator_version == kToyCarGeneratorVersion);
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        CHECK(back.entries[i].shape_id == m.entries[i].shape_id);
        CHECK(back.entries[i].seed == m.entries[i].seed);
        CHECK((back.entries[i].true_params - m.entries[i].true_params).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("toy car field: wheels below the floor, normalized into the unit sphere") {
    const auto car = make_toy_car(ToyCarSpec{});
    const auto f = normalized_field(car);
    CHECK(f.bounding_radius() <= 1.0);
    // A point just above the ground under a wheel hub is inside; under the floor mid-car is outside.
    const double s = normalization_scale(car);
    const Point3 c = car.bounds.center();
    const ToyCarSpec d;
    const Point3 under_hub(d.front_overhang, 0.5 * d.ground_clearance, 0.9 * (0.5 * d.body_width - d.wheel_inset()));
    const Point3 mid_floor(0.5, 0.5 * d.ground_clearance, 0.0);
    CHECK(f(s * (under_hub - c)) < 0);
    CHECK(f(s * (mid_floor - c)) > 0);
}

TEST_CASE("extractor recovers construction truth at N=128") {
    const auto m = generate_corpus(8, 21);
    const GridSpec g{128, 1.0};
    for (const auto& e : m.entries) {
        const auto car = make_toy_car(e.spec);
        const auto mesh = car_mesh(car, 128);
        const double len = normalization_scale(car) * e.spec.body_length;
        const auto ex = extract_params(mesh, ExtractionConfig::for_grid(g, len));
        const double tol = std::max(2 * g.cell_size() / len, 0.01);
        CAPTURE(e.shape_id);
        CHECK((ex.params - e.true_params).cwiseAbs().maxCoeff() <= tol);
    }
}

TEST_CASE("extractor is invariant to scale, translation and mirroring") {
    const auto car = make_toy_car(ToyCarSpec{});
    const auto mesh = car_mesh(car, 96);
    const ExtractionConfig cfg = ExtractionConfig::for_grid(GridSpec{96, 1.0}, 1.75);
    const auto base = extract_params(mesh, cfg).params;
    const auto near = [&](const TriangleMesh& m) {
        return (extract_params(m, cfg).params - base).cwiseAbs().maxCoeff();
    };
    CHECK(near(scaled(mesh, Eigen::Vector3d::Constant(2.7))) < 1e-6);
    CHECK(near(translated(mesh, {3.0, -1.0, 0.5})) < 1e-6);
    CHECK(near(mirrored_z(mesh)) < 1e-6);
}

TEST_CASE("extractor failure modes") {
    CHECK_THROWS_AS(extract_params(icosphere(0.5, 2)), ExtractionFailure);
}
