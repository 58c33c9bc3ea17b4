#include "vsdf/errors.hpp"
#include "vsdf/render/canny.hpp"
#include "vsdf/render/drag.hpp"
#include "vsdf/render/render.hpp"
#include "vsdf/toycar/toy_car.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>

using namespace vsdf;

namespace {

// Axis-aligned box with outward winding.
TriangleMesh box_mesh(const Point3& lo, const Point3& hi) {
    TriangleMesh m;
    for (int i = 0; i < 8; ++i) m.vertices.push_back({i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z()});
    const int quads[6][4] = {{0, 2, 6, 4}, {1, 3, 7, 5}, {0, 1, 5, 4}, {2, 3, 7, 6}, {0, 1, 3, 2}, {4, 5, 7, 6}};
    const Point3 c = 0.5 * (lo + hi);
    for (const auto& q : quads) {
        Eigen::Vector3i a(q[0], q[1], q[2]), b(q[0], q[2], q[3]);
        const Point3 fc = 0.25 * (m.vertices[q[0]] + m.vertices[q[1]] + m.vertices[q[2]] + m.vertices[q[3]]);
        const Eigen::Vector3d n = (m.vertices[q[1]] - m.vertices[q[0]]).cross(m.vertices[q[2]] - m.vertices[q[0]]);
        if (n.dot(fc - c) < 0) {
            std::swap(a[1], a[2]);
            std::swap(b[1], b[2]);
        }
        m.triangles.push_back(a);
        m.triangles.push_back(b);
    }
    return m;
}

const TriangleMesh& offset_car() {
    static const TriangleMesh m = translated(toy_car_mesh(make_toy_car(ToyCarSpec{}), 64), {0.0, 0.0, 0.07});
    return m;
}

}  // namespace

TEST_CASE("view frames are right-handed") {
    for (View v : {View::Top, View::Bottom, View::Left, View::Right, View::Front, View::Back, View::Side}) {
        const auto b = view_basis(v);
        CHECK((b.u.cross(b.v) - b.w).norm() < 1e-15);
    }
    CHECK(view_basis(View::Front).w == Eigen::Vector3d(-1, 0, 0));
    CHECK(view_basis(View::Top).w == Eigen::Vector3d(0, 1, 0));
}

TEST_CASE("box renders: silhouette, depth and normal") {
    const auto m = box_mesh({-0.5, -0.2, -0.25}, {0.3, 0.4, 0.25});
    const auto n = render_view(m, View::Front, 128, RenderChannel::Normal);
    const auto d = render_view(m, View::Front, 128, RenderChannel::Depth);
    // Pixel centres (2i + 1 - n) / n inside |z| < 0.25 and -0.2 < y < 0.4.
    CHECK(n.foreground_count() == 32 * 39);
    CHECK(d.foreground_count() == 32 * 39);
    CHECK(n.foreground(64, 40));
    CHECK_FALSE(n.foreground(0, 0));
    CHECK(d.at(64, 40) == doctest::Approx(0.5));  // front face at x = -0.5, depth 1 - p.w
    CHECK(d.at(0, 0) == kDepthBackground);
    CHECK(n.at(64, 40, 0) == 0.0f);
    CHECK(n.at(64, 40, 1) == 0.0f);
    CHECK(n.at(64, 40, 2) == 1.0f);
    CHECK(render_view(TriangleMesh{}, View::Top).foreground_count() == 0);
}

TEST_CASE("quantization") {
    CHECK(quantize_normal(1.0f) == 255);
    CHECK(quantize_normal(-1.0f) == 1);
    CHECK(quantize_normal(0.0f) == 128);
    for (float c = -1.0f; c <= 1.0f; c += 0.01f) CHECK(quantize_normal(-c) == 256 - quantize_normal(c));
    const auto m = box_mesh({-0.5, -0.2, -0.25}, {0.3, 0.4, 0.25});
    const auto d = to_image8(render_view(m, View::Front, 32, RenderChannel::Depth));
    CHECK(d.channels == 1);
    CHECK(d.at(0, 0) == 255);
    CHECK(d.at(16, 10) == 64);  // round(255 * 0.5 / 2)
}

TEST_CASE("mirroring the mesh mirrors the quantized renders exactly") {
    const auto& m = offset_car();
    const auto mm = mirrored_z(m);
    // Front of the mirror is the front reversed; right of the mirror is the left reversed.
    const std::pair<Image8, Image8> pairs[] = {
        {to_image8(render_view(m, View::Front, 64)), to_image8(render_view(mm, View::Front, 64))},
        {to_image8(render_view(m, View::Left, 64)), to_image8(render_view(mm, View::Right, 64))},
        {to_image8(render_view(m, View::Top, 64)), to_image8(render_view(mm, View::Top, 64))}};
    for (const auto& [a, b] : pairs) {
        int mismatches = 0;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                const int rx = 63 - x;
                const int u = a.at(x, y, 0), um = b.at(rx, y, 0);
                mismatches += (u == 0 ? um != 0 : um != 256 - u);
                mismatches += a.at(x, y, 1) != b.at(rx, y, 1) || a.at(x, y, 2) != b.at(rx, y, 2);
            }
        CHECK(mismatches == 0);
    }
}

TEST_CASE("atlas layout and determinism") {
    const auto& m = offset_car();
    const auto a = build_atlas(m, 32), b = build_atlas(m, 32);
    CHECK(a.composite == b.composite);
    CHECK(a.composite.width == 96);
    CHECK(a.composite.height == 64);
    CHECK(atlas_tile(View::Top) == std::array<int, 2>{0, 0});
    CHECK(atlas_tile(View::Right) == std::array<int, 2>{0, 1});
    CHECK(atlas_tile(View::Back) == std::array<int, 2>{2, 1});
    const auto front8 = to_image8(a.views[4]);
    const auto [col, row] = atlas_tile(View::Front);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            for (int c = 0; c < 3; ++c) REQUIRE(a.composite.at(col * 32 + x, row * 32 + y, c) == front8.at(x, y, c));
}

TEST_CASE("PNG round trip") {
    Image8 img{5, 3, 3, {}};
    for (int i = 0; i < 45; ++i) img.data.push_back(static_cast<std::uint8_t>(i * 5));
    const auto path = std::filesystem::temp_directory_path() / "vsdf_test_rt.png";
    write_png(path, img);
    CHECK(read_png(path) == img);
    std::filesystem::remove(path);
    CHECK_THROWS(read_png(path));
}

TEST_CASE("canny on a step edge") {
    GrayImage g{32, 32, std::vector<float>(32 * 32, 0.0f)};
    for (int y = 0; y < 32; ++y)
        for (int x = 16; x < 32; ++x) g.pixels[y * 32 + x] = 1.0f;
    const auto e = canny_edges(g);
    CHECK(e.channels == 1);
    int edge = 0, off_step = 0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            if (e.at(x, y)) {
                ++edge;
                off_step += x != 15 && x != 16;
                CHECK(e.at(x, y) == 255);
            }
    // Gradients exist only away from the one-pixel border: one line of 30 pixels, at most two.
    CHECK(edge >= 30);
    CHECK(edge <= 60);
    CHECK(off_step == 0);

    const GrayImage flat{16, 16, std::vector<float>(256, 0.5f)};
    for (auto v : canny_edges(flat).data) CHECK(v == 0);
    CHECK_THROWS_AS(canny_edges(g, CannyConfig{1.4, 0.3, 0.3}), InvalidArgument);
}

TEST_CASE("drag features: length and mirror invariance") {
    const auto& m = offset_car();
    const auto f = drag_features(build_atlas(m));
    const auto fm = drag_features(build_atlas(mirrored_z(m)));
    CHECK(f.size() == 1160);
    CHECK(f == fm);
    const FeatureVector r = FeatureVector::LinSpaced(kFeatureSize, -1, 1);
    CHECK(mirror_features(mirror_features(r)) == r);
    CHECK(mirror_features(f) == f);
}

TEST_CASE("synthetic drag oracle on a box") {
    const auto m = box_mesh({-0.5, -0.2, -0.25}, {0.3, 0.4, 0.25});
    const auto t = synthetic_cd_terms(m);
    CHECK(t.front_occupancy == doctest::Approx(32.0 * 39.0 / (128.0 * 128.0)));
    CHECK(t.rear_taper == doctest::Approx(1.0));
    CHECK(t.cd == doctest::Approx(0.10 + 0.50 * t.front_occupancy));
    CHECK_THROWS_AS(synthetic_cd_terms(TriangleMesh{}), InvalidArgument);

    // A wedge whose height falls to zero at the rear fills half the rear quarter.
    TriangleMesh wedge = m;
    for (auto& v : wedge.vertices)
        if (v.x() > 0 && v.y() > 0) v.y() = -0.2 + 1e-9;
    CHECK(synthetic_cd_terms(wedge).rear_taper < 0.6);
}

TEST_CASE("boosted trees on a step function") {
    std::vector<DragRecord> data;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 100; ++i) {
        FeatureVector f = FeatureVector::Zero(kFeatureSize);
        f[7] = u(rng);
        f[9] = u(rng);
        data.push_back({f, f[7] > 0.5 ? 1.0 : 0.0});
    }
    std::vector<double> loss;
    const auto one = fit_boosted_trees(data, BoostConfig{1, 1, 1.0, 1}, &loss);
    REQUIRE(one.trees.size() == 1);
    CHECK(one.trees[0].feature[0] == 7);
    for (const auto& r : data) CHECK(one.predict(r.features) == doctest::Approx(r.cd));
    CHECK(loss.size() == 2);
    CHECK(loss[1] == doctest::Approx(0.0));

    const auto ens = fit_boosted_trees(data, BoostConfig{});
    CHECK(ens.trees.size() == 200);
    CHECK(evaluate_drag(ens, data).r2 > 0.99);

    auto flat = data;
    for (auto& r : flat) r.cd = 0.3;
    CHECK_THROWS_AS(fit_boosted_trees(flat, BoostConfig{}), InvalidArgument);
    CHECK_THROWS_AS(train_drag_model(std::vector<DragRecord>(data.begin(), data.begin() + 40)), InvalidArgument);

    const auto split = train_drag_model(data, BoostConfig{20, 2, 0.3, 1}, 5);
    CHECK(split.report.train.count == 70);
    CHECK(split.report.validation.count == 15);
    CHECK(split.report.test.count == 15);
}

TEST_CASE("drag augmentation variants") {
    ToyCarSpec s;
    const auto v = drag_augment(s, 1.1, 48);
    REQUIRE(v.size() == 4);
    // Order: original, its x-flip, widened, its x-flip.
    const auto b0 = bounding_box(v[0]), b1 = bounding_box(v[2]);
    CHECK(b1.extent().z() / b1.extent().x() > b0.extent().z() / b0.extent().x());
    // The flipped copy has the same silhouette seen from the other end.
    CHECK(render_view(v[1], View::Front, 32).foreground_count() == render_view(v[0], View::Back, 32).foreground_count());
    CHECK(render_view(v[3], View::Back, 32).foreground_count() == render_view(v[2], View::Front, 32).foreground_count());
}
