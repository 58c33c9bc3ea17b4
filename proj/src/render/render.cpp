#include "vsdf/render/render.hpp"

#include "vsdf/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace vsdf {

std::string_view view_name(View v) {
    switch (v) {
        case View::Top: return "top";
        case View::Bottom: return "bottom";
        case View::Left: return "left";
        case View::Right: return "right";
        case View::Front: return "front";
        case View::Back: return "back";
        case View::Side: return "side";
    }
    return "?";
}

ViewBasis view_basis(View v) {
    const Eigen::Vector3d x = Eigen::Vector3d::UnitX(), y = Eigen::Vector3d::UnitY(), z = Eigen::Vector3d::UnitZ();
    switch (v) {
        case View::Top: return {-z, -x, y};
        case View::Bottom: return {z, -x, -y};
        case View::Left: return {-x, y, -z};
        case View::Right:
        case View::Side: return {x, y, z};
        case View::Front: return {z, y, -x};
        case View::Back: return {-z, y, x};
    }
    throw InvalidArgument("view_basis: unknown view");
}

std::size_t ViewImage::foreground_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

namespace {

// Pixel-centre coordinate in [-1, 1]; ((2i + 1) - n) / n is exactly antisymmetric
// under i -> n - 1 - i, which keeps mirrored renders bit-exact.
double pixel_center(int i, int n) { return static_cast<double>(2 * i + 1 - n) / n; }

double edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double pu, double pv) {
    return (b.x() - a.x()) * (pv - a.y()) - (b.y() - a.y()) * (pu - a.x());
}

}  // namespace

ViewImage render_view(const TriangleMesh& mesh, View view, int resolution, RenderChannel channel) {
    if (resolution <= 0) throw InvalidArgument("render_view: resolution must be positive");
    validate_indices(mesh);
    const int n = resolution;
    ViewImage img;
    img.view = view;
    img.channel = channel;
    img.width = img.height = n;
    img.pixels.assign(static_cast<std::size_t>(n) * n * img.channels(),
                      channel == RenderChannel::Depth ? kDepthBackground : 0.0f);
    img.mask.assign(static_cast<std::size_t>(n) * n, 0);

    const ViewBasis b = view_basis(view);
    std::vector<Eigen::Vector2d> uv(mesh.vertices.size());
    std::vector<double> depth(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Point3& p = mesh.vertices[i];
        uv[i] = {p.dot(b.u), p.dot(b.v)};
        depth[i] = 1.0 - p.dot(b.w);
    }

    std::vector<double> zbuf(static_cast<std::size_t>(n) * n, std::numeric_limits<double>::infinity());
    std::vector<int> owner(zbuf.size(), -1);
    for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
        // Sorting the corners by index gives every triangle a winding that
        // only depends on its vertex ids, so a mirrored mesh rasterizes to the
        // exact mirror image.
        std::array<int, 3> s = {mesh.triangles[t][0], mesh.triangles[t][1], mesh.triangles[t][2]};
        std::sort(s.begin(), s.end());
        const Eigen::Vector2d &a = uv[s[0]], &bb = uv[s[1]], &c = uv[s[2]];
        const double umin = std::min({a.x(), bb.x(), c.x()}), umax = std::max({a.x(), bb.x(), c.x()});
        const double vmin = std::min({a.y(), bb.y(), c.y()}), vmax = std::max({a.y(), bb.y(), c.y()});
        // Column i has centre u = (2i + 1 - n) / n, row j has v = (n - 1 - 2j) / n.
        const int i0 = std::max(0, static_cast<int>(std::floor((umin * n + n - 1) / 2.0)));
        const int i1 = std::min(n - 1, static_cast<int>(std::ceil((umax * n + n - 1) / 2.0)));
        const int j0 = std::max(0, static_cast<int>(std::floor((n - 1 - vmax * n) / 2.0)));
        const int j1 = std::min(n - 1, static_cast<int>(std::ceil((n - 1 - vmin * n) / 2.0)));
        for (int j = j0; j <= j1; ++j) {
            const double pv = -pixel_center(j, n);
            for (int i = i0; i <= i1; ++i) {
                const double pu = pixel_center(i, n);
                const double e0 = edge(bb, c, pu, pv);
                const double e1 = edge(c, a, pu, pv);
                const double e2 = edge(a, bb, pu, pv);
                const bool inside = (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
                const double sum = e0 + e1 + e2;
                if (!inside || sum == 0.0) continue;
                const double d = (e0 * depth[s[0]] + e1 * depth[s[1]] + e2 * depth[s[2]]) / sum;
                const std::size_t k = static_cast<std::size_t>(j) * n + i;
                if (d < zbuf[k]) {
                    zbuf[k] = d;
                    owner[k] = t;
                }
            }
        }
    }

    std::vector<Eigen::Vector3d> normals(mesh.triangles.size());
    for (std::size_t k = 0; k < owner.size(); ++k) {
        const int t = owner[k];
        if (t < 0) continue;
        img.mask[k] = 1;
        if (channel == RenderChannel::Depth) {
            img.pixels[k] = static_cast<float>(zbuf[k]);
            continue;
        }
        const Eigen::Vector3d nw = face_normal(mesh, t);
        const Eigen::Vector3d nv(nw.dot(b.u), nw.dot(b.v), nw.dot(b.w));
        for (int c = 0; c < 3; ++c) img.pixels[3 * k + c] = static_cast<float>(nv[c]);
    }
    return img;
}

std::uint8_t quantize_normal(float c) {
    const float clamped = std::clamp(c, -1.0f, 1.0f);
    return static_cast<std::uint8_t>(128 + std::lround(127.0f * clamped));
}

Image8 to_image8(const ViewImage& img) {
    Image8 out{img.width, img.height, img.channels(), {}};
    out.data.resize(img.pixels.size());
    for (std::size_t k = 0; k < img.pixels.size(); ++k) {
        if (img.channel == RenderChannel::Depth) {
            out.data[k] = static_cast<std::uint8_t>(std::lround(255.0f * std::clamp(img.pixels[k], 0.0f, 2.0f) / 2.0f));
        } else {
            out.data[k] = img.mask[k / 3] ? quantize_normal(img.pixels[k]) : 0;
        }
    }
    return out;
}

std::array<int, 2> atlas_tile(View v) {
    switch (v) {
        case View::Top: return {0, 0};
        case View::Bottom: return {1, 0};
        case View::Left: return {2, 0};
        case View::Right:
        case View::Side: return {0, 1};
        case View::Front: return {1, 1};
        case View::Back: return {2, 1};
    }
    throw InvalidArgument("atlas_tile: unknown view");
}

NormalAtlas build_atlas(const TriangleMesh& mesh, int resolution) {
    NormalAtlas atlas;
    atlas.tile = resolution;
    atlas.composite = {3 * resolution, 2 * resolution, 3, {}};
    atlas.composite.data.assign(static_cast<std::size_t>(atlas.composite.width) * atlas.composite.height * 3, 0);
    for (std::size_t i = 0; i < kAtlasViews.size(); ++i) {
        atlas.views[i] = render_view(mesh, kAtlasViews[i], resolution);
        const Image8 tile = to_image8(atlas.views[i]);
        const auto [col, row] = atlas_tile(kAtlasViews[i]);
        for (int y = 0; y < resolution; ++y) {
            const std::size_t dst = ((static_cast<std::size_t>(row) * resolution + y) * atlas.composite.width +
                                     static_cast<std::size_t>(col) * resolution) * 3;
            std::copy_n(tile.data.begin() + static_cast<std::ptrdiff_t>(y) * resolution * 3, resolution * 3,
                        atlas.composite.data.begin() + static_cast<std::ptrdiff_t>(dst));
        }
    }
    return atlas;
}

}  // namespace vsdf
