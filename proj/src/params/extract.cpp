#include "vsdf/params/extract.hpp"

#include "vsdf/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace vsdf {

Circle2 fit_circle_3pts(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    const Eigen::Vector2d ab = b - a, ac = c - a;
    const double cross = ab.x() * ac.y() - ab.y() * ac.x();
    if (std::abs(0.5 * cross) <= 1e-12)
        throw DegenerateGeometry("fit_circle_3pts: points are collinear");
    const double d = 2.0 * cross;
    const double ab2 = ab.squaredNorm(), ac2 = ac.squaredNorm();
    const Eigen::Vector2d u((ac.y() * ab2 - ab.y() * ac2) / d, (ab.x() * ac2 - ac.x() * ab2) / d);
    return {a + u, u.norm()};
}

ExtractionConfig ExtractionConfig::for_grid(const GridSpec& grid, double length) {
    ExtractionConfig cfg;
    const double h = grid.cell_size() / length;
    cfg.y_band_epsilon = h;
    cfg.center_band = h;
    cfg.floor_tolerance = 0.1 * h;
    return cfg;
}

TriangleMesh largest_component(const TriangleMesh& mesh) {
    const int nv = static_cast<int>(mesh.vertices.size());
    std::vector<int> parent(nv);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& t : mesh.triangles) {
        parent[find(t[1])] = find(t[0]);
        parent[find(t[2])] = find(t[0]);
    }
    std::vector<int> tri_count(nv, 0);
    for (const auto& t : mesh.triangles) ++tri_count[find(t[0])];
    const int best = static_cast<int>(std::max_element(tri_count.begin(), tri_count.end()) - tri_count.begin());

    TriangleMesh out;
    std::vector<int> remap(nv, -1);
    for (const auto& t : mesh.triangles) {
        if (find(t[0]) != best) continue;
        Eigen::Vector3i nt;
        for (int k = 0; k < 3; ++k) {
            if (remap[t[k]] < 0) {
                remap[t[k]] = static_cast<int>(out.vertices.size());
                out.vertices.push_back(mesh.vertices[t[k]]);
            }
            nt[k] = remap[t[k]];
        }
        out.triangles.push_back(nt);
    }
    return out;
}

namespace {

TireLandmark fit_tire(const std::vector<Point3>& verts, const Point3& floor_point, double floor_tol,
                      double x_center, bool front) {
    const Point3* lowest = nullptr;
    const Point3* min_x = nullptr;
    const Point3* max_x = nullptr;
    int count = 0;
    for (const auto& v : verts) {
        if (!(v.y() < floor_point.y() - floor_tol)) continue;
        if (front ? !(v.x() < x_center) : !(v.x() > x_center)) continue;
        ++count;
        if (!lowest || v.y() < lowest->y()) lowest = &v;
        if (!min_x || v.x() < min_x->x()) min_x = &v;
        if (!max_x || v.x() > max_x->x()) max_x = &v;
    }
    if (count < 3)
        throw ExtractionFailure(fmt::format("no tire points below the floor ({} {} candidates)",
                                            front ? "front" : "rear", count));
    const Circle2 c = fit_circle_3pts(lowest->head<2>(), min_x->head<2>(), max_x->head<2>());
    return {c.center, c.radius, {*lowest, *min_x, *max_x}};
}

}  // namespace

Extraction extract_params(const TriangleMesh& input, const ExtractionConfig& cfg) {
    if (input.vertices.empty() || input.triangles.empty()) throw ExtractionFailure("empty mesh");
    const TriangleMesh filtered = cfg.largest_component_only ? largest_component(input) : TriangleMesh{};
    const TriangleMesh& mesh = cfg.largest_component_only ? filtered : input;

    // Only vertices referenced by triangles take part.
    std::vector<char> used(mesh.vertices.size(), 0);
    for (const auto& t : mesh.triangles) used[t[0]] = used[t[1]] = used[t[2]] = 1;
    std::vector<Point3> verts;
    verts.reserve(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
        if (used[i]) verts.push_back(mesh.vertices[i]);

    Point3 lo = verts.front(), hi = verts.front();
    for (const auto& v : verts) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const double length = hi.x() - lo.x();
    if (!(length > 0.0)) throw ExtractionFailure("zero-length mesh");
    const double x_center = 0.5 * (lo.x() + hi.x());

    // Step 1: floor point at the longitudinal centre.
    const Point3* floor = nullptr;
    for (const auto& v : verts) {
        const double dx = std::abs(v.x() - x_center);
        if (dx > cfg.center_band * length) continue;
        if (!floor) {
            floor = &v;
            continue;
        }
        const double fdx = std::abs(floor->x() - x_center);
        if (v.y() < floor->y() || (v.y() == floor->y() && (dx < fdx || (dx == fdx && v.z() < floor->z()))))
            floor = &v;
    }
    if (!floor) throw ExtractionFailure("no vertices near the longitudinal centre");

    // Steps 2-4: tire circles from three points below the floor on each half.
    const double floor_tol = cfg.floor_tolerance * length;
    const TireLandmark front = fit_tire(verts, *floor, floor_tol, x_center, true);
    const TireLandmark rear = fit_tire(verts, *floor, floor_tol, x_center, false);

    const double ground = 0.5 * ((front.center.y() - front.radius) + (rear.center.y() - rear.radius));
    const double tire_y = 0.5 * (front.center.y() + rear.center.y());
    double z_min = 0.0, z_max = 0.0;
    bool any = false;
    for (const auto& v : verts) {
        if (std::abs(v.y() - tire_y) > cfg.y_band_epsilon * length) continue;
        z_min = any ? std::min(z_min, v.z()) : v.z();
        z_max = any ? std::max(z_max, v.z()) : v.z();
        any = true;
    }
    if (!any) throw ExtractionFailure("no vertices at the tire-centre height");

    Extraction out;
    out.length = length;
    out.floor_point = *floor;
    out.front = front;
    out.rear = rear;
    out.params << 1.0, (hi.y() - lo.y()) / length, (z_max - z_min) / length, (floor->y() - ground) / length,
        (rear.center.x() - front.center.x()) / length, (front.center.x() - lo.x()) / length,
        (hi.x() - rear.center.x()) / length;
    return out;
}

}  // namespace vsdf
