#include "vsdf/geometry/mesh_sdf.hpp"

#include "vsdf/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <optional>

namespace vsdf {

Point3 closest_point_on_triangle(const Point3& p, const Point3& a, const Point3& b, const Point3& c) {
    // Region tests over the triangle's Voronoi regions.
    const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Eigen::Vector3d bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

    const Eigen::Vector3d cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

namespace {

constexpr double kGraze = 1e-9;

// Crossing count along the ray, or nullopt when the ray passes too close to an
// edge or vertex for parity to be trusted.
std::optional<int> crossings(const TriangleMesh& mesh, const Point3& origin, const Eigen::Vector3d& dir) {
    int count = 0;
    for (const auto& t : mesh.triangles) {
        const Point3& a = mesh.vertices[t[0]];
        const Eigen::Vector3d e1 = mesh.vertices[t[1]] - a, e2 = mesh.vertices[t[2]] - a;
        const Eigen::Vector3d pv = dir.cross(e2);
        const double det = e1.dot(pv);
        const double scale = e1.norm() * e2.norm();
        if (std::abs(det) <= kGraze * scale) {
            // Ray parallel to the plane: only a problem if it lies in the plane.
            const Eigen::Vector3d n = e1.cross(e2);
            if (std::abs(n.normalized().dot(origin - a)) <= kGraze) return std::nullopt;
            continue;
        }
        const double inv = 1.0 / det;
        const Eigen::Vector3d s = origin - a;
        const double u = s.dot(pv) * inv;
        if (u < -kGraze || u > 1.0 + kGraze) continue;
        const Eigen::Vector3d q = s.cross(e1);
        const double v = dir.dot(q) * inv;
        if (v < -kGraze || u + v > 1.0 + kGraze) continue;
        const double dist = e2.dot(q) * inv;
        if (dist < -kGraze) continue;
        const bool near_edge = u < kGraze || v < kGraze || u + v > 1.0 - kGraze || dist < kGraze;
        if (near_edge) return std::nullopt;
        ++count;
    }
    return count;
}

}  // namespace

std::vector<double> compute_mesh_sdf(const TriangleMesh& mesh, std::span<const Point3> points) {
    const auto report = watertight_check(mesh);
    if (mesh.empty()) throw InvalidArgument("compute_mesh_sdf: empty mesh");
    if (!report.ok()) {
        const Edge e = report.violations.front();
        throw InvalidArgument(fmt::format("compute_mesh_sdf: mesh is not watertight at edge ({}, {})", e.a, e.b));
    }

    const Eigen::Vector3d base_dir = Eigen::Vector3d(0.5377, 0.2133, 0.8153).normalized();
    const Eigen::Vector3d jitter[] = {{0.0, 0.0, 0.0}, {0.031, -0.017, 0.007}, {-0.023, 0.041, -0.013},
                                      {0.011, 0.029, -0.037}};

    std::vector<double> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Point3& p = points[i];
        double best = std::numeric_limits<double>::infinity();
        for (const auto& t : mesh.triangles) {
            const Point3 c = closest_point_on_triangle(p, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
            best = std::min(best, (c - p).squaredNorm());
        }
        const double dist = std::sqrt(best);
        if (dist <= 1e-12) {
            out[i] = 0.0;
            continue;
        }
        std::optional<int> hits;
        for (const auto& j : jitter) {
            hits = crossings(mesh, p, (base_dir + j).normalized());
            if (hits) break;
        }
        if (!hits)
            throw DegenerateGeometry(fmt::format("compute_mesh_sdf: parity ray grazes the mesh at point {}", i));
        out[i] = (*hits % 2 == 1) ? -dist : dist;
    }
    return out;
}

}  // namespace vsdf
