#pragma once

#include "vsdf/geometry/sdf.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

namespace vsdf {

/// Indexed triangle surface; triangles are counterclockwise seen from outside.
struct TriangleMesh {
    std::vector<Point3> vertices;
    std::vector<Eigen::Vector3i> triangles;

    bool empty() const { return triangles.empty(); }
};

struct Edge {
    int a;
    int b;
    friend bool operator==(const Edge&, const Edge&) = default;
};

struct WatertightReport {
    /// Undirected edges (a < b) not shared by exactly two oppositely oriented triangles.
    std::vector<Edge> violations;

    bool ok() const { return violations.empty(); }
};

WatertightReport watertight_check(const TriangleMesh& mesh);

/// Throws InvalidArgument if any index is out of range.
void validate_indices(const TriangleMesh& mesh);

double triangle_area(const TriangleMesh& mesh, int tri);
Eigen::Vector3d face_normal(const TriangleMesh& mesh, int tri);
/// Signed enclosed volume; positive for outward-oriented closed meshes.
double signed_volume(const TriangleMesh& mesh);

struct AxisBox {
    Point3 min;
    Point3 max;
    Eigen::Vector3d extent() const { return max - min; }
    Point3 center() const { return 0.5 * (min + max); }
};

AxisBox bounding_box(const TriangleMesh& mesh);

inline constexpr double kNormalizationRadius = 0.9;

/// Similarity transform v -> scale * (v + offset).
struct Normalization {
    double scale = 1.0;
    Point3 offset = Point3::Zero();

    Point3 apply(const Point3& v) const { return scale * (v + offset); }
    Point3 invert(const Point3& v) const { return v / scale - offset; }
};

/// Centres the bounding box on the origin and scales so max |v| = kNormalizationRadius.
/// A mesh that already satisfies both (to 1e-12) gets the identity transform.
std::pair<TriangleMesh, Normalization> normalize_to_unit_sphere(const TriangleMesh& mesh);

TriangleMesh transformed(const TriangleMesh& mesh, const Normalization& t);
/// Per-axis scale about the origin; a negative factor mirrors and flips winding.
TriangleMesh scaled(const TriangleMesh& mesh, const Eigen::Vector3d& factors);
TriangleMesh translated(const TriangleMesh& mesh, const Eigen::Vector3d& offset);
TriangleMesh mirrored_z(const TriangleMesh& mesh);

/// Drops triangles with repeated indices or area below min_area, then unused vertices.
TriangleMesh remove_degenerate(const TriangleMesh& mesh, double min_area = 1e-12);

/// Subdivided icosahedron projected onto a sphere (outward winding).
TriangleMesh icosphere(double radius, int subdivisions, const Point3& center = Point3::Zero());

// ASCII OBJ: `v x y z` and `f i j k` with 1-based indices, triangles only.
void write_obj(std::ostream& os, const TriangleMesh& mesh);
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh read_obj(std::istream& is);
TriangleMesh read_obj(const std::filesystem::path& path);

}  // namespace vsdf
