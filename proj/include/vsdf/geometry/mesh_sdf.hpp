#pragma once

#include "vsdf/geometry/mesh.hpp"

#include <span>
#include <vector>

namespace vsdf {

/// Closest point on triangle (a, b, c) to p.
Point3 closest_point_on_triangle(const Point3& p, const Point3& a, const Point3& b, const Point3& c);

/// Signed distance to a watertight mesh: exact unsigned distance to the nearest
/// triangle, sign by ray-crossing parity (odd = inside).
///
/// Throws InvalidArgument naming an offending edge if the mesh is not watertight,
/// and DegenerateGeometry if every retry of the parity ray grazes an edge.
std::vector<double> compute_mesh_sdf(const TriangleMesh& mesh, std::span<const Point3> points);

}  // namespace vsdf
