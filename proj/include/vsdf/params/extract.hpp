#pragma once

#include "vsdf/geometry/marching_cubes.hpp"
#include "vsdf/geometry/mesh.hpp"
#include "vsdf/params/geom_params.hpp"

#include <Eigen/Core>

namespace vsdf {

struct Circle2 {
    Eigen::Vector2d center;
    double radius;
};

/// Circumcircle of three points in the x-y plane.
/// Throws DegenerateGeometry when the triangle area is <= 1e-12.
Circle2 fit_circle_3pts(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c);

/// Tolerances are fractions of the measured vehicle length, which keeps the
/// extractor invariant under uniform scaling.
struct ExtractionConfig {
    /// Half-width of the y band around the tire centre used for width.
    double y_band_epsilon = 0.01;
    /// Half-width of the x band around the longitudinal centre for the floor point.
    double center_band = 0.01;
    /// Tire points must lie this far below the floor point.
    double floor_tolerance = 0.002;
    /// Keep only the largest connected component before measuring.
    bool largest_component_only = false;

    /// Bands of one lattice cell for a mesh of roughly `length` model units.
    static ExtractionConfig for_grid(const GridSpec& grid, double length);
};

struct TireLandmark {
    Eigen::Vector2d center;
    double radius;
    Eigen::Vector3d support[3];  // the three fitted points
};

struct Extraction {
    GeomParams params;
    Point3 floor_point;
    TireLandmark front;
    TireLandmark rear;
    double length;  // model units
};

/// Measures the seven parameters of an upright vehicle mesh (x forward-to-back,
/// y up, wheels protruding below the floor).
///
/// Throws ExtractionFailure when no tire points exist below the floor, and
/// DegenerateGeometry when a tire arc is degenerate.
Extraction extract_params(const TriangleMesh& mesh, const ExtractionConfig& cfg = {});

/// Mesh restricted to its largest edge-connected component (by triangle count).
TriangleMesh largest_component(const TriangleMesh& mesh);

}  // namespace vsdf
