#pragma once

#include "vsdf/geometry/mesh.hpp"
#include "vsdf/geometry/sdf.hpp"

namespace vsdf {

/// Evaluation lattice: N points per axis spanning the cube [-bound, bound]^3.
struct GridSpec {
    int resolution = 64;
    double bound = 1.0;

    double cell_size() const { return 2.0 * bound / (resolution - 1); }
    double coord(int i) const { return -bound + i * cell_size(); }
    void validate() const;
};

struct Isosurface {
    TriangleMesh mesh;
    /// Set when inside-valued lattice points lie on the grid boundary, i.e. the
    /// level set is clipped and the mesh may be open there.
    bool touches_boundary = false;
};

struct MarchingCubesOptions {
    /// Coarsest block edge (in cells, rounded down to a power of two) of the
    /// hierarchical narrow-band evaluation; 1 = dense.
    int block = 16;
    /// A block is not refined when every corner has the same sign and
    /// |value| > slack * block diagonal.
    /// 1.0 is exact for 1-Lipschitz fields; learned fields use more headroom.
    double band_slack = 1.0;
};

/// Extracts the zero level set by linear interpolation along lattice edges.
/// Vertices are shared between adjacent cells; degenerate triangles are removed.
Isosurface marching_cubes(const ShapeField& field, const GridSpec& grid,
                          const MarchingCubesOptions& options = {});

}  // namespace vsdf
