#include "vsdf/geometry/marching_cubes.hpp"

#include "vsdf/errors.hpp"
#include "vsdf/geometry/mc_tables.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace vsdf {

void GridSpec::validate() const {
    if (resolution < 8) throw InvalidArgument("GridSpec: resolution must be >= 8");
    if (!(bound > 0.0)) throw InvalidArgument("GridSpec: bound must be positive");
}

namespace {

// Lattice values, evaluated exactly near the surface and filled by sign
// elsewhere.
class Lattice {
public:
    Lattice(const ShapeField& field, const GridSpec& grid, const MarchingCubesOptions& opt)
        : n_(grid.resolution), grid_(grid), values_(static_cast<std::size_t>(n_) * n_ * n_, 0.0),
          exact_(values_.size(), 0) {
        int block = 1;
        while (block * 2 <= std::max(1, opt.block)) block *= 2;
        if (block == 1) {
            std::vector<std::int64_t> all(values_.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int64_t>(i);
            evaluate(field, all);
            return;
        }

        // Blocks are refined by halving until they are single cells; a block
        // whose corners all share a sign and sit farther than slack * diagonal
        // from the surface is never refined.
        std::vector<Block> active;
        for (int i = 0; i < n_ - 1; i += block)
            for (int j = 0; j < n_ - 1; j += block)
                for (int k = 0; k < n_ - 1; k += block)
                    active.push_back({{i, j, k}, {std::min(i + block, n_ - 1), std::min(j + block, n_ - 1),
                                                  std::min(k + block, n_ - 1)}});
        std::vector<Block> far_blocks;
        std::vector<std::int64_t> todo;
        while (!active.empty()) {
            todo.clear();
            for (const auto& bl : active)
                for (int c = 0; c < 8; ++c) {
                    const auto id = index(c & 1 ? bl.hi[0] : bl.lo[0], c & 2 ? bl.hi[1] : bl.lo[1],
                                          c & 4 ? bl.hi[2] : bl.lo[2]);
                    if (!exact_[id]) {
                        exact_[id] = 1;
                        todo.push_back(id);
                    }
                }
            std::sort(todo.begin(), todo.end());
            evaluate(field, todo);

            std::vector<Block> next;
            for (const auto& bl : active) {
                const int di = bl.hi[0] - bl.lo[0], dj = bl.hi[1] - bl.lo[1], dk = bl.hi[2] - bl.lo[2];
                const double diag = grid.cell_size() * std::sqrt(double(di * di + dj * dj + dk * dk));
                bool far = true;
                int sign = 0;
                for (int c = 0; c < 8; ++c) {
                    const double v = values_[index(c & 1 ? bl.hi[0] : bl.lo[0], c & 2 ? bl.hi[1] : bl.lo[1],
                                                   c & 4 ? bl.hi[2] : bl.lo[2])];
                    const int sg = v < 0.0 ? -1 : 1;
                    if (sign == 0) sign = sg;
                    if (sg != sign || std::abs(v) <= opt.band_slack * diag) far = false;
                }
                if (far) {
                    far_blocks.push_back(bl);
                    continue;
                }
                if (di <= 1 && dj <= 1 && dk <= 1) continue;
                const int mi = di > 1 ? bl.lo[0] + di / 2 : bl.hi[0];
                const int mj = dj > 1 ? bl.lo[1] + dj / 2 : bl.hi[1];
                const int mk = dk > 1 ? bl.lo[2] + dk / 2 : bl.hi[2];
                for (int c = 0; c < 8; ++c) {
                    Block ch{bl.lo, bl.hi};
                    if (c & 1) { if (mi == bl.hi[0]) continue; ch.lo[0] = mi; } else ch.hi[0] = mi;
                    if (c & 2) { if (mj == bl.hi[1]) continue; ch.lo[1] = mj; } else ch.hi[1] = mj;
                    if (c & 4) { if (mk == bl.hi[2]) continue; ch.lo[2] = mk; } else ch.hi[2] = mk;
                    next.push_back(ch);
                }
            }
            active = std::move(next);
        }

        // Far blocks only need the sign, which is uniform across the block.
        for (const auto& fb : far_blocks) {
            const double fill = values_[index(fb.lo[0], fb.lo[1], fb.lo[2])];
            for (int i = fb.lo[0]; i <= fb.hi[0]; ++i)
                for (int j = fb.lo[1]; j <= fb.hi[1]; ++j)
                    for (int k = fb.lo[2]; k <= fb.hi[2]; ++k) {
                        const auto id = index(i, j, k);
                        if (!exact_[id]) values_[id] = fill;
                    }
        }
    }

    std::int64_t index(int i, int j, int k) const {
        return (static_cast<std::int64_t>(i) * n_ + j) * n_ + k;
    }
    double operator()(int i, int j, int k) const { return values_[index(i, j, k)]; }
    Point3 point(int i, int j, int k) const { return {grid_.coord(i), grid_.coord(j), grid_.coord(k)}; }

private:
    void evaluate(const ShapeField& field, const std::vector<std::int64_t>& ids) {
        constexpr std::size_t kChunk = 8192;
        std::vector<Point3> pts;
        std::vector<double> out;
        for (std::size_t start = 0; start < ids.size(); start += kChunk) {
            const std::size_t end = std::min(ids.size(), start + kChunk);
            pts.resize(end - start);
            out.resize(end - start);
            for (std::size_t q = start; q < end; ++q) {
                const auto id = ids[q];
                const int k = static_cast<int>(id % n_);
                const int j = static_cast<int>((id / n_) % n_);
                const int i = static_cast<int>(id / (static_cast<std::int64_t>(n_) * n_));
                pts[q - start] = point(i, j, k);
            }
            field.eval_batch(pts, out);
            for (std::size_t q = start; q < end; ++q) values_[ids[q]] = out[q - start];
        }
    }

    struct Block {
        std::array<int, 3> lo;
        std::array<int, 3> hi;
    };

    int n_;
    GridSpec grid_;
    std::vector<double> values_;
    std::vector<char> exact_;
};

constexpr double kSnap = 1e-7;

}  // namespace

Isosurface marching_cubes(const ShapeField& field, const GridSpec& grid, const MarchingCubesOptions& options) {
    grid.validate();
    const int n = grid.resolution;
    const Lattice lat(field, grid, options);

    Isosurface result;
    for (int i = 0; i < n && !result.touches_boundary; ++i)
        for (int j = 0; j < n && !result.touches_boundary; ++j) {
            const bool side = i == 0 || j == 0 || i == n - 1 || j == n - 1;
            for (int k = 0; k < n; k += side ? 1 : n - 1)
                if (lat(i, j, k) < 0.0) {
                    result.touches_boundary = true;
                    break;
                }
        }

    // Vertex keys: 3 * lattice id + axis for edge crossings; negative ids for
    // crossings snapped onto a lattice point.
    std::unordered_map<std::int64_t, int> vertex_of;
    TriangleMesh& mesh = result.mesh;

    auto edge_vertex = [&](int i, int j, int k, int axis) {
        int i1 = i, j1 = j, k1 = k;
        (axis == 0 ? i1 : axis == 1 ? j1 : k1) += 1;
        const double v0 = lat(i, j, k), v1 = lat(i1, j1, k1);
        double t = v0 / (v0 - v1);
        std::int64_t key = 3 * lat.index(i, j, k) + axis;
        if (t < kSnap) {
            t = 0.0;
            key = -1 - lat.index(i, j, k);
        } else if (t > 1.0 - kSnap) {
            t = 1.0;
            key = -1 - lat.index(i1, j1, k1);
        }
        auto [it, inserted] = vertex_of.try_emplace(key, static_cast<int>(mesh.vertices.size()));
        if (inserted) {
            const Point3 p0 = lat.point(i, j, k), p1 = lat.point(i1, j1, k1);
            mesh.vertices.push_back(p0 + t * (p1 - p0));
        }
        return it->second;
    };

    std::array<int, 12> edge_ids{};
    for (int i = 0; i + 1 < n; ++i)
        for (int j = 0; j + 1 < n; ++j)
            for (int k = 0; k + 1 < n; ++k) {
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    const auto& o = detail::kCornerOffset[c];
                    if (lat(i + o[0], j + o[1], k + o[2]) < 0.0) cube |= 1 << c;
                }
                const auto edges = detail::kEdgeTable[cube];
                if (edges == 0) continue;
                for (int e = 0; e < 12; ++e) {
                    if (!(edges & (1 << e))) continue;
                    const auto& o = detail::kCornerOffset[detail::kEdgeCorners[e][0]];
                    const auto& p = detail::kCornerOffset[detail::kEdgeCorners[e][1]];
                    // Each cell edge is an axis-aligned lattice edge starting at its lower corner.
                    int axis = 0;
                    while (o[axis] == p[axis]) ++axis;
                    const auto& lo = o[axis] < p[axis] ? o : p;
                    edge_ids[e] = edge_vertex(i + lo[0], j + lo[1], k + lo[2], axis);
                }
                const auto& tri = detail::kTriTable[cube];
                for (int t = 0; tri[t] != -1; t += 3)
                    mesh.triangles.emplace_back(edge_ids[tri[t]], edge_ids[tri[t + 2]], edge_ids[tri[t + 1]]);
            }

    mesh = remove_degenerate(mesh, 1e-12);
    return result;
}

}  // namespace vsdf
