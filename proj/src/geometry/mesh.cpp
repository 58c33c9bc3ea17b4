#include "vsdf/geometry/mesh.hpp"

#include "vsdf/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>

namespace vsdf {

void validate_indices(const TriangleMesh& mesh) {
    const int n = static_cast<int>(mesh.vertices.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
        for (int k = 0; k < 3; ++k) {
            const int i = mesh.triangles[t][k];
            if (i < 0 || i >= n)
                throw InvalidArgument(fmt::format("triangle {} references vertex {} of {}", t, i, n));
        }
}

WatertightReport watertight_check(const TriangleMesh& mesh) {
    validate_indices(mesh);
    // key (lo, hi) -> (uses in lo->hi direction, uses in hi->lo direction)
    std::map<std::pair<int, int>, std::array<int, 2>> uses;
    for (const auto& t : mesh.triangles)
        for (int k = 0; k < 3; ++k) {
            const int a = t[k], b = t[(k + 1) % 3];
            if (a < b)
                ++uses[{a, b}][0];
            else
                ++uses[{b, a}][1];
        }
    WatertightReport report;
    for (const auto& [edge, count] : uses)
        if (count[0] != 1 || count[1] != 1) report.violations.push_back({edge.first, edge.second});
    return report;
}

double triangle_area(const TriangleMesh& mesh, int tri) {
    const auto& t = mesh.triangles[tri];
    const Point3& a = mesh.vertices[t[0]];
    return 0.5 * (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a).norm();
}

Eigen::Vector3d face_normal(const TriangleMesh& mesh, int tri) {
    const auto& t = mesh.triangles[tri];
    const Point3& a = mesh.vertices[t[0]];
    return (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a).normalized();
}

double signed_volume(const TriangleMesh& mesh) {
    double v = 0.0;
    for (const auto& t : mesh.triangles)
        v += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]]));
    return v / 6.0;
}

AxisBox bounding_box(const TriangleMesh& mesh) {
    if (mesh.vertices.empty()) throw InvalidArgument("bounding_box: empty mesh");
    AxisBox b{mesh.vertices.front(), mesh.vertices.front()};
    for (const auto& v : mesh.vertices) {
        b.min = b.min.cwiseMin(v);
        b.max = b.max.cwiseMax(v);
    }
    return b;
}

std::pair<TriangleMesh, Normalization> normalize_to_unit_sphere(const TriangleMesh& mesh) {
    if (mesh.vertices.empty() || mesh.triangles.empty())
        throw InvalidArgument("normalize_to_unit_sphere: empty mesh");
    const Point3 center = bounding_box(mesh).center();
    double radius = 0.0;
    for (const auto& v : mesh.vertices) radius = std::max(radius, (v - center).norm());
    if (!(radius > 0.0)) throw InvalidArgument("normalize_to_unit_sphere: zero-extent mesh");

    Normalization t;
    const bool centred = center.norm() <= 1e-12;
    const bool inscribed = std::abs(radius - kNormalizationRadius) <= 1e-12;
    if (!(centred && inscribed)) {
        t.offset = -center;
        t.scale = kNormalizationRadius / radius;
    }
    return {transformed(mesh, t), t};
}

TriangleMesh transformed(const TriangleMesh& mesh, const Normalization& t) {
    TriangleMesh out = mesh;
    for (auto& v : out.vertices) v = t.apply(v);
    return out;
}

TriangleMesh scaled(const TriangleMesh& mesh, const Eigen::Vector3d& factors) {
    TriangleMesh out = mesh;
    for (auto& v : out.vertices) v = v.cwiseProduct(factors);
    if (factors.prod() < 0.0)
        for (auto& t : out.triangles) std::swap(t[1], t[2]);
    return out;
}

TriangleMesh translated(const TriangleMesh& mesh, const Eigen::Vector3d& offset) {
    TriangleMesh out = mesh;
    for (auto& v : out.vertices) v += offset;
    return out;
}

TriangleMesh mirrored_z(const TriangleMesh& mesh) { return scaled(mesh, {1.0, 1.0, -1.0}); }

TriangleMesh remove_degenerate(const TriangleMesh& mesh, double min_area) {
    TriangleMesh out;
    std::vector<int> remap(mesh.vertices.size(), -1);
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        const auto& t = mesh.triangles[i];
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
        if (triangle_area(mesh, static_cast<int>(i)) < min_area) continue;
        Eigen::Vector3i nt;
        for (int k = 0; k < 3; ++k) {
            int& r = remap[t[k]];
            if (r < 0) {
                r = static_cast<int>(out.vertices.size());
                out.vertices.push_back(mesh.vertices[t[k]]);
            }
            nt[k] = r;
        }
        out.triangles.push_back(nt);
    }
    return out;
}

TriangleMesh icosphere(double radius, int subdivisions, const Point3& center) {
    const double g = (1.0 + std::sqrt(5.0)) / 2.0;
    TriangleMesh m;
    m.vertices = {{-1, g, 0}, {1, g, 0}, {-1, -g, 0}, {1, -g, 0}, {0, -1, g}, {0, 1, g},
                  {0, -1, -g}, {0, 1, -g}, {g, 0, -1}, {g, 0, 1}, {-g, 0, -1}, {-g, 0, 1}};
    m.triangles = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                   {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
                   {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (auto& v : m.vertices) v.normalize();
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const int id = static_cast<int>(m.vertices.size());
            m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<Eigen::Vector3i> next;
        next.reserve(m.triangles.size() * 4);
        for (const auto& t : m.triangles) {
            const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
            next.emplace_back(t[0], ab, ca);
            next.emplace_back(t[1], bc, ab);
            next.emplace_back(t[2], ca, bc);
            next.emplace_back(ab, bc, ca);
        }
        m.triangles = std::move(next);
    }
    for (auto& v : m.vertices) v = center + radius * v;
    return m;
}

void write_obj(std::ostream& os, const TriangleMesh& mesh) {
    for (const auto& v : mesh.vertices) os << fmt::format("v {:.9g} {:.9g} {:.9g}\n", v.x(), v.y(), v.z());
    for (const auto& t : mesh.triangles) os << fmt::format("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1);
}

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    write_obj(os, mesh);
}

TriangleMesh read_obj(std::istream& is) {
    TriangleMesh mesh;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Point3 v;
            if (!(ls >> v.x() >> v.y() >> v.z()))
                throw InvalidArgument(fmt::format("OBJ line {}: malformed vertex", line_no));
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ls >> tok) idx.push_back(std::stoi(tok.substr(0, tok.find('/'))) - 1);
            if (idx.size() != 3)
                throw InvalidArgument(fmt::format("OBJ line {}: only triangles are supported", line_no));
            mesh.triangles.emplace_back(idx[0], idx[1], idx[2]);
        }
    }
    validate_indices(mesh);
    return mesh;
}

TriangleMesh read_obj(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot open " + path.string());
    return read_obj(is);
}

}  // namespace vsdf
