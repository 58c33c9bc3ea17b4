#include "vsdf/geometry/sampling.hpp"

#include "vsdf/errors.hpp"
#include "vsdf/geometry/marching_cubes.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace vsdf {

SampleSet sample_shape(const ShapeField& field, int n, std::uint64_t seed, const SamplingMixture& mixture,
                       std::string shape_id) {
    if (n < 100) throw InvalidArgument(fmt::format("sample_shape: n = {} < 100", n));

    const GridSpec grid{mixture.surface_grid, 1.05 * field.bounding_radius()};
    const TriangleMesh surface = marching_cubes(field, grid).mesh;
    if (surface.empty()) throw InvalidArgument("sample_shape: field has no zero level set in its bounds");

    std::vector<double> cumulative(surface.triangles.size());
    double total = 0.0;
    double radius = 0.0;
    for (std::size_t t = 0; t < surface.triangles.size(); ++t) {
        total += triangle_area(surface, static_cast<int>(t));
        cumulative[t] = total;
    }
    for (const auto& v : surface.vertices) radius = std::max(radius, v.norm());

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    auto surface_point = [&]() -> Point3 {
        const double r = unit(rng) * total;
        const auto t = std::min<std::size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin(),
            cumulative.size() - 1);
        double a = unit(rng), b = unit(rng);
        if (a + b > 1.0) {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        const auto& tri = surface.triangles[t];
        const Point3& p0 = surface.vertices[tri[0]];
        return p0 + a * (surface.vertices[tri[1]] - p0) + b * (surface.vertices[tri[2]] - p0);
    };

    const int n_coarse = static_cast<int>(std::lround(mixture.coarse_fraction * n));
    const int n_fine = static_cast<int>(std::lround(mixture.fine_fraction * n));
    const int n_uniform = n - n_coarse - n_fine;
    if (n_uniform < 0) throw InvalidArgument("sample_shape: mixture fractions exceed 1");

    SampleSet set;
    set.shape_id = std::move(shape_id);
    set.samples.reserve(n);
    auto push = [&](const Point3& p) { set.samples.push_back({p, field(p)}); };
    for (int i = 0; i < n_coarse + n_fine; ++i) {
        const double sigma = (i < n_coarse ? mixture.coarse_sigma : mixture.fine_sigma) * radius;
        const Point3 s = surface_point();
        const double gx = gauss(rng), gy = gauss(rng), gz = gauss(rng);
        push(s + sigma * Point3(gx, gy, gz));
    }
    const double w = mixture.uniform_half_width;
    for (int i = 0; i < n_uniform; ++i) {
        const double x = unit(rng), y = unit(rng), z = unit(rng);
        push(Point3(x, y, z) * (2.0 * w) - Point3::Constant(w));
    }
    return set;
}

void write_samples_csv(std::ostream& os, const SampleSet& set) {
    os << "x,y,z,s\n";
    for (const auto& s : set.samples)
        os << fmt::format("{:.9g},{:.9g},{:.9g},{:.9g}\n", s.point.x(), s.point.y(), s.point.z(), s.value);
}

void write_samples_csv(const std::filesystem::path& path, const SampleSet& set) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    write_samples_csv(os, set);
}

SampleSet read_samples_csv(std::istream& is, std::string shape_id) {
    SampleSet set;
    set.shape_id = std::move(shape_id);
    std::string line;
    if (!std::getline(is, line) || line.rfind("x,y,z,s", 0) != 0)
        throw InvalidArgument("sample CSV: missing x,y,z,s header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        SdfSample s{};
        if (!(ls >> s.point.x() >> s.point.y() >> s.point.z() >> s.value))
            throw InvalidArgument("sample CSV: malformed row");
        set.samples.push_back(s);
    }
    return set;
}

}  // namespace vsdf
