#pragma once

#include "vsdf/geometry/sdf.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace vsdf {

struct SdfSample {
    Point3 point;
    double value;  // signed distance, negative inside
};

struct SampleSet {
    std::string shape_id;
    std::vector<SdfSample> samples;

    std::size_t count() const { return samples.size(); }
};

/// Mixture weights and noise scales of the sampler. Defaults concentrate
/// supervision near the surface.
struct SamplingMixture {
    double coarse_fraction = 0.475;  // surface + N(0, (coarse_sigma * R)^2)
    double fine_fraction = 0.475;    // surface + N(0, (fine_sigma * R)^2)
    double coarse_sigma = 0.05;
    double fine_sigma = 0.005;
    double uniform_half_width = 1.1;  // remainder uniform in [-w, w]^3
    int surface_grid = 64;            // lattice used to locate surface points
};

/// Deterministic given (field, n, seed). Every sample value is field(point).
/// Throws InvalidArgument for n < 100 or a field without a surface.
SampleSet sample_shape(const ShapeField& field, int n, std::uint64_t seed,
                       const SamplingMixture& mixture = {}, std::string shape_id = {});

/// CSV `x,y,z,s` with 9 significant digits.
void write_samples_csv(std::ostream& os, const SampleSet& set);
void write_samples_csv(const std::filesystem::path& path, const SampleSet& set);
SampleSet read_samples_csv(std::istream& is, std::string shape_id = {});

}  // namespace vsdf
