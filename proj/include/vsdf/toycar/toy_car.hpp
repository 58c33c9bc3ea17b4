#pragma once

#include "vsdf/geometry/mesh.hpp"
#include "vsdf/geometry/sdf.hpp"
#include "vsdf/params/geom_params.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace vsdf {

/// Construction inputs of a procedural car, in model units with the ground at
/// y = 0 and the front bumper at x = 0.
struct ToyCarSpec {
    double body_length = 1.0;
    double body_height = 0.15;
    double body_width = 0.43;
    double cabin_length = 0.45;
    double cabin_height = 0.093;
    double cabin_setback = 0.3;
    double cabin_width = 0.36;
    double wheel_radius = 0.077;
    double wheelbase = 0.6;
    double front_overhang = 0.2;
    double rear_overhang = 0.2;
    double ground_clearance = 0.037;

    double total_height() const { return ground_clearance + body_height + cabin_height; }
    /// Edge rounding of body and cabin.
    double rounding() const { return 0.02 * body_length; }
    /// Lateral gap between wheel caps and the body side.
    double wheel_inset() const { return 0.02 * body_length; }
};

/// Throws InvalidArgument naming the first violated field.
void validate(const ToyCarSpec& spec);

/// Exact normalized parameters of a valid spec.
GeomParams true_params(const ToyCarSpec& spec);

/// Spec whose true_params equal `params`, with the remaining shape choices
/// (wheel radius, cabin) set from the auxiliary fractions.
struct CabinStyle {
    double wheel_margin = 0.04;        // wheel_radius - ground_clearance, in lengths
    double cabin_height_frac = 0.4;    // of (height - clearance)
    double cabin_length = 0.45;        // in lengths
    double cabin_setback = 0.3;        // in lengths
    double cabin_width_frac = 0.85;    // of body width
};
ToyCarSpec spec_from_params(const GeomParams& params, const CabinStyle& style = {}, double body_length = 1.0);

struct ToyCar {
    ShapeField field;  // pre-normalization model units
    GeomParams params;
    AxisBox bounds;
};

/// Rounded-box body and cabin plus two z-axis wheel cylinders.
ToyCar make_toy_car(const ToyCarSpec& spec);

/// The car's field scaled into the unit sphere: bounding box centred on the
/// origin, half-diagonal kNormalizationRadius.
ShapeField normalized_field(const ToyCar& car);
double normalization_scale(const ToyCar& car);

struct Interval {
    double lo;
    double hi;
};

/// Uniform sampling ranges. Parameter ranges are in normalized units.
struct CorpusRanges {
    Interval height{0.27, 0.35};
    Interval width{0.355, 0.445};
    Interval ground_clearance{0.034, 0.066};
    Interval wheelbase{0.56, 0.64};
    Interval front_overhang{0.162, 0.218};
    Interval wheel_margin{0.03, 0.05};
    Interval cabin_height_frac{0.35, 0.45};
    Interval cabin_length{0.35, 0.5};
    Interval cabin_setback{0.25, 0.4};
    Interval cabin_width_frac{0.75, 0.9};
};

struct ManifestEntry {
    std::string shape_id;
    ToyCarSpec spec;
    GeomParams true_params;
    std::uint64_t seed;
};

struct CorpusManifest {
    std::string generator_version;
    std::vector<ManifestEntry> entries;
};

inline constexpr const char* kToyCarGeneratorVersion = "toycar-1";

/// Deterministic given seed. Throws InvalidArgument for n < 2 or an empty range.
CorpusManifest generate_corpus(int n, std::uint64_t seed, const CorpusRanges& ranges = {});

/// JSON Lines: a header record, then one record per shape.
void write_manifest(std::ostream& os, const CorpusManifest& manifest);
void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);
CorpusManifest read_manifest(std::istream& is);
CorpusManifest read_manifest(const std::filesystem::path& path);

}  // namespace vsdf
