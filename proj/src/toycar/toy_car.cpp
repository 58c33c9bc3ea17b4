#include "vsdf/toycar/toy_car.hpp"

#include "vsdf/errors.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <set>

namespace vsdf {

namespace {

void require(bool ok, const char* field, const std::string& why) {
    if (!ok) throw InvalidArgument(fmt::format("ToyCarSpec.{}: {}", field, why));
}

}  // namespace

void validate(const ToyCarSpec& s) {
    const double L = s.body_length;
    require(L > 0, "body_length", "must be positive");
    require(s.body_height > 2 * s.rounding(), "body_height", "must exceed twice the edge rounding");
    require(s.body_width > 2 * s.rounding(), "body_width", "must exceed twice the edge rounding");
    require(s.cabin_length > 2 * s.rounding(), "cabin_length", "must exceed twice the edge rounding");
    require(s.cabin_height > s.rounding(), "cabin_height", "must exceed the edge rounding");
    require(s.cabin_width > 2 * s.rounding() && s.cabin_width <= s.body_width, "cabin_width",
            "must fit within the body width");
    require(s.cabin_setback >= 0 && s.cabin_setback + s.cabin_length <= L, "cabin_setback",
            "cabin must fit within the body footprint");
    require(s.wheelbase > 0, "wheelbase", "must be positive");
    require(s.front_overhang > 0, "front_overhang", "must be positive");
    require(s.rear_overhang > 0, "rear_overhang", "must be positive");
    require(std::abs(s.wheelbase + s.front_overhang + s.rear_overhang - L) <= 1e-9 * L, "wheelbase",
            "wheelbase + front_overhang + rear_overhang must equal body_length");
    require(s.ground_clearance > 0, "ground_clearance", "must be positive");
    require(s.wheel_radius > 0.1 * s.ground_clearance, "wheel_radius", "must exceed 0.1 * ground_clearance");
    require(s.wheel_radius > s.ground_clearance, "wheel_radius", "wheels must protrude below the body floor");
    require(s.wheel_radius < s.ground_clearance + s.body_height, "wheel_radius",
            "tire centre must lie within the body height");
    require(s.wheel_radius < std::min(s.front_overhang, s.rear_overhang), "wheel_radius",
            "wheels must stay within the body length");
    require(s.front_overhang + s.wheel_radius < 0.5 * L && s.front_overhang + s.wheelbase - s.wheel_radius > 0.5 * L,
            "wheelbase", "the longitudinal centre must lie between the wheels");
    require(2 * s.wheel_radius < s.total_height(), "wheel_radius", "wheels must not reach the roof line");
    require(s.body_width > 2 * s.wheel_inset(), "body_width", "wheels need a positive track");
}

GeomParams true_params(const ToyCarSpec& s) {
    validate(s);
    const double L = s.body_length;
    GeomParams p;
    p << 1.0, s.total_height() / L, s.body_width / L, s.ground_clearance / L, s.wheelbase / L,
        s.front_overhang / L, s.rear_overhang / L;
    return p;
}

ToyCarSpec spec_from_params(const GeomParams& p, const CabinStyle& style, double L) {
    ToyCarSpec s;
    s.body_length = L;
    s.ground_clearance = p[3] * L;
    const double height = p[1] * L;
    s.cabin_height = style.cabin_height_frac * (height - s.ground_clearance);
    s.body_height = height - s.ground_clearance - s.cabin_height;
    s.body_width = p[2] * L;
    s.cabin_width = style.cabin_width_frac * s.body_width;
    s.cabin_length = style.cabin_length * L;
    s.cabin_setback = style.cabin_setback * L;
    s.wheel_radius = s.ground_clearance + style.wheel_margin * L;
    s.wheelbase = p[4] * L;
    s.front_overhang = p[5] * L;
    s.rear_overhang = L - s.wheelbase - s.front_overhang;
    return s;
}

ToyCar make_toy_car(const ToyCarSpec& s) {
    const GeomParams params = true_params(s);
    const double L = s.body_length;
    const double r = s.rounding();
    const double floor_y = s.ground_clearance;
    const double roof_y = s.total_height();
    const double body_top = floor_y + s.body_height;

    std::vector<ShapeField> parts;
    parts.push_back(rounded_box({0.5 * L, 0.5 * s.body_height, 0.5 * s.body_width}, r,
                                {0.5 * L, floor_y + 0.5 * s.body_height, 0.0}));
    // The cabin sinks one rounding radius into the body so the two fuse.
    const double cabin_bottom = body_top - r;
    parts.push_back(rounded_box({0.5 * s.cabin_length, 0.5 * (roof_y - cabin_bottom), 0.5 * s.cabin_width}, r,
                                {s.cabin_setback + 0.5 * s.cabin_length, 0.5 * (roof_y + cabin_bottom), 0.0}));
    const double axle_half = 0.5 * s.body_width - s.wheel_inset();
    parts.push_back(cylinder_z(s.wheel_radius, axle_half, {s.front_overhang, s.wheel_radius, 0.0}));
    parts.push_back(cylinder_z(s.wheel_radius, axle_half, {s.front_overhang + s.wheelbase, s.wheel_radius, 0.0}));

    AxisBox bounds{{0.0, 0.0, -0.5 * s.body_width}, {L, roof_y, 0.5 * s.body_width}};
    return {union_all(parts), params, bounds};
}

double normalization_scale(const ToyCar& car) {
    return kNormalizationRadius / (0.5 * car.bounds.extent().norm());
}

ShapeField normalized_field(const ToyCar& car) {
    const double scale = normalization_scale(car);
    // The bounding box maps into the kNormalizationRadius ball; similarity()
    // alone would only know a looser radius.
    auto f = similarity(car.field, scale, -scale * car.bounds.center());
    return ShapeField([f](const Point3& p) { return f(p); }, kNormalizationRadius);
}

namespace {

double draw(std::mt19937_64& rng, const Interval& iv) {
    return std::uniform_real_distribution<double>(iv.lo, iv.hi)(rng);
}

void check_range(const Interval& iv, const char* name) {
    if (!(iv.lo < iv.hi)) throw InvalidArgument(fmt::format("generate_corpus: empty range for {}", name));
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

CorpusManifest generate_corpus(int n, std::uint64_t seed, const CorpusRanges& ranges) {
    if (n < 2) throw InvalidArgument(fmt::format("generate_corpus: n = {} < 2", n));
    check_range(ranges.height, "height");
    check_range(ranges.width, "width");
    check_range(ranges.ground_clearance, "ground_clearance");
    check_range(ranges.wheelbase, "wheelbase");
    check_range(ranges.front_overhang, "front_overhang");
    check_range(ranges.wheel_margin, "wheel_margin");
    check_range(ranges.cabin_height_frac, "cabin_height_frac");
    check_range(ranges.cabin_length, "cabin_length");
    check_range(ranges.cabin_setback, "cabin_setback");
    check_range(ranges.cabin_width_frac, "cabin_width_frac");

    CorpusManifest manifest;
    manifest.generator_version = kToyCarGeneratorVersion;
    std::mt19937_64 rng(seed);
    int attempts = 0;
    while (static_cast<int>(manifest.entries.size()) < n) {
        if (++attempts > 1000 * n) throw InvalidArgument("generate_corpus: ranges admit no valid cars");
        GeomParams p;
        p[0] = 1.0;
        p[1] = draw(rng, ranges.height);
        p[2] = draw(rng, ranges.width);
        p[3] = draw(rng, ranges.ground_clearance);
        p[4] = draw(rng, ranges.wheelbase);
        p[5] = draw(rng, ranges.front_overhang);
        p[6] = 1.0 - p[4] - p[5];
        CabinStyle style;
        style.wheel_margin = draw(rng, ranges.wheel_margin);
        style.cabin_height_frac = draw(rng, ranges.cabin_height_frac);
        style.cabin_length = draw(rng, ranges.cabin_length);
        style.cabin_setback = draw(rng, ranges.cabin_setback);
        style.cabin_width_frac = draw(rng, ranges.cabin_width_frac);
        const ToyCarSpec spec = spec_from_params(p, style);
        try {
            validate(spec);
        } catch (const InvalidArgument&) {
            continue;
        }
        const auto index = manifest.entries.size();
        manifest.entries.push_back({fmt::format("car_{:04d}", index), spec, true_params(spec),
                                    splitmix64(seed * 0x100000001b3ULL + index)});
    }
    return manifest;
}

namespace {

nlohmann::json spec_to_json(const ToyCarSpec& s) {
    return {{"body_length", s.body_length},     {"body_height", s.body_height},
            {"body_width", s.body_width},       {"cabin_length", s.cabin_length},
            {"cabin_height", s.cabin_height},   {"cabin_setback", s.cabin_setback},
            {"cabin_width", s.cabin_width},     {"wheel_radius", s.wheel_radius},
            {"wheelbase", s.wheelbase},         {"front_overhang", s.front_overhang},
            {"rear_overhang", s.rear_overhang}, {"ground_clearance", s.ground_clearance}};
}

ToyCarSpec spec_from_json(const nlohmann::json& j) {
    ToyCarSpec s;
    s.body_length = j.at("body_length");
    s.body_height = j.at("body_height");
    s.body_width = j.at("body_width");
    s.cabin_length = j.at("cabin_length");
    s.cabin_height = j.at("cabin_height");
    s.cabin_setback = j.at("cabin_setback");
    s.cabin_width = j.at("cabin_width");
    s.wheel_radius = j.at("wheel_radius");
    s.wheelbase = j.at("wheelbase");
    s.front_overhang = j.at("front_overhang");
    s.rear_overhang = j.at("rear_overhang");
    s.ground_clearance = j.at("ground_clearance");
    return s;
}

}  // namespace

void write_manifest(std::ostream& os, const CorpusManifest& m) {
    os << nlohmann::json{{"generator_version", m.generator_version}, {"count", m.entries.size()}}.dump() << '\n';
    for (const auto& e : m.entries) {
        nlohmann::json j;
        j["shape_id"] = e.shape_id;
        j["seed"] = e.seed;
        j["spec"] = spec_to_json(e.spec);
        j["true_params"] = std::vector<double>(e.true_params.data(), e.true_params.data() + kNumParams);
        os << j.dump() << '\n';
    }
}

void write_manifest(const std::filesystem::path& path, const CorpusManifest& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    write_manifest(os, m);
}

CorpusManifest read_manifest(std::istream& is) {
    CorpusManifest m;
    std::string line;
    if (!std::getline(is, line)) throw InvalidArgument("manifest: empty file");
    const auto header = nlohmann::json::parse(line);
    m.generator_version = header.at("generator_version");
    const std::size_t count = header.at("count");
    std::set<std::string> ids;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        ManifestEntry e;
        e.shape_id = j.at("shape_id");
        e.seed = j.at("seed");
        e.spec = spec_from_json(j.at("spec"));
        const auto p = j.at("true_params").get<std::vector<double>>();
        if (p.size() != kNumParams) throw InvalidArgument("manifest: true_params must have 7 entries");
        for (int i = 0; i < kNumParams; ++i) e.true_params[i] = p[i];
        if (!ids.insert(e.shape_id).second) throw InvalidArgument("manifest: duplicate shape_id " + e.shape_id);
        m.entries.push_back(std::move(e));
    }
    if (m.entries.size() != count) throw InvalidArgument("manifest: record count does not match header");
    return m;
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot open " + path.string());
    return read_manifest(is);
}

}  // namespace vsdf
