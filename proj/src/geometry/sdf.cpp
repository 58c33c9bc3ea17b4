#include "vsdf/geometry/sdf.hpp"

#include "vsdf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace vsdf {

ShapeField::ShapeField(PointFn eval, double bounding_radius, BatchFn batch)
    : eval_(std::move(eval)), batch_(std::move(batch)), bounding_radius_(bounding_radius) {
    if (!eval_) throw InvalidArgument("ShapeField: empty evaluator");
    if (!(bounding_radius > 0.0)) throw InvalidArgument("ShapeField: bounding radius must be positive");
}

void ShapeField::eval_batch(std::span<const Point3> points, std::span<double> out) const {
    if (points.size() != out.size()) throw InvalidArgument("ShapeField::eval_batch: size mismatch");
    if (batch_) {
        batch_(points, out);
        return;
    }
    for (std::size_t i = 0; i < points.size(); ++i) out[i] = eval_(points[i]);
}

namespace {

void require_positive(std::span<const double> dims, std::size_t arity, const char* what) {
    if (dims.size() != arity)
        throw InvalidArgument(std::string(what) + ": expected " + std::to_string(arity) + " dimensions");
    for (double d : dims)
        if (!(d > 0.0)) throw InvalidArgument(std::string(what) + ": dimensions must be positive");
}

double box_distance(const Point3& p, const Eigen::Vector3d& half) {
    const Eigen::Vector3d q = p.cwiseAbs() - half;
    return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

double cylinder_distance(const Point3& p, double radius, double half_length) {
    const double dr = std::hypot(p.x(), p.y()) - radius;
    const double dz = std::abs(p.z()) - half_length;
    const double outside = std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
    return outside + std::min(std::max(dr, dz), 0.0);
}

}  // namespace

double eval_primitive(PrimitiveKind kind, std::span<const double> dims, const Point3& p) {
    switch (kind) {
        case PrimitiveKind::Sphere:
            require_positive(dims, 1, "sphere");
            return p.norm() - dims[0];
        case PrimitiveKind::Box:
            require_positive(dims, 3, "box");
            return box_distance(p, Eigen::Vector3d(dims[0], dims[1], dims[2]));
        case PrimitiveKind::RoundedBox: {
            require_positive(dims, 4, "rounded_box");
            const double r = dims[3];
            const Eigen::Vector3d half(dims[0], dims[1], dims[2]);
            if (r > half.minCoeff()) throw InvalidArgument("rounded_box: rounding exceeds a half extent");
            return box_distance(p, half.array() - r) - r;
        }
        case PrimitiveKind::Cylinder:
            require_positive(dims, 2, "cylinder");
            return cylinder_distance(p, dims[0], dims[1]);
    }
    throw InvalidArgument("eval_primitive: unknown kind");
}

ShapeField sphere(double radius, const Point3& center) {
    const double dims[] = {radius};
    (void)eval_primitive(PrimitiveKind::Sphere, dims, Point3::Zero());
    return ShapeField([=](const Point3& p) { return (p - center).norm() - radius; },
                      center.norm() + radius);
}

ShapeField box(const Eigen::Vector3d& half_extents, const Point3& center) {
    const double dims[] = {half_extents.x(), half_extents.y(), half_extents.z()};
    (void)eval_primitive(PrimitiveKind::Box, dims, Point3::Zero());
    return ShapeField([=](const Point3& p) { return box_distance(p - center, half_extents); },
                      center.norm() + half_extents.norm());
}

ShapeField rounded_box(const Eigen::Vector3d& half_extents, double rounding, const Point3& center) {
    const double dims[] = {half_extents.x(), half_extents.y(), half_extents.z(), rounding};
    (void)eval_primitive(PrimitiveKind::RoundedBox, dims, Point3::Zero());
    const Eigen::Vector3d inner = half_extents.array() - rounding;
    return ShapeField(
        [=](const Point3& p) { return box_distance(p - center, inner) - rounding; },
        center.norm() + half_extents.norm());
}

ShapeField cylinder_z(double radius, double half_length, const Point3& center) {
    const double dims[] = {radius, half_length};
    (void)eval_primitive(PrimitiveKind::Cylinder, dims, Point3::Zero());
    return ShapeField(
        [=](const Point3& p) { return cylinder_distance(p - center, radius, half_length); },
        center.norm() + std::hypot(radius, half_length));
}

ShapeField combine(CsgOp op, ShapeField a, ShapeField b) {
    const double radius = op == CsgOp::Union ? std::max(a.bounding_radius(), b.bounding_radius())
                                             : std::min(a.bounding_radius(), b.bounding_radius());
    if (op == CsgOp::Union)
        return ShapeField([a, b](const Point3& p) { return std::min(a(p), b(p)); }, radius);
    return ShapeField([a, b](const Point3& p) { return std::max(a(p), b(p)); }, radius);
}

ShapeField union_all(std::span<const ShapeField> fields) {
    if (fields.empty()) throw InvalidArgument("union_all: no fields");
    std::vector<ShapeField> parts(fields.begin(), fields.end());
    double radius = 0.0;
    for (const auto& f : parts) radius = std::max(radius, f.bounding_radius());
    return ShapeField(
        [parts = std::move(parts)](const Point3& p) {
            double d = parts.front()(p);
            for (std::size_t i = 1; i < parts.size(); ++i) d = std::min(d, parts[i](p));
            return d;
        },
        radius);
}

ShapeField similarity(ShapeField f, double scale, const Point3& offset) {
    if (!(scale > 0.0)) throw InvalidArgument("similarity: scale must be positive");
    const double radius = scale * f.bounding_radius() + offset.norm();
    return ShapeField([f = std::move(f), scale, offset](const Point3& p) {
        return scale * f((p - offset) / scale);
    }, radius);
}

}  // namespace vsdf
