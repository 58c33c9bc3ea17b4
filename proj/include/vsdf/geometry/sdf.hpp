#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <vector>

namespace vsdf {

/// Model-space point. x longitudinal (front at smaller x), y up, z lateral.
using Point3 = Eigen::Vector3d;

/// A queryable signed distance function, negative inside.
///
/// The point evaluator must be safe to call concurrently. A batch evaluator can
/// be supplied for fields that amortize work across points (learned decoders);
/// otherwise batches fall back to per-point evaluation.
class ShapeField {
public:
    using PointFn = std::function<double(const Point3&)>;
    using BatchFn = std::function<void(std::span<const Point3>, std::span<double>)>;

    ShapeField(PointFn eval, double bounding_radius, BatchFn batch = {});

    double operator()(const Point3& p) const { return eval_(p); }
    void eval_batch(std::span<const Point3> points, std::span<double> out) const;

    /// Radius of an origin-centred ball that contains the zero level set.
    double bounding_radius() const { return bounding_radius_; }

private:
    PointFn eval_;
    BatchFn batch_;
    double bounding_radius_;
};

enum class PrimitiveKind { Sphere, Box, RoundedBox, Cylinder };

/// Exact signed distance of an origin-centred primitive.
///
/// dims: Sphere {r}; Box {hx, hy, hz}; RoundedBox {hx, hy, hz, rounding};
/// Cylinder {radius, half_length} with its axis along z.
/// Throws InvalidArgument on a non-positive dimension or wrong arity.
double eval_primitive(PrimitiveKind kind, std::span<const double> dims, const Point3& p);

ShapeField sphere(double radius, const Point3& center = Point3::Zero());
ShapeField box(const Eigen::Vector3d& half_extents, const Point3& center = Point3::Zero());
ShapeField rounded_box(const Eigen::Vector3d& half_extents, double rounding,
                       const Point3& center = Point3::Zero());
/// Capped cylinder with axis along z.
ShapeField cylinder_z(double radius, double half_length, const Point3& center = Point3::Zero());

enum class CsgOp { Union, Intersection };

/// union = pointwise min, intersection = pointwise max.
ShapeField combine(CsgOp op, ShapeField a, ShapeField b);
ShapeField union_all(std::span<const ShapeField> fields);

/// p -> scale * f((p - offset) / scale): uniformly scale about the origin, then translate.
ShapeField similarity(ShapeField f, double scale, const Point3& offset);

}  // namespace vsdf
