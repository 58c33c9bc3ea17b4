#pragma once

#include <Eigen/Core>

#include <array>
#include <string_view>

namespace vsdf {

/// (length, height, width, ground clearance, wheelbase, front overhang,
/// rear overhang), divided by length so p0 = 1.
using GeomParams = Eigen::Matrix<double, 7, 1>;

inline constexpr int kNumParams = 7;

inline constexpr std::array<std::string_view, kNumParams> kParamNames = {
    "length", "height", "width", "ground_clearance", "wheelbase", "front_overhang", "rear_overhang"};

/// The target row used throughout the examples and acceptance runs.
inline GeomParams reference_target() {
    GeomParams p;
    p << 1.000, 0.280, 0.430, 0.037, 0.600, 0.200, 0.200;
    return p;
}

template <typename DerivedA, typename DerivedB>
double params_mse(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

}  // namespace vsdf
