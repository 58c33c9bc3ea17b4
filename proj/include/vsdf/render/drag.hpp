#pragma once

#include "vsdf/render/render.hpp"
#include "vsdf/toycar/toy_car.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace vsdf {

inline constexpr int kFeatureCells = 8;
inline constexpr int kFeatureSize = 6 * kFeatureCells * kFeatureCells * 3 + 6 + 2;  // 1160

using FeatureVector = Eigen::VectorXd;

/// Per view (atlas order): 8x8 cell means of the quantized view-frame normals
/// (background counts as 0), then the six silhouette occupancies, then the
/// side height/length and front width/side length ratios of the silhouettes.
///
/// The vector is averaged with its image under the z-mirror (left/right tiles
/// swapped, columns reversed, u-component negated), so a car and its mirror
/// image have identical features.
FeatureVector drag_features(const NormalAtlas& atlas);

/// Feature vector of the z-mirrored shape, computed from the unsymmetrized
/// layout; exposed for testing the symmetry.
FeatureVector mirror_features(const FeatureVector& f);

struct OracleTerms {
    double front_occupancy;  // front silhouette pixels / tile pixels
    double rear_taper;       // rear-quarter side silhouette area / (0.25 * side bounding-box area)
    double cd;
};

/// Cd = 0.10 + 0.50 front_occupancy + 0.30 (1 - rear_taper), measured on
/// 128-pixel front and side renders. Throws InvalidArgument for an empty silhouette.
OracleTerms synthetic_cd_terms(const TriangleMesh& mesh, int resolution = 128);
double synthetic_cd_oracle(const TriangleMesh& mesh, int resolution = 128);

struct RegressionTree {
    int depth = 0;
    // Complete binary tree in heap order: internal node i has children 2i+1, 2i+2.
    std::vector<int> feature;        // 2^depth - 1 entries
    std::vector<double> threshold;   // go left when x[feature] <= threshold
    std::vector<double> leaf;        // 2^depth entries

    double predict(const FeatureVector& x) const;
};

struct DragModel {
    double base = 0.0;
    double learning_rate = 0.1;
    int feature_count = kFeatureSize;
    std::vector<RegressionTree> trees;

    double predict(const FeatureVector& x) const;
};

struct BoostConfig {
    int trees = 200;
    int depth = 3;
    double learning_rate = 0.1;
    int min_leaf = 1;

    void validate() const;
};

struct DragRecord {
    FeatureVector features;
    double cd;
};

struct DragMetrics {
    double mse = 0.0;
    double r2 = 0.0;
    std::size_t count = 0;
};

struct DragReport {
    DragMetrics train, validation, test;
    std::vector<double> train_loss;  // after each tree (index 0 = base only)
};

struct TrainedDrag {
    DragModel model;
    DragReport report;
};

DragMetrics evaluate_drag(const DragModel& model, const std::vector<DragRecord>& data);

/// Least-squares gradient boosting: base = mean label, each tree fits the
/// residuals with exhaustive splits (ties: lowest feature, then lowest
/// threshold) and leaf means. Throws InvalidArgument for constant labels.
DragModel fit_boosted_trees(const std::vector<DragRecord>& train, const BoostConfig& config,
                            std::vector<double>* train_loss = nullptr);

/// Deterministic 0.7 / 0.15 / 0.15 split (shuffled with seed), then fit on the
/// training part. Needs at least 50 records.
TrainedDrag train_drag_model(const std::vector<DragRecord>& data, const BoostConfig& config = {},
                             std::uint64_t seed = 1);

/// drag_features(build_atlas(mesh)) through the ensemble.
double predict_cd(const DragModel& model, const TriangleMesh& mesh);

/// Toy-car mesh in the normalized frame (marching cubes of the analytic field).
TriangleMesh toy_car_mesh(const ToyCar& car, int resolution = 96);

/// Width-increment and front/back flip variants: for every spec the original,
/// one with width (and cabin width) scaled by width_factor, and the x-flipped
/// meshes of both.
std::vector<TriangleMesh> drag_augment(const ToyCarSpec& spec, double width_factor = 1.1, int resolution = 96);

}  // namespace vsdf
