#include "vsdf/render/drag.hpp"

#include "vsdf/errors.hpp"
#include "vsdf/geometry/marching_cubes.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace vsdf {

namespace {

constexpr int kCellBlock = kFeatureCells * kFeatureCells * 3;
constexpr int kOccupancyAt = 6 * kCellBlock;
constexpr int kAspectAt = kOccupancyAt + 6;

int view_slot(View v) {
    for (std::size_t i = 0; i < kAtlasViews.size(); ++i)
        if (kAtlasViews[i] == v) return static_cast<int>(i);
    return view_slot(View::Right);  // Side
}

// Slot of each view under the z-mirror: left and right trade places.
constexpr std::array<int, 6> kMirrorSlot = {0, 1, 3, 2, 4, 5};

struct Silhouette {
    int count = 0;
    int x0 = std::numeric_limits<int>::max(), x1 = -1;
    int y0 = std::numeric_limits<int>::max(), y1 = -1;
    int width() const { return count ? x1 - x0 + 1 : 0; }
    int height() const { return count ? y1 - y0 + 1 : 0; }
};

FeatureVector raw_features(const NormalAtlas& atlas) {
    const int n = atlas.tile;
    if (n % kFeatureCells != 0)
        throw InvalidArgument(fmt::format("drag_features: tile size {} is not a multiple of {}", n, kFeatureCells));
    const int cell = n / kFeatureCells;
    const Image8& img = atlas.composite;
    FeatureVector f = FeatureVector::Zero(kFeatureSize);
    std::array<Silhouette, 6> sil;
    for (int slot = 0; slot < 6; ++slot) {
        const auto [col, row] = atlas_tile(kAtlasViews[slot]);
        std::array<long, kCellBlock> sums{};
        Silhouette& s = sil[slot];
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const int gx = col * n + x, gy = row * n + y;
                const std::uint8_t r = img.at(gx, gy, 0), g = img.at(gx, gy, 1), b = img.at(gx, gy, 2);
                if (r == 0 && g == 0 && b == 0) continue;
                const int base = ((y / cell) * kFeatureCells + x / cell) * 3;
                sums[base] += r - 128;
                sums[base + 1] += g - 128;
                sums[base + 2] += b - 128;
                ++s.count;
                s.x0 = std::min(s.x0, x);
                s.x1 = std::max(s.x1, x);
                s.y0 = std::min(s.y0, y);
                s.y1 = std::max(s.y1, y);
            }
        const double denom = 127.0 * cell * cell;
        for (int k = 0; k < kCellBlock; ++k) f[slot * kCellBlock + k] = static_cast<double>(sums[k]) / denom;
        f[kOccupancyAt + slot] = static_cast<double>(s.count) / (static_cast<double>(n) * n);
    }
    const Silhouette &left = sil[view_slot(View::Left)], &right = sil[view_slot(View::Right)];
    const Silhouette& front = sil[view_slot(View::Front)];
    const double side_len = 0.5 * (left.width() + right.width());
    const double side_h = 0.5 * (left.height() + right.height());
    if (side_len > 0) {
        f[kAspectAt] = side_h / side_len;
        f[kAspectAt + 1] = front.width() / side_len;
    }
    return f;
}

}  // namespace

FeatureVector mirror_features(const FeatureVector& f) {
    if (f.size() != kFeatureSize) throw InvalidArgument("mirror_features: wrong feature length");
    FeatureVector m(kFeatureSize);
    for (int slot = 0; slot < 6; ++slot)
        for (int r = 0; r < kFeatureCells; ++r)
            for (int c = 0; c < kFeatureCells; ++c)
                for (int ch = 0; ch < 3; ++ch) {
                    const double v = f[slot * kCellBlock + (r * kFeatureCells + c) * 3 + ch];
                    const int dst = kMirrorSlot[slot] * kCellBlock + (r * kFeatureCells + (kFeatureCells - 1 - c)) * 3 + ch;
                    m[dst] = ch == 0 ? -v : v;
                }
    for (int slot = 0; slot < 6; ++slot) m[kOccupancyAt + kMirrorSlot[slot]] = f[kOccupancyAt + slot];
    m[kAspectAt] = f[kAspectAt];
    m[kAspectAt + 1] = f[kAspectAt + 1];
    return m;
}

FeatureVector drag_features(const NormalAtlas& atlas) {
    const FeatureVector f = raw_features(atlas);
    return 0.5 * (f + mirror_features(f));
}

OracleTerms synthetic_cd_terms(const TriangleMesh& mesh, int resolution) {
    const ViewImage front = render_view(mesh, View::Front, resolution, RenderChannel::Depth);
    const ViewImage side = render_view(mesh, View::Side, resolution, RenderChannel::Depth);
    const std::size_t front_px = front.foreground_count();
    if (front_px == 0 || side.foreground_count() == 0)
        throw InvalidArgument("synthetic_cd_oracle: empty silhouette");
    const int n = resolution;
    std::vector<int> column(n, 0);
    int x0 = n, x1 = -1, y0 = n, y1 = -1;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            if (side.foreground(x, y)) {
                ++column[x];
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    // In the side view u = +x, so the rear of the car is on the right.
    const double len = x1 - x0 + 1, rows = y1 - y0 + 1;
    const double start = x1 + 1 - 0.25 * len;
    double rear = 0.0;
    for (int x = x0; x <= x1; ++x) {
        const double overlap = std::clamp(x + 1 - start, 0.0, 1.0);
        rear += overlap * column[x];
    }
    OracleTerms t;
    t.front_occupancy = static_cast<double>(front_px) / (static_cast<double>(n) * n);
    t.rear_taper = rear / (0.25 * len * rows);
    t.cd = 0.10 + 0.50 * t.front_occupancy + 0.30 * (1.0 - t.rear_taper);
    return t;
}

double synthetic_cd_oracle(const TriangleMesh& mesh, int resolution) { return synthetic_cd_terms(mesh, resolution).cd; }

double RegressionTree::predict(const FeatureVector& x) const {
    std::size_t node = 0;
    for (int d = 0; d < depth; ++d) node = x[feature[node]] <= threshold[node] ? 2 * node + 1 : 2 * node + 2;
    return leaf[node - (feature.size())];
}

double DragModel::predict(const FeatureVector& x) const {
    if (x.size() != feature_count)
        throw InvalidArgument(fmt::format("DragModel: expected {} features, got {}", feature_count, x.size()));
    double y = base;
    for (const auto& t : trees) y += learning_rate * t.predict(x);
    return y;
}

void BoostConfig::validate() const {
    if (trees < 0 || depth < 0 || depth > 12 || min_leaf < 1 || !(learning_rate > 0))
        throw InvalidArgument("BoostConfig: need trees >= 0, 0 <= depth <= 12, min_leaf >= 1, learning_rate > 0");
}

DragMetrics evaluate_drag(const DragModel& model, const std::vector<DragRecord>& data) {
    DragMetrics m;
    m.count = data.size();
    if (data.empty()) return m;
    double mean = 0.0;
    for (const auto& r : data) mean += r.cd;
    mean /= static_cast<double>(data.size());
    double sse = 0.0, sst = 0.0;
    for (const auto& r : data) {
        const double e = model.predict(r.features) - r.cd;
        sse += e * e;
        sst += (r.cd - mean) * (r.cd - mean);
    }
    m.mse = sse / static_cast<double>(data.size());
    m.r2 = sst > 0 ? 1.0 - sse / sst : (sse == 0 ? 1.0 : 0.0);
    return m;
}

DragModel fit_boosted_trees(const std::vector<DragRecord>& train, const BoostConfig& config,
                            std::vector<double>* train_loss) {
    config.validate();
    if (train.empty()) throw InvalidArgument("fit_boosted_trees: no training records");
    const int nf = static_cast<int>(train.front().features.size());
    for (const auto& r : train)
        if (r.features.size() != nf || !r.features.allFinite() || !std::isfinite(r.cd))
            throw InvalidArgument("fit_boosted_trees: inconsistent or non-finite record");
    const auto [lo, hi] = std::minmax_element(train.begin(), train.end(),
                                              [](const DragRecord& a, const DragRecord& b) { return a.cd < b.cd; });
    if (lo->cd == hi->cd) throw InvalidArgument("fit_boosted_trees: constant labels, nothing to regress");

    const int n = static_cast<int>(train.size());
    DragModel model;
    model.learning_rate = config.learning_rate;
    model.feature_count = nf;
    for (const auto& r : train) model.base += r.cd;
    model.base /= n;

    // Sample order per feature (stable, so equal values keep record order).
    std::vector<std::vector<int>> sorted(nf, std::vector<int>(n));
    for (int f = 0; f < nf; ++f) {
        auto& s = sorted[f];
        std::iota(s.begin(), s.end(), 0);
        std::stable_sort(s.begin(), s.end(),
                         [&](int a, int b) { return train[a].features[f] < train[b].features[f]; });
    }

    std::vector<double> pred(n, model.base), resid(n);
    auto loss = [&] {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += (train[i].cd - pred[i]) * (train[i].cd - pred[i]);
        return s / n;
    };
    if (train_loss) train_loss->assign(1, loss());

    std::vector<int> node(n);
    for (int t = 0; t < config.trees; ++t) {
        for (int i = 0; i < n; ++i) resid[i] = train[i].cd - pred[i];
        RegressionTree tree;
        tree.depth = config.depth;
        const int internal = (1 << config.depth) - 1;
        tree.feature.assign(internal, 0);
        tree.threshold.assign(internal, std::numeric_limits<double>::infinity());
        std::fill(node.begin(), node.end(), 0);
        // Mean residual of every node, used as the value of empty descendants.
        std::vector<double> node_mean(2 * internal + 1, 0.0);
        {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += resid[i];
            node_mean[0] = s / n;
        }
        for (int d = 0; d < config.depth; ++d) {
            const int first = (1 << d) - 1, width = 1 << d;
            std::vector<double> total(width, 0.0);
            std::vector<int> count(width, 0);
            for (int i = 0; i < n; ++i) {
                total[node[i] - first] += resid[i];
                ++count[node[i] - first];
            }
            std::vector<double> best_gain(width, 0.0);
            std::vector<int> best_feature(width, -1);
            std::vector<double> best_threshold(width, std::numeric_limits<double>::infinity());
            std::vector<double> left_sum(width);
            std::vector<int> left_count(width);
            std::vector<double> prev_value(width);
            for (int f = 0; f < nf; ++f) {
                std::fill(left_sum.begin(), left_sum.end(), 0.0);
                std::fill(left_count.begin(), left_count.end(), 0);
                std::fill(prev_value.begin(), prev_value.end(), -std::numeric_limits<double>::infinity());
                for (int i : sorted[f]) {
                    const int k = node[i] - first;
                    const double v = train[i].features[f];
                    const int nl = left_count[k], nr = count[k] - nl;
                    if (nl >= config.min_leaf && nr >= config.min_leaf && v > prev_value[k]) {
                        const double sl = left_sum[k], sr = total[k] - sl;
                        const double gain = sl * sl / nl + sr * sr / nr - total[k] * total[k] / count[k];
                        if (gain > best_gain[k] + 1e-15) {
                            best_gain[k] = gain;
                            best_feature[k] = f;
                            best_threshold[k] = 0.5 * (prev_value[k] + v);
                        }
                    }
                    left_sum[k] += resid[i];
                    ++left_count[k];
                    prev_value[k] = v;
                }
            }
            for (int k = 0; k < width; ++k) {
                if (best_feature[k] >= 0) {
                    tree.feature[first + k] = best_feature[k];
                    tree.threshold[first + k] = best_threshold[k];
                }
            }
            std::vector<double> child_sum(2 * width, 0.0);
            std::vector<int> child_count(2 * width, 0);
            for (int i = 0; i < n; ++i) {
                const int id = node[i];
                const int child = train[i].features[tree.feature[id]] <= tree.threshold[id] ? 2 * id + 1 : 2 * id + 2;
                node[i] = child;
                child_sum[child - (2 * first + 1)] += resid[i];
                ++child_count[child - (2 * first + 1)];
            }
            for (int c = 0; c < 2 * width; ++c) {
                const int id = 2 * first + 1 + c;
                node_mean[id] = child_count[c] ? child_sum[c] / child_count[c] : node_mean[(id - 1) / 2];
            }
        }
        tree.leaf.assign(node_mean.begin() + internal, node_mean.end());
        for (int i = 0; i < n; ++i) pred[i] += config.learning_rate * tree.leaf[node[i] - internal];
        model.trees.push_back(std::move(tree));
        if (train_loss) train_loss->push_back(loss());
    }
    return model;
}

TrainedDrag train_drag_model(const std::vector<DragRecord>& data, const BoostConfig& config, std::uint64_t seed) {
    if (data.size() < 50)
        throw InvalidArgument(fmt::format("train_drag_model: need at least 50 records, got {}", data.size()));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(0.70 * data.size()));
    const auto n_val = static_cast<std::size_t>(std::llround(0.15 * data.size()));
    std::vector<DragRecord> train, val, test;
    for (std::size_t k = 0; k < order.size(); ++k)
        (k < n_train ? train : k < n_train + n_val ? val : test).push_back(data[order[k]]);
    TrainedDrag out;
    out.model = fit_boosted_trees(train, config, &out.report.train_loss);
    out.report.train = evaluate_drag(out.model, train);
    out.report.validation = evaluate_drag(out.model, val);
    out.report.test = evaluate_drag(out.model, test);
    return out;
}

double predict_cd(const DragModel& model, const TriangleMesh& mesh) {
    return model.predict(drag_features(build_atlas(mesh)));
}

TriangleMesh toy_car_mesh(const ToyCar& car, int resolution) {
    return marching_cubes(normalized_field(car), GridSpec{resolution, 1.0}).mesh;
}

std::vector<TriangleMesh> drag_augment(const ToyCarSpec& spec, double width_factor, int resolution) {
    if (!(width_factor > 0)) throw InvalidArgument("drag_augment: width factor must be positive");
    ToyCarSpec wide = spec;
    wide.body_width *= width_factor;
    wide.cabin_width *= width_factor;
    std::vector<TriangleMesh> out;
    for (const ToyCarSpec& s : {spec, wide}) {
        TriangleMesh m = toy_car_mesh(make_toy_car(s), resolution);
        TriangleMesh flipped = scaled(m, {-1.0, 1.0, 1.0});
        out.push_back(std::move(m));
        out.push_back(std::move(flipped));
    }
    return out;
}

}  // namespace vsdf
