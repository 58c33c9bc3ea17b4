#include "vsdf/io/model_io.hpp"

#include <fmt/format.h>

#include <sstream>

namespace vsdf {

namespace {

std::uint64_t u(Eigen::Index v) { return static_cast<std::uint64_t>(v); }

void expect_shape(const std::vector<std::uint64_t>& shape, std::vector<std::uint64_t> want, const std::string& name) {
    if (shape != want) throw InvalidArgument(fmt::format("checkpoint: section '{}' has an unexpected shape", name));
}

Eigen::VectorXf get_vector(const Checkpoint& ck, const std::string& name, Eigen::Index n) {
    std::vector<std::uint64_t> shape;
    const auto v = ck.get_f32(name, &shape);
    expect_shape(shape, {u(n)}, name);
    return Eigen::Map<const Eigen::VectorXf>(v.data(), n);
}

}  // namespace

void put_mlp(Checkpoint& ck, const std::string& prefix, const nn::Mlp<float>& net) {
    const auto& a = net.architecture();
    std::vector<std::int32_t> arch = {a.input_dim, a.output_dim, a.skip_layer};
    arch.insert(arch.end(), a.hidden.begin(), a.hidden.end());
    ck.put_i32(prefix + "/arch", {arch.size()}, arch);
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        const auto& layer = net.layers()[l];
        ck.put_f32(fmt::format("{}/{}/weight", prefix, l), {u(layer.weight.rows()), u(layer.weight.cols())},
                   {layer.weight.data(), static_cast<std::size_t>(layer.weight.size())});
        ck.put_f32(fmt::format("{}/{}/bias", prefix, l), {u(layer.bias.size())},
                   {layer.bias.data(), static_cast<std::size_t>(layer.bias.size())});
    }
}

nn::Mlp<float> get_mlp(const Checkpoint& ck, const std::string& prefix) {
    const auto arch_v = ck.get_i32(prefix + "/arch");
    if (arch_v.size() < 3) throw InvalidArgument("checkpoint: malformed " + prefix + "/arch");
    nn::Architecture a;
    a.input_dim = arch_v[0];
    a.output_dim = arch_v[1];
    a.skip_layer = arch_v[2];
    a.hidden.assign(arch_v.begin() + 3, arch_v.end());
    nn::Mlp<float> net(a);
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        auto& layer = net.layers()[l];
        const std::string wn = fmt::format("{}/{}/weight", prefix, l);
        std::vector<std::uint64_t> shape;
        const auto w = ck.get_f32(wn, &shape);
        expect_shape(shape, {u(layer.weight.rows()), u(layer.weight.cols())}, wn);
        layer.weight = Eigen::Map<const Eigen::MatrixXf>(w.data(), layer.weight.rows(), layer.weight.cols());
        layer.bias = get_vector(ck, fmt::format("{}/{}/bias", prefix, l), layer.bias.size());
    }
    return net;
}

void put_decoder(Checkpoint& ck, const DecoderWeights<float>& w) { put_mlp(ck, "decoder", w.net); }

DecoderWeights<float> get_decoder(const Checkpoint& ck) {
    DecoderWeights<float> w{get_mlp(ck, "decoder"), 0};
    w.latent_dim = w.net.architecture().input_dim - 3;
    if (w.latent_dim <= 0 || w.net.architecture().output_dim != 1)
        throw InvalidArgument("checkpoint: decoder architecture is not a latent SDF network");
    return w;
}

void put_latents(Checkpoint& ck, const std::vector<std::string>& ids, const std::vector<LatentVector>& latents) {
    if (ids.size() != latents.size()) throw InvalidArgument("put_latents: ids and latents differ in length");
    const Eigen::Index m = latents.empty() ? 0 : latents.front().size();
    std::vector<float> flat;
    for (const auto& z : latents) {
        if (z.size() != m) throw InvalidArgument("put_latents: mixed latent dimensions");
        flat.insert(flat.end(), z.data(), z.data() + m);
    }
    ck.put_f32("latents", {latents.size(), u(m)}, flat);
    std::string joined;
    for (const auto& id : ids) {
        if (id.find('\n') != std::string::npos) throw InvalidArgument("put_latents: shape id contains a newline");
        joined += id + "\n";
    }
    ck.put_text("latent_ids", joined);
}

std::pair<std::vector<std::string>, std::vector<LatentVector>> get_latents(const Checkpoint& ck) {
    std::vector<std::uint64_t> shape;
    const auto flat = ck.get_f32("latents", &shape);
    if (shape.size() != 2) throw InvalidArgument("checkpoint: latents must be a matrix");
    std::vector<LatentVector> zs;
    for (std::uint64_t i = 0; i < shape[0]; ++i)
        zs.push_back(Eigen::Map<const Eigen::VectorXf>(flat.data() + i * shape[1], static_cast<Eigen::Index>(shape[1])));
    std::vector<std::string> ids;
    std::istringstream is(ck.get_text("latent_ids"));
    for (std::string line; std::getline(is, line);) ids.push_back(line);
    if (ids.size() != zs.size()) throw InvalidArgument("checkpoint: latent_ids and latents differ in length");
    return {ids, zs};
}

void put_estimator(Checkpoint& ck, const EstimatorWeights<float>& w) {
    put_mlp(ck, "estimator", w.net);
    ck.put_f32("estimator/in_shift", {u(w.in_shift.size())}, {w.in_shift.data(), static_cast<std::size_t>(w.in_shift.size())});
    ck.put_f32("estimator/in_scale", {u(w.in_scale.size())}, {w.in_scale.data(), static_cast<std::size_t>(w.in_scale.size())});
    ck.put_f32("estimator/out_shift", {u(w.out_shift.size())},
               {w.out_shift.data(), static_cast<std::size_t>(w.out_shift.size())});
    ck.put_f32("estimator/out_scale", {u(w.out_scale.size())},
               {w.out_scale.data(), static_cast<std::size_t>(w.out_scale.size())});
}

EstimatorWeights<float> get_estimator(const Checkpoint& ck) {
    EstimatorWeights<float> w(get_mlp(ck, "estimator"));
    if (w.net.architecture().output_dim != kNumParams)
        throw InvalidArgument("checkpoint: estimator must have 7 outputs");
    const int m = w.latent_dim();
    w.in_shift = get_vector(ck, "estimator/in_shift", m);
    w.in_scale = get_vector(ck, "estimator/in_scale", m);
    w.out_shift = get_vector(ck, "estimator/out_shift", kNumParams);
    w.out_scale = get_vector(ck, "estimator/out_scale", kNumParams);
    return w;
}

void put_latent_prior(Checkpoint& ck, const LatentPrior& p) {
    const auto m = u(p.mean.size());
    ck.put_f64("latent_prior/mean", {m}, {p.mean.data(), static_cast<std::size_t>(m)});
    ck.put_f64("latent_prior/factor", {m, m}, {p.factor.data(), static_cast<std::size_t>(p.factor.size())});
}

LatentPrior get_latent_prior(const Checkpoint& ck) {
    std::vector<std::uint64_t> ms, fs;
    const auto mean = ck.get_f64("latent_prior/mean", &ms);
    const auto factor = ck.get_f64("latent_prior/factor", &fs);
    if (ms.size() != 1 || fs != std::vector<std::uint64_t>{ms[0], ms[0]})
        throw InvalidArgument("checkpoint: latent prior arrays disagree in shape");
    const auto m = static_cast<Eigen::Index>(ms[0]);
    return {Eigen::Map<const Eigen::VectorXd>(mean.data(), m), Eigen::Map<const Eigen::MatrixXd>(factor.data(), m, m)};
}

void put_drag_model(Checkpoint& ck, const DragModel& m) {
    const int depth = m.trees.empty() ? 0 : m.trees.front().depth;
    const std::uint64_t t = m.trees.size(), internal = (1u << depth) - 1, leaves = 1u << depth;
    const std::vector<double> meta = {m.base, m.learning_rate};
    ck.put_f64("drag/meta", {2}, meta);
    const std::vector<std::int32_t> dims = {m.feature_count, depth};
    ck.put_i32("drag/dims", {2}, dims);
    std::vector<std::int32_t> feature;
    std::vector<double> threshold, leaf;
    for (const auto& tree : m.trees) {
        if (tree.depth != depth) throw InvalidArgument("put_drag_model: trees of mixed depth");
        feature.insert(feature.end(), tree.feature.begin(), tree.feature.end());
        threshold.insert(threshold.end(), tree.threshold.begin(), tree.threshold.end());
        leaf.insert(leaf.end(), tree.leaf.begin(), tree.leaf.end());
    }
    ck.put_i32("drag/feature", {t, internal}, feature);
    ck.put_f64("drag/threshold", {t, internal}, threshold);
    ck.put_f64("drag/leaf", {t, leaves}, leaf);
}

DragModel get_drag_model(const Checkpoint& ck) {
    DragModel m;
    const auto meta = ck.get_f64("drag/meta");
    const auto dims = ck.get_i32("drag/dims");
    if (meta.size() != 2 || dims.size() != 2 || dims[1] < 0 || dims[1] > 12)
        throw InvalidArgument("checkpoint: malformed drag model header");
    m.base = meta[0];
    m.learning_rate = meta[1];
    m.feature_count = dims[0];
    const int depth = dims[1];
    std::vector<std::uint64_t> fs, ts, ls;
    const auto feature = ck.get_i32("drag/feature", &fs);
    const auto threshold = ck.get_f64("drag/threshold", &ts);
    const auto leaf = ck.get_f64("drag/leaf", &ls);
    const std::uint64_t internal = (1u << depth) - 1, leaves = 1u << depth;
    if (fs.size() != 2 || fs[1] != internal || ts != fs || ls.size() != 2 || ls[0] != fs[0] || ls[1] != leaves)
        throw InvalidArgument("checkpoint: drag tree arrays disagree in shape");
    for (std::uint64_t t = 0; t < fs[0]; ++t) {
        RegressionTree tree;
        tree.depth = depth;
        tree.feature.assign(feature.begin() + t * internal, feature.begin() + (t + 1) * internal);
        tree.threshold.assign(threshold.begin() + t * internal, threshold.begin() + (t + 1) * internal);
        tree.leaf.assign(leaf.begin() + t * leaves, leaf.begin() + (t + 1) * leaves);
        for (int f : tree.feature)
            if (f < 0 || f >= m.feature_count) throw InvalidArgument("checkpoint: drag split feature out of range");
        m.trees.push_back(std::move(tree));
    }
    return m;
}

Checkpoint ModelBundle::to_checkpoint() const {
    Checkpoint ck;
    if (!config_json.empty()) ck.put_text("config", config_json);
    if (decoder) put_decoder(ck, *decoder);
    if (!latents.empty()) put_latents(ck, shape_ids, latents);
    if (estimator) put_estimator(ck, *estimator);
    if (prior) put_latent_prior(ck, *prior);
    if (drag) put_drag_model(ck, *drag);
    return ck;
}

ModelBundle ModelBundle::from_checkpoint(const Checkpoint& ck) {
    ModelBundle b;
    if (ck.has("config")) b.config_json = ck.get_text("config");
    if (ck.has("decoder/arch")) b.decoder = get_decoder(ck);
    if (ck.has("latents")) std::tie(b.shape_ids, b.latents) = get_latents(ck);
    if (ck.has("estimator/arch")) b.estimator = get_estimator(ck);
    if (ck.has("latent_prior/mean")) b.prior = get_latent_prior(ck);
    if (ck.has("drag/meta")) b.drag = get_drag_model(ck);
    return b;
}

}  // namespace vsdf
