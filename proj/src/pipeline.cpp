#include "vsdf/pipeline.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <ostream>

namespace vsdf {

std::vector<SampleSet> sample_corpus(const CorpusManifest& manifest, int samples_per_shape) {
    std::vector<SampleSet> out;
    out.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries)
        out.push_back(sample_shape(normalized_field(make_toy_car(e.spec)), samples_per_shape, e.seed, {}, e.shape_id));
    return out;
}

EstimatorStage build_estimator(const DecoderWeights<float>& decoder, const std::vector<LatentVector>& latents,
                               std::size_t record_count, std::uint64_t seed, const GridSpec& grid,
                               const EstimatorTrainConfig& config, const AugmentOptions& options) {
    EstimatorStage s;
    s.records = augment_dataset(latents, decoder, record_count, seed, grid, extraction_for(grid), options, &s.stats);
    s.estimator = train_estimator(s.records, config);
    std::vector<LatentVector> codes;
    codes.reserve(s.records.size());
    for (const auto& r : s.records) codes.push_back(r.latent);
    s.prior = fit_latent_prior(codes);
    return s;
}

int label_grid(const ModelBundle& model) {
    if (model.config_json.empty()) return 0;
    const auto j = nlohmann::json::parse(model.config_json, nullptr, false);
    if (!j.is_object() || !j.contains("label_grid") || !j["label_grid"].is_number_integer()) return 0;
    return j["label_grid"].get<int>();
}

void set_label_grid(ModelBundle& model, int n) {
    auto j = model.config_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(model.config_json, nullptr, false);
    if (!j.is_object()) j = nlohmann::json::object();
    j["label_grid"] = n;
    model.config_json = j.dump();
}

DesignRun run_design(const ModelBundle& model, const GeomParams& target, std::uint64_t init_seed,
                     const LatentOptimConfig& config, const GridSpec& grid, const TraceCallback& on_row) {
    if (!model.decoder || !model.estimator) throw InvalidArgument("run_design: model needs a decoder and an estimator");
    DesignRun run;
    run.seed = init_seed;
    run.optimization = model.prior ? optimize_latent_with_prior(*model.estimator, *model.prior, target, init_seed, config, on_row)
                                   : optimize_latent_to_target(*model.estimator, target, init_seed, config, on_row);
    run.mesh = decode_to_mesh(*model.decoder, run.optimization.latent, grid).mesh;
    const int n = label_grid(model);
    const GridSpec measure = n > 0 ? GridSpec{n, grid.bound} : grid;
    run.extract_grid = measure.resolution;
    try {
        const TriangleMesh m = measure.resolution == grid.resolution
                                   ? run.mesh
                                   : decode_to_mesh(*model.decoder, run.optimization.latent, measure).mesh;
        if (m.empty()) throw ExtractionFailure("decoded latent has an empty zero level set");
        run.extracted = extract_params(m, extraction_for(measure)).params;
    } catch (const ExtractionFailure& e) {
        run.extract_error = e.what();
    } catch (const DegenerateGeometry& e) {
        run.extract_error = e.what();
    }
    return run;
}

void write_trace_csv(std::ostream& os, const OptimizationTrace& trace) {
    os << "iter";
    for (int k = 0; k < kNumParams; ++k) os << ",p" << k;
    os << ",mse\n";
    for (const auto& r : trace.rows) {
        os << r.iteration;
        for (int k = 0; k < kNumParams; ++k) os << fmt::format(",{:.9g}", r.params[k]);
        os << fmt::format(",{:.9g}\n", r.mse);
    }
}

}  // namespace vsdf
