#pragma once

// Stage glue shared by the CLI, the HTTP service and the acceptance run.

#include "vsdf/io/model_io.hpp"
#include "vsdf/params/augment.hpp"
#include "vsdf/toycar/toy_car.hpp"

#include <optional>
#include <string>

namespace vsdf {

/// Nominal length of a normalized toy car in model units, used to express
/// lattice-sized extraction bands as fractions of length.
inline constexpr double kNominalCarLength = 1.6;

inline ExtractionConfig extraction_for(const GridSpec& grid) {
    return ExtractionConfig::for_grid(grid, kNominalCarLength);
}

/// One sample set per manifest entry, drawn from the normalized field with the
/// entry's own seed, so the result does not depend on the order of entries.
std::vector<SampleSet> sample_corpus(const CorpusManifest& manifest, int samples_per_shape);

struct EstimatorStage {
    std::vector<ParamRecord> records;
    AugmentStats stats;
    TrainedEstimator estimator;
    LatentPrior prior;
};

/// Augments the training latents to `record_count` labelled records, fits the
/// estimator and the latent prior of the records.
EstimatorStage build_estimator(const DecoderWeights<float>& decoder, const std::vector<LatentVector>& latents,
                               std::size_t record_count, std::uint64_t seed, const GridSpec& grid,
                               const EstimatorTrainConfig& config, const AugmentOptions& options = {});

/// Lattice the estimator's labels were measured on, kept as "label_grid" in
/// the model's config_json. 0 when the model does not say.
int label_grid(const ModelBundle& model);
void set_label_grid(ModelBundle& model, int n);

struct DesignRun {
    std::uint64_t seed = 0;
    OptimizationResult optimization;
    TriangleMesh mesh;
    std::optional<GeomParams> extracted;  // empty when the decoded mesh cannot be measured
    std::string extract_error;
    int extract_grid = 0;                 // lattice the measurement was taken on
};

/// Optimizes a latent towards `target` (under the model's prior when it has
/// one) and decodes it on `grid`. The design is measured on the model's label
/// lattice, the function the estimator learned; finer lattices move the
/// three-point tire fit by more than the estimator's error. Falls back to
/// `grid` when the model has no label lattice. Needs decoder and estimator.
DesignRun run_design(const ModelBundle& model, const GeomParams& target, std::uint64_t init_seed,
                     const LatentOptimConfig& config, const GridSpec& grid, const TraceCallback& on_row = {});

/// `iter,p0..p6,mse` with 9 significant digits.
void write_trace_csv(std::ostream& os, const OptimizationTrace& trace);

}  // namespace vsdf
