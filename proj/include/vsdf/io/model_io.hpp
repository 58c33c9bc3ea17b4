#pragma once

#include "vsdf/autodecoder/autodecoder.hpp"
#include "vsdf/io/checkpoint.hpp"
#include "vsdf/params/estimator.hpp"
#include "vsdf/render/drag.hpp"

#include <optional>
#include <string>
#include <vector>

namespace vsdf {

// Networks are stored as `<prefix>/arch` (i32: input, output, skip, hidden
// widths...) and `<prefix>/<l>/weight` (shape out x in, column-major) and
// `<prefix>/<l>/bias`.
void put_mlp(Checkpoint& ck, const std::string& prefix, const nn::Mlp<float>& net);
nn::Mlp<float> get_mlp(const Checkpoint& ck, const std::string& prefix);

void put_decoder(Checkpoint& ck, const DecoderWeights<float>& w);
DecoderWeights<float> get_decoder(const Checkpoint& ck);

/// `latents` (n x m, one row per shape) and `latent_ids` (newline separated).
void put_latents(Checkpoint& ck, const std::vector<std::string>& ids, const std::vector<LatentVector>& latents);
std::pair<std::vector<std::string>, std::vector<LatentVector>> get_latents(const Checkpoint& ck);

void put_estimator(Checkpoint& ck, const EstimatorWeights<float>& w);
EstimatorWeights<float> get_estimator(const Checkpoint& ck);

/// `latent_prior/mean` (m) and `latent_prior/factor` (m x m), double precision.
void put_latent_prior(Checkpoint& ck, const LatentPrior& p);
LatentPrior get_latent_prior(const Checkpoint& ck);

/// Thresholds and leaves are kept in double precision so a reloaded model
/// makes exactly the same split decisions.
void put_drag_model(Checkpoint& ck, const DragModel& m);
DragModel get_drag_model(const Checkpoint& ck);

/// Everything a pipeline stage may have produced; absent parts stay empty.
struct ModelBundle {
    std::optional<DecoderWeights<float>> decoder;
    std::vector<std::string> shape_ids;
    std::vector<LatentVector> latents;
    std::optional<EstimatorWeights<float>> estimator;
    std::optional<LatentPrior> prior;  // fitted to the estimator's training latents
    std::optional<DragModel> drag;
    std::string config_json;  // free-form provenance, stored as text

    Checkpoint to_checkpoint() const;
    static ModelBundle from_checkpoint(const Checkpoint& ck);
};

}  // namespace vsdf
