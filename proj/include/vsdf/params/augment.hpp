#pragma once

#include "vsdf/autodecoder/autodecoder.hpp"
#include "vsdf/params/estimator.hpp"
#include "vsdf/params/extract.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace vsdf {

/// (1 - alpha) a + alpha b.
LatentVector interpolate_latents(const LatentVector& a, const LatentVector& b, double alpha);

struct AugmentStats {
    std::size_t attempts = 0;
    std::size_t failures = 0;
};

struct AugmentOptions {
    /// Abort once at least min_attempts decodes ran and fewer than
    /// min_success_rate of them extracted.
    double min_success_rate = 0.5;
    std::size_t min_attempts = 20;
    /// Worker threads (0 = hardware concurrency). Results do not depend on it.
    unsigned threads = 0;
    std::function<void(std::size_t done, std::size_t target)> progress;
};

/// Records for the estimator: the base latents first (labelled by extracting
/// their decoded meshes), then interpolations between random base pairs with
/// alpha ~ U(0, 1), until target_count records exist.
///
/// Base latents whose mesh fails to extract are skipped. When target_count
/// equals the number of base latents the base latents are returned as given.
/// Throws InvalidArgument for fewer than two latents or target_count below the
/// base count, ExtractionFailure when the success rate drops below the floor.
std::vector<ParamRecord> augment_dataset(const std::vector<LatentVector>& latents,
                                         const DecoderWeights<float>& weights, std::size_t target_count,
                                         std::uint64_t seed, const GridSpec& grid, const ExtractionConfig& cfg,
                                         const AugmentOptions& options = {}, AugmentStats* stats = nullptr);

/// Decodes and measures one latent.
GeomParams decode_and_extract(const DecoderWeights<float>& weights, const LatentVector& z, const GridSpec& grid,
                              const ExtractionConfig& cfg);

struct Neighbor {
    std::size_t index;
    double distance;
};

/// Entry closest to `query` in Euclidean parameter distance (ties: lowest index).
Neighbor nearest_params(const std::vector<GeomParams>& entries, const GeomParams& query);

/// The 3x3 height x width target grid at the minimum, median and maximum of
/// each of the two parameters over `data`; other components take the base
/// target's values. Row-major over height.
std::vector<GeomParams> height_width_grid(const std::vector<GeomParams>& data, const GeomParams& base);

}  // namespace vsdf
