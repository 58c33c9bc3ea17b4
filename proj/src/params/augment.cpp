#include "vsdf/params/augment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

namespace vsdf {

LatentVector interpolate_latents(const LatentVector& a, const LatentVector& b, double alpha) {
    if (a.size() != b.size())
        throw InvalidArgument(fmt::format("interpolate_latents: dimension mismatch {} vs {}", a.size(), b.size()));
    if (!std::isfinite(alpha)) throw InvalidArgument("interpolate_latents: alpha must be finite");
    if (alpha == 0.0) return a;
    if (alpha == 1.0) return b;
    const float t = static_cast<float>(alpha);
    return (1.0f - t) * a + t * b;
}

GeomParams decode_and_extract(const DecoderWeights<float>& weights, const LatentVector& z, const GridSpec& grid,
                              const ExtractionConfig& cfg) {
    const auto iso = decode_to_mesh(weights, z, grid);
    if (iso.mesh.empty()) throw ExtractionFailure("decoded latent has an empty zero level set");
    return extract_params(iso.mesh, cfg).params;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers; results land by index.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    for (unsigned t = 0; t < std::min<std::size_t>(threads, n); ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

std::optional<GeomParams> try_extract(const DecoderWeights<float>& weights, const LatentVector& z,
                                      const GridSpec& grid, const ExtractionConfig& cfg) {
    try {
        return decode_and_extract(weights, z, grid, cfg);
    } catch (const ExtractionFailure&) {
    } catch (const DegenerateGeometry&) {
    }
    return std::nullopt;
}

}  // namespace

std::vector<ParamRecord> augment_dataset(const std::vector<LatentVector>& latents,
                                         const DecoderWeights<float>& weights, std::size_t target_count,
                                         std::uint64_t seed, const GridSpec& grid, const ExtractionConfig& cfg,
                                         const AugmentOptions& options, AugmentStats* stats) {
    if (latents.size() < 2)
        throw InvalidArgument(fmt::format("augment_dataset: need at least 2 base latents, got {}", latents.size()));
    if (target_count < latents.size())
        throw InvalidArgument(fmt::format("augment_dataset: target {} is below the {} base latents", target_count,
                                          latents.size()));
    for (const auto& z : latents) check_latent(weights, z.size());
    grid.validate();
    const unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());

    AugmentStats local;
    AugmentStats& st = stats ? *stats : local;
    st = {};
    std::vector<ParamRecord> out;
    out.reserve(target_count);
    auto check_rate = [&] {
        if (st.attempts >= options.min_attempts &&
            static_cast<double>(st.attempts - st.failures) < options.min_success_rate * st.attempts)
            throw ExtractionFailure(fmt::format(
                "augment_dataset: only {} of {} decoded latents could be measured (floor {:.0f}%); "
                "the decoder or the extraction tolerances are off",
                st.attempts - st.failures, st.attempts, 100 * options.min_success_rate));
    };
    auto consume = [&](std::vector<LatentVector>& batch, std::vector<std::optional<GeomParams>>& found) {
        for (std::size_t i = 0; i < batch.size() && out.size() < target_count; ++i) {
            ++st.attempts;
            if (found[i])
                out.push_back({std::move(batch[i]), *found[i]});
            else
                ++st.failures;
        }
        if (options.progress) options.progress(out.size(), target_count);
        check_rate();
    };

    {
        std::vector<LatentVector> batch = latents;
        std::vector<std::optional<GeomParams>> found(batch.size());
        parallel_for(batch.size(), threads,
                     [&](std::size_t i) { found[i] = try_extract(weights, batch[i], grid, cfg); });
        consume(batch, found);
    }

    // Candidates are drawn in a fixed sequence and consumed in order, so the
    // result is independent of the thread count.
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, latents.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t chunk = std::max<std::size_t>(4 * threads, 16);
    while (out.size() < target_count) {
        std::vector<LatentVector> batch;
        while (batch.size() < chunk) {
            const std::size_t i = pick(rng);
            std::size_t j = pick(rng);
            while (j == i) j = pick(rng);
            double alpha = unit(rng);
            while (alpha == 0.0) alpha = unit(rng);
            batch.push_back(interpolate_latents(latents[i], latents[j], alpha));
        }
        std::vector<std::optional<GeomParams>> found(batch.size());
        parallel_for(batch.size(), threads,
                     [&](std::size_t i) { found[i] = try_extract(weights, batch[i], grid, cfg); });
        consume(batch, found);
    }
    return out;
}

Neighbor nearest_params(const std::vector<GeomParams>& entries, const GeomParams& query) {
    if (entries.empty()) throw InvalidArgument("nearest_params: no entries");
    Neighbor best{0, (entries[0] - query).norm()};
    for (std::size_t i = 1; i < entries.size(); ++i) {
        const double d = (entries[i] - query).norm();
        if (d < best.distance) best = {i, d};
    }
    return best;
}

std::vector<GeomParams> height_width_grid(const std::vector<GeomParams>& data, const GeomParams& base) {
    if (data.empty()) throw InvalidArgument("height_width_grid: no data");
    auto levels = [&](int k) {
        std::vector<double> v;
        for (const auto& p : data) v.push_back(p[k]);
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        const double median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
        return std::array<double, 3>{v.front(), median, v.back()};
    };
    const auto h = levels(1), w = levels(2);
    std::vector<GeomParams> grid;
    for (double hv : h)
        for (double wv : w) {
            GeomParams p = base;
            p[1] = hv;
            p[2] = wv;
            grid.push_back(p);
        }
    return grid;
}

}  // namespace vsdf
