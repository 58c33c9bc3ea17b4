// End-to-end acceptance run: one PASS/FAIL line per criterion, details indented.
//
//   acceptance [--only 1,4,6] [--cli path/to/vsdf] [--work dir]
//
// Exit status is the number of failed criteria (capped at 100).

#include "support/gradcheck.hpp"
#include "vsdf/pipeline.hpp"
#include "vsdf/render/drag.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace vsdf;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename... Args>
void detail(fmt::format_string<Args...> f, Args&&... args) {
    fmt::print("    {}\n", fmt::format(f, std::forward<Args>(args)...));
    std::fflush(stdout);
}

// Verdicts are collected and printed in criterion order once everything ran;
// details stream as they are produced.
std::map<int, std::string> verdicts;
int failures = 0;

void verdict(int id, bool ok, const std::string& summary) {
    verdicts[id] = fmt::format("{} C{} {}", ok ? "PASS" : "FAIL", id, summary);
    detail("-> C{} {}", id, ok ? "pass" : "fail");
    failures += !ok;
}


// ---------------------------------------------------------------- C1 - C3

constexpr double kEstimatorMseTol = 1e-4;
constexpr double kReextractMseTol = 1e-3;
constexpr double kRuntimeBudget = 30 * 60;

void criteria_1_to_3(const std::set<int>& only) {
    const auto t0 = Clock::now();
    const auto manifest = generate_corpus(64, 1);
    const auto corpus = sample_corpus(manifest, 5000);
    detail("corpus: {} shapes x 5000 samples ({:.1f}s)", corpus.size(), seconds_since(t0));

    SdfTrainConfig sc;
    sc.epochs = 30;
    sc.lr_decay_every = 10;
    const auto sdf = train_deepsdf(corpus, sc);
    detail("decoder: final data loss {:.3e} ({:.1f}s)", sdf.report.data_loss.back(), sdf.report.wall_seconds);

    const GridSpec grid64{64, 1.0};
    AugmentStats stats;
    const auto t_aug = Clock::now();
    const auto records =
        augment_dataset(sdf.latents, sdf.weights, 2000, 1, grid64, extraction_for(grid64), {}, &stats);
    detail("augment: {} records, {} of {} decodes failed to extract ({:.1f}s)", records.size(), stats.failures,
           stats.attempts, seconds_since(t_aug));

    // One held-out set (the last 20% of the 2000 records) for every volume, so
    // the curve measures the training volume only.
    const std::size_t n_test = records.size() / 5;
    const std::vector<ParamRecord> test(records.end() - static_cast<std::ptrdiff_t>(n_test), records.end());
    const std::size_t volumes[] = {200, 500, 1000, 2000};
    std::vector<double> curve;
    TrainedEstimator full;
    for (std::size_t n : volumes) {
        const std::vector<ParamRecord> train(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n - n / 5));
        auto est = train_estimator(train, test, EstimatorTrainConfig{});
        detail("estimator n={:4}: train mse {:.3e}, test mse {:.3e}, test R2 {:.3f}", n, est.report.train.mse,
               est.report.test.mse, est.report.test.r2);
        curve.push_back(est.report.test.mse);
        if (n == 2000) full = std::move(est);
    }

    std::vector<LatentVector> codes;
    for (const auto& r : records) codes.push_back(r.latent);
    ModelBundle model;
    model.decoder = sdf.weights;
    model.estimator = full.weights;
    model.prior = fit_latent_prior(codes);
    set_label_grid(model, grid64.resolution);

    const GridSpec grid128{128, 1.0};
    const GeomParams target = reference_target();
    std::vector<DesignRun> runs;
    double pipeline_seconds = 0.0;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        runs.push_back(run_design(model, target, seed, LatentOptimConfig{}, grid128));
        if (seed == 1) pipeline_seconds = seconds_since(t0);
        const auto& r = runs.back();
        const auto& last = r.optimization.trace.rows.back();
        if (r.extracted)
            detail("seed {}: {} iters, estimator mse {:.3e}, re-extracted mse {:.3e} (N={}), |z| {:.4f}", seed,
                   last.iteration, last.mse, params_mse(*r.extracted, target), r.extract_grid,
                   r.optimization.latent.norm());
        else
            detail("seed {}: {} iters, estimator mse {:.3e}, re-extraction failed: {}", seed, last.iteration, last.mse,
                   r.extract_error);
    }
    auto reextract_mse = [&](const DesignRun& r) { return r.extracted ? params_mse(*r.extracted, target) : INFINITY; };

    if (only.empty() || only.count(1)) {
        const auto& r = runs[0];
        const double est_mse = r.optimization.trace.rows.back().mse;
        const double re = reextract_mse(r);
        detail("loop closure: re-extracted mse / estimator test mse = {:.2f}", re / full.report.test.mse);
        verdict(1,
                est_mse <= kEstimatorMseTol && re <= kReextractMseTol && pipeline_seconds <= kRuntimeBudget,
                fmt::format("estimator-space mse {:.3e} (<= 1e-4), re-extracted mse {:.3e} (<= 1e-3), "
                            "runtime {:.0f}s (<= 1800s)",
                            est_mse, re, pipeline_seconds));
    }
    if (only.empty() || only.count(2)) {
        bool all_ok = true;
        double mean_norm = 0.0, min_dist = INFINITY, worst = 0.0;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            all_ok = all_ok && runs[i].optimization.trace.converged && reextract_mse(runs[i]) <= kReextractMseTol;
            worst = std::max(worst, reextract_mse(runs[i]));
            mean_norm += runs[i].optimization.latent.norm() / static_cast<double>(runs.size());
            for (std::size_t j = i + 1; j < runs.size(); ++j)
                min_dist = std::min<double>(min_dist, (runs[i].optimization.latent - runs[j].optimization.latent).norm());
        }
        verdict(2, all_ok && min_dist > 0.1 * mean_norm,
                fmt::format("4 seeds converged and re-extracted (worst mse {:.3e}); min pairwise distance {:.4f} "
                            "> 0.1 x mean norm {:.4f}",
                            worst, min_dist, 0.1 * mean_norm));
    }
    if (only.empty() || only.count(3)) {
        bool monotone = true;
        for (std::size_t i = 1; i < curve.size(); ++i) monotone = monotone && curve[i] <= curve[i - 1];
        const double last_gain = (curve[2] - curve[3]) / curve[2];
        verdict(3, monotone && last_gain < 0.25,
                fmt::format("test mse over {{200,500,1000,2000}} = {:.3e}, non-increasing {}, last doubling "
                            "improves {:.1f}% (< 25%)",
                            fmt::join(curve, ", "), monotone ? "yes" : "no", 100 * last_gain));
    }
}

// ---------------------------------------------------------------- C4

void criterion_4() {
    const auto t0 = Clock::now();
    const GridSpec grid{128, 1.0};
    const auto cfg = extraction_for(grid);
    const auto manifest = generate_corpus(100, 2024);
    double worst_margin = -INFINITY, worst_invariance = 0.0;
    int out_of_tolerance = 0, failed = 0;
    for (const auto& e : manifest.entries) {
        const auto car = make_toy_car(e.spec);
        const auto mesh = marching_cubes(normalized_field(car), grid).mesh;
        try {
            const auto ex = extract_params(mesh, cfg);
            const double h = grid.cell_size() / ex.length;
            const double tol = std::max(2 * h, 0.01);
            const double err = (ex.params - e.true_params).cwiseAbs().maxCoeff();
            worst_margin = std::max(worst_margin, err - tol);
            out_of_tolerance += err > tol;

            const auto scaled_mesh = scaled(mesh, Eigen::Vector3d::Constant(2.7));
            const auto moved = translated(mesh, {0.31, -0.2, 0.17});
            for (const auto& m : {scaled_mesh, moved, mirrored_z(mesh)})
                worst_invariance =
                    std::max(worst_invariance, (extract_params(m, cfg).params - ex.params).cwiseAbs().maxCoeff());
        } catch (const std::exception& err) {
            ++failed;
            detail("{}: {}", e.shape_id, err.what());
        }
    }
    detail("{:.1f}s", seconds_since(t0));
    verdict(4, failed == 0 && out_of_tolerance == 0 && worst_invariance <= 1e-6,
            fmt::format("100 cars at N=128: {} failed, {} outside max(2h, 0.01) (worst margin {:+.4f}); "
                        "scale/translation/mirror max deviation {:.2e} (<= 1e-6)",
                        failed, out_of_tolerance, worst_margin, worst_invariance));
}

// ---------------------------------------------------------------- C5

void criterion_5() {
    double worst_dec = 0.0, worst_est = 0.0;
    int skipped = 0, probes = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto c = testing::random_grad_config(1000 + seed);
        const auto d = testing::check_decoder_gradients(c.decoder, c.z, c.x, c.sdf_target, 300, seed);
        const auto e = testing::check_estimator_gradients(c.estimator, c.z, c.params_target, 300, seed);
        worst_dec = std::max(worst_dec, d.relative_error);
        worst_est = std::max(worst_est, e.relative_error);
        skipped += d.skipped + e.skipped;
        probes += d.probes + e.probes;
    }
    detail("{} probes, {} skipped at kinks on both sides", probes, skipped);
    verdict(5, worst_dec < 1e-4 && worst_est < 1e-4,
            fmt::format("20 configs each (m=64, width 128): decoder rel err {:.2e}, estimator rel err {:.2e} (< 1e-4)",
                        worst_dec, worst_est));
}

// ---------------------------------------------------------------- C6

void criterion_6() {
    double worst_ratio = 0.0;
    bool watertight = true;
    for (int n : {32, 64, 128}) {
        const GridSpec grid{n, 1.0};
        const double r = 0.61;
        const auto iso = marching_cubes(sphere(r, {0.013, -0.021, 0.007}), grid);
        double worst = 0.0;
        for (const auto& v : iso.mesh.vertices) worst = std::max(worst, std::abs((v - Point3(0.013, -0.021, 0.007)).norm() - r));
        worst_ratio = std::max(worst_ratio, worst / grid.cell_size());
        const auto wt = watertight_check(iso.mesh);
        watertight = watertight && wt.ok() && !iso.mesh.empty();
        detail("N={}: {} vertices, max residual {:.2e} = {:.3f} h, watertight {}", n, iso.mesh.vertices.size(), worst,
               worst / grid.cell_size(), wt.ok());
    }
    // A car mesh must be closed too.
    const auto car_mesh = toy_car_mesh(make_toy_car(ToyCarSpec{}), 96);
    watertight = watertight && watertight_check(car_mesh).ok();

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst_circle = 0.0;
    int triples = 0;
    while (triples < 1000) {
        const Eigen::Vector2d a(u(rng), u(rng)), b(u(rng), u(rng)), c(u(rng), u(rng));
        if (std::abs((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x()) < 1e-3) continue;
        const auto circ = fit_circle_3pts(a, b, c);
        for (const auto& p : {a, b, c}) worst_circle = std::max(worst_circle, std::abs((p - circ.center).norm() - circ.radius));
        ++triples;
    }
    verdict(6, worst_ratio < 2.0 && watertight && worst_circle < 1e-9,
            fmt::format("sphere vertex residual {:.3f} h (< 2h), watertight {}, fit_circle_3pts residual {:.2e} "
                        "over 1000 triples (< 1e-9)",
                        worst_ratio, watertight ? "yes" : "no", worst_circle));
}

// ---------------------------------------------------------------- C7

void criterion_7(const fs::path& work) {
    const auto t0 = Clock::now();
    const auto manifest = generate_corpus(600, 7);
    std::vector<DragRecord> data;
    for (const auto& e : manifest.entries) {
        const auto mesh = toy_car_mesh(make_toy_car(e.spec));
        data.push_back({drag_features(build_atlas(mesh)), synthetic_cd_oracle(mesh)});
    }
    const auto trained = train_drag_model(data, BoostConfig{}, 7);
    detail("{} cars, train R2 {:.3f}, validation R2 {:.3f} ({:.1f}s)", data.size(), trained.report.train.r2,
           trained.report.validation.r2, seconds_since(t0));

    // Two independent renders of the same meshes must give the same bytes, in
    // memory and as PNG files.
    bool deterministic = true;
    fs::create_directories(work);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto mesh = toy_car_mesh(make_toy_car(manifest.entries[i].spec));
        const auto a = build_atlas(mesh), b = build_atlas(mesh);
        deterministic = deterministic && a.composite == b.composite;
        write_png(work / "atlas_a.png", a.composite);
        write_png(work / "atlas_b.png", b.composite);
        std::ifstream fa(work / "atlas_a.png", std::ios::binary), fb(work / "atlas_b.png", std::ios::binary);
        std::ostringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        deterministic = deterministic && sa.str() == sb.str() && !sa.str().empty();
    }
    const auto& t = trained.report.test;
    verdict(7, t.count >= 75 && t.r2 >= 0.9 && t.mse <= 0.002 && deterministic,
            fmt::format("{} oracle-labelled cars, 0.7/0.15/0.15 split: test R2 {:.3f} (>= 0.9), test mse {:.2e} "
                        "(<= 0.002), atlas byte-deterministic {}",
                        data.size(), t.r2, t.mse, deterministic ? "yes" : "no"));
}

// ---------------------------------------------------------------- C8

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int run(const std::string& cmd) {
    const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// All files below dir, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return out;
}

void criterion_8(const fs::path& cli, const fs::path& work) {
    if (cli.empty() || !fs::exists(cli)) {
        verdict(8, false, "CLI binary not found: " + cli.string());
        return;
    }
    const auto t0 = Clock::now();
    // Small settings: the check is about determinism, not quality.
    const std::vector<std::pair<std::string, std::string>> steps = {
        {"gen-corpus", "gen-corpus --n 8 --samples 3000 --mesh-resolution 64 --out corpus --seed 5"},
        {"train-sdf", "train-sdf --corpus corpus --epochs 60 --latent-dim 16 --width 64 --batch 512 --decay-every 20 "
         "--out sdf.vsdf --seed 5"},
        {"train-estimator",
         "train-estimator --model sdf.vsdf --records 40 --grid 48 --epochs 50 --out model.vsdf --seed 5"},
        {"optimize", "optimize --model model.vsdf --target 1,0.28,0.43,0.037,0.6,0.2,0.2 --seeds 2 --max-iters 200 "
                     "--grid 48 --out designs --seed 5"},
        {"extract", "extract --mesh corpus/meshes/car_0000.obj --grid 64 --out extract.json --seed 5"},
        {"render", "render --mesh corpus/meshes/car_0000.obj --resolution 48 --out atlas.png --seed 5"},
        {"drag-train", "drag-train --n 60 --resolution 48 --trees 20 --out drag.vsdf --seed 5"},
        {"drag-predict", "drag-predict --model drag.vsdf --mesh corpus/meshes/car_0001.obj --out cd.json --seed 5"},
        {"serve", "serve --model model.vsdf --once 1,0.28,0.43,0.037,0.6,0.2,0.2 --data-dir store --seed 5"},
    };
    std::map<std::string, std::string> runs[2];
    std::vector<std::string> broken;
    for (int k = 0; k < 2; ++k) {
        const fs::path dir = work / fmt::format("run{}", k);
        fs::remove_all(dir);
        fs::create_directories(dir);
        for (const auto& [name, args] : steps) {
            const int rc = run(fmt::format("cd '{}' && '{}' {}", dir.string(), fs::absolute(cli).string(), args));
            if (rc != 0 && k == 0) broken.push_back(fmt::format("{} (exit {})", name, rc));
        }
        runs[k] = snapshot(dir);
    }
    std::vector<std::string> differing;
    for (const auto& [path, bytes] : runs[0]) {
        auto it = runs[1].find(path);
        if (it == runs[1].end() || it->second != bytes) differing.push_back(path);
    }
    for (const auto& [path, bytes] : runs[1])
        if (!runs[0].count(path)) differing.push_back(path);
    detail("{} artifacts per run ({:.1f}s)", runs[0].size(), seconds_since(t0));
    for (const auto& b : broken) detail("command failed: {}", b);
    for (const auto& d : differing) detail("differs: {}", d);
    verdict(8, broken.empty() && differing.empty() && !runs[0].empty(),
            fmt::format("{} commands run twice with --seed 5: {} failed, {} of {} artifacts differ", steps.size(),
                        broken.size(), differing.size(), runs[0].size()));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance run"};
    std::vector<int> only_list;
    std::string cli = VSDF_CLI_PATH;
    std::string work = (fs::temp_directory_path() / "vsdf_acceptance").string();
    app.add_option("--only", only_list, "criteria to run")->delimiter(',');
    app.add_option("--cli", cli, "vsdf binary used by the reproducibility check");
    app.add_option("--work", work, "scratch directory");
    CLI11_PARSE(app, argc, argv);
    const std::set<int> only(only_list.begin(), only_list.end());
    auto want = [&](int c) { return only.empty() || only.count(c) > 0; };

    auto guarded = [&](std::initializer_list<int> ids, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            for (int id : ids)
                if (want(id)) verdict(id, false, fmt::format("aborted: {}", e.what()));
        }
    };
    if (want(6)) guarded({6}, [] { criterion_6(); });
    if (want(5)) guarded({5}, [] { criterion_5(); });
    if (want(4)) guarded({4}, [] { criterion_4(); });
    if (want(8)) guarded({8}, [&] { criterion_8(cli, fs::path(work) / "cli"); });
    if (want(7)) guarded({7}, [&] { criterion_7(fs::path(work) / "render"); });
    if (want(1) || want(2) || want(3)) guarded({1, 2, 3}, [&] { criteria_1_to_3(only); });
    fmt::print("\n");
    for (const auto& [id, line] : verdicts) fmt::print("{}\n", line);
    return std::min(failures, 100);
}
