// vsdf: corpus generation, training, latent optimization, extraction,
// rendering, drag prediction and the HTTP service.
//
// Exit status: 0 ok, 1 usage error, 2 runtime error.

#include "vsdf/errors.hpp"
#include "vsdf/pipeline.hpp"
#include "vsdf/render/canny.hpp"
#include "vsdf/render/drag.hpp"
#include "vsdf/service/service.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <httplib.h>
#include <json.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace vsdf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Bad arguments detected after parsing; exit status 1 like parse errors.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ModelBundle load_bundle(const fs::path& path) { return ModelBundle::from_checkpoint(Checkpoint::read(path)); }

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

// JSON to a file, or stdout when the path is empty.
void emit_json(const fs::path& path, const json& j) {
    if (path.empty())
        std::cout << j.dump(2) << "\n";
    else
        write_text(path, j.dump(2) + "\n");
}

json params_json(const GeomParams& p) { return std::vector<double>(p.data(), p.data() + kNumParams); }

GeomParams parse_target(const std::vector<double>& v) {
    if (v.size() != kNumParams)
        throw UsageError(fmt::format("--target needs {} comma-separated values, got {}", kNumParams, v.size()));
    GeomParams p;
    for (int k = 0; k < kNumParams; ++k) {
        if (!(v[k] > 0)) throw UsageError(fmt::format("--target component {} must be positive", k));
        p[k] = v[k];
    }
    return p;
}

GridSpec grid_of(int n) {
    GridSpec g{n, 1.0};
    g.validate();
    return g;
}

// ---------------------------------------------------------------- commands

struct CorpusArgs {
    int n = 64;
    int samples = 5000;
    int mesh_resolution = 96;
    fs::path out = "corpus";
};

void gen_corpus(const CorpusArgs& a, std::uint64_t seed) {
    const auto manifest = generate_corpus(a.n, seed);
    fs::create_directories(a.out / "samples");
    write_manifest(a.out / "manifest.jsonl", manifest);
    const auto sets = sample_corpus(manifest, a.samples);
    for (const auto& s : sets) write_samples_csv(a.out / "samples" / (s.shape_id + ".csv"), s);
    if (a.mesh_resolution > 0) {
        fs::create_directories(a.out / "meshes");
        for (const auto& e : manifest.entries)
            write_obj(a.out / "meshes" / (e.shape_id + ".obj"), toy_car_mesh(make_toy_car(e.spec), a.mesh_resolution));
    }
    fmt::print("{} shapes, {} samples each -> {}\n", manifest.entries.size(), a.samples, a.out.string());
}

struct SdfArgs {
    fs::path corpus = "corpus";
    fs::path out = "sdf.vsdf";
    SdfTrainConfig cfg;
};

void train_sdf(SdfArgs a, std::uint64_t seed) {
    a.cfg.seed = seed;
    const auto manifest = read_manifest(a.corpus / "manifest.jsonl");
    std::vector<SampleSet> corpus;
    for (const auto& e : manifest.entries) {
        std::ifstream in(a.corpus / "samples" / (e.shape_id + ".csv"));
        if (!in) throw std::runtime_error("missing samples for " + e.shape_id);
        corpus.push_back(read_samples_csv(in, e.shape_id));
    }
    const auto t = train_deepsdf(corpus, a.cfg);
    ModelBundle b;
    b.decoder = t.weights;
    b.shape_ids = t.shape_ids;
    b.latents = t.latents;
    b.config_json = json{{"stage", "train-sdf"},
                         {"generator", manifest.generator_version},
                         {"epochs", a.cfg.epochs},
                         {"latent_dim", a.cfg.latent_dim},
                         {"width", a.cfg.width},
                         {"seed", seed}}
                        .dump();
    b.to_checkpoint().write(a.out);
    fmt::print("{} shapes, {} epochs, final data loss {:.4e} -> {}\n", corpus.size(), a.cfg.epochs,
               t.report.data_loss.back(), a.out.string());
}

struct EstimatorArgs {
    fs::path model = "sdf.vsdf";
    fs::path out = "model.vsdf";
    std::size_t records = 2000;
    int grid = 64;
    EstimatorTrainConfig cfg;
};

void train_estimator_cmd(EstimatorArgs a, std::uint64_t seed) {
    a.cfg.seed = seed;
    auto b = load_bundle(a.model);
    if (!b.decoder || b.latents.size() < 2) throw std::runtime_error(a.model.string() + ": needs a decoder and latents");
    const auto stage = build_estimator(*b.decoder, b.latents, a.records, seed, grid_of(a.grid), a.cfg);
    b.estimator = stage.estimator.weights;
    b.prior = stage.prior;
    set_label_grid(b, a.grid);
    b.to_checkpoint().write(a.out);
    const auto& r = stage.estimator.report;
    fmt::print("{} records ({} of {} decodes failed), train mse {:.4e}, test mse {:.4e}, test R2 {:.4f} -> {}\n",
               stage.records.size(), stage.stats.failures, stage.stats.attempts, r.train.mse, r.test.mse, r.test.r2,
               a.out.string());
}

struct OptimizeArgs {
    fs::path model = "model.vsdf";
    fs::path out = "designs";
    std::vector<double> target;
    int seeds = 1;
    int grid = 128;
    LatentOptimConfig cfg;
};

void optimize_cmd(const OptimizeArgs& a, std::uint64_t seed) {
    const GeomParams target = parse_target(a.target);
    const auto b = load_bundle(a.model);
    fs::create_directories(a.out);
    json summary = json::array();
    for (int k = 0; k < a.seeds; ++k) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(k);
        const auto run = run_design(b, target, s, a.cfg, grid_of(a.grid));
        const auto& last = run.optimization.trace.rows.back();
        write_obj(a.out / fmt::format("design_{}.obj", k), run.mesh);
        std::ofstream csv(a.out / fmt::format("trace_{}.csv", k));
        write_trace_csv(csv, run.optimization.trace);
        json j = {{"run", k},
                  {"seed", s},
                  {"converged", run.optimization.trace.converged},
                  {"iterations", last.iteration},
                  {"final_mse", last.mse},
                  {"params", params_json(last.params)},
                  {"extracted", run.extracted ? params_json(*run.extracted) : json(nullptr)}};
        j["extract_grid"] = run.extract_grid;
        if (run.extracted) j["extracted_mse"] = params_mse(*run.extracted, target);
        else j["extract_error"] = run.extract_error;
        summary.push_back(j);
        fmt::print("seed {}: {} after {} iterations, mse {:.3e}, re-extracted {}\n", s,
                   run.optimization.trace.converged ? "converged" : "not converged", last.iteration, last.mse,
                   run.extracted ? fmt::format("mse {:.3e}", params_mse(*run.extracted, target)) : run.extract_error);
    }
    emit_json(a.out / "summary.json", {{"target", params_json(target)}, {"runs", summary}});
}

struct ExtractArgs {
    fs::path mesh;
    fs::path out;
    int grid = 128;
};

void extract_cmd(const ExtractArgs& a) {
    const auto mesh = read_obj(a.mesh);
    const auto ex = extract_params(mesh, extraction_for(grid_of(a.grid)));
    json names = json::array();
    for (auto n : kParamNames) names.push_back(std::string(n));
    emit_json(a.out, {{"params", params_json(ex.params)},
                      {"names", names},
                      {"length", ex.length},
                      {"floor_point", {ex.floor_point.x(), ex.floor_point.y(), ex.floor_point.z()}},
                      {"front_tire", {{"center", {ex.front.center.x(), ex.front.center.y()}}, {"radius", ex.front.radius}}},
                      {"rear_tire", {{"center", {ex.rear.center.x(), ex.rear.center.y()}}, {"radius", ex.rear.radius}}}});
}

struct RenderArgs {
    fs::path mesh;
    fs::path out = "atlas.png";
    fs::path edges;
    int resolution = 128;
};

void render_cmd(const RenderArgs& a) {
    const auto atlas = build_atlas(read_obj(a.mesh), a.resolution);
    write_png(a.out, atlas.composite);
    if (!a.edges.empty()) write_png(a.edges, canny_edges(to_gray(render_view(read_obj(a.mesh), View::Side, a.resolution))));
    fmt::print("{}x{} atlas -> {}\n", atlas.composite.width, atlas.composite.height, a.out.string());
}

struct DragTrainArgs {
    int n = 600;
    int mesh_resolution = 96;
    int resolution = 128;
    fs::path out = "drag.vsdf";
    BoostConfig cfg;
};

void drag_train_cmd(const DragTrainArgs& a, std::uint64_t seed) {
    a.cfg.validate();
    const auto manifest = generate_corpus(a.n, seed);
    std::vector<DragRecord> data;
    for (const auto& e : manifest.entries) {
        const auto mesh = toy_car_mesh(make_toy_car(e.spec), a.mesh_resolution);
        data.push_back({drag_features(build_atlas(mesh, a.resolution)), synthetic_cd_oracle(mesh)});
    }
    const auto t = train_drag_model(data, a.cfg, seed);
    ModelBundle b;
    b.drag = t.model;
    b.config_json = json{{"stage", "drag-train"}, {"render_resolution", a.resolution}, {"cars", a.n}, {"seed", seed}}.dump();
    b.to_checkpoint().write(a.out);
    fmt::print("{} cars: train R2 {:.4f}, validation R2 {:.4f}, test R2 {:.4f}, test mse {:.3e} -> {}\n", data.size(),
               t.report.train.r2, t.report.validation.r2, t.report.test.r2, t.report.test.mse, a.out.string());
}

struct DragPredictArgs {
    fs::path model = "drag.vsdf";
    fs::path mesh;
    fs::path out;
};

void drag_predict_cmd(const DragPredictArgs& a) {
    const auto b = load_bundle(a.model);
    if (!b.drag) throw std::runtime_error(a.model.string() + ": no drag model");
    int resolution = 128;
    if (!b.config_json.empty()) resolution = json::parse(b.config_json).value("render_resolution", 128);
    const double cd = b.drag->predict(drag_features(build_atlas(read_obj(a.mesh), resolution)));
    emit_json(a.out, {{"cd", cd}, {"mesh", a.mesh.filename().string()}});
}

struct ServeArgs {
    fs::path config;
    fs::path model;
    fs::path data_dir;
    std::optional<int> port;
    unsigned workers = 0;
    std::vector<double> once;
};

std::shared_ptr<const ModelBundle> service_model(const fs::path& path) {
    if (path.empty()) return nullptr;
    return std::make_shared<const ModelBundle>(load_bundle(path));
}

// Submits one job through the HTTP API, follows its event stream to the end
// and fetches the mesh, then shuts down. Exercises the whole service once.
int serve_once(service::Server& server, const GeomParams& target, std::uint64_t seed) {
    httplib::Client cli("127.0.0.1", server.port());
    cli.set_read_timeout(3600);
    const json body = {{"target", params_json(target)}, {"seed", seed}};
    auto res = cli.Post("/api/v1/optimize", body.dump(), "application/json");
    if (!res || res->status != 202) throw std::runtime_error("optimize request failed: " + (res ? res->body : "no response"));
    const std::string id = json::parse(res->body).at("job_id");
    std::size_t events = 0;
    std::string buffer;
    auto stream = cli.Get("/api/v1/stream/" + id, [&](const char* data, std::size_t n) {
        buffer.append(data, n);
        for (std::size_t p; (p = buffer.find("\n\n")) != std::string::npos; buffer.erase(0, p + 2)) ++events;
        return true;
    });
    if (!stream || stream->status != 200) throw std::runtime_error("event stream failed");
    auto mesh = cli.Get("/api/v1/meshes/" + id + ".obj");
    if (!mesh || mesh->status != 200) throw std::runtime_error("mesh fetch failed");
    auto job = cli.Get("/api/v1/jobs/" + id);
    if (!job || job->status != 200) throw std::runtime_error("job record fetch failed");
    const auto record = json::parse(job->body);
    fmt::print("job {} {}: {} events, {} mesh bytes\n{}\n", id, record.at("status").get<std::string>(), events,
               mesh->body.size(), record.at("result").dump(2));
    return 0;
}

volatile std::sig_atomic_t g_stop = 0;

int serve_cmd(const ServeArgs& a, std::uint64_t seed, bool seed_given) {
    auto cfg = service::load_config(a.config);
    if (!a.model.empty()) cfg.model_path = a.model;
    if (!a.data_dir.empty()) cfg.data_dir = a.data_dir;
    if (a.port) cfg.port = *a.port;
    if (a.workers) cfg.workers = a.workers;
    if (seed_given) cfg.seed = seed;
    std::optional<GeomParams> once;
    if (!a.once.empty()) {
        once = parse_target(a.once);
        cfg.port = 0;
    }
    service::Server server(cfg, service_model(cfg.model_path));
    const int port = server.start();
    if (once) {
        const int rc = serve_once(server, *once, cfg.seed);
        server.stop();
        return rc;
    }
    fmt::print("listening on http://{}:{} (data dir {}, checkpoint {})\n", cfg.host, port, cfg.data_dir.string(),
               cfg.model_path.empty() ? "none" : cfg.model_path.string());
    std::fflush(stdout);
    std::signal(SIGINT, [](int) { g_stop = 1; });
    std::signal(SIGTERM, [](int) { g_stop = 1; });
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vsdf: latent-space vehicle design toolkit"};
    app.require_subcommand(1);
    std::uint64_t seed = 1;
    auto seed_opt = [&](CLI::App* sub) { return sub->add_option("--seed", seed, "random seed")->capture_default_str(); };

    CorpusArgs corpus;
    auto* c_gen = app.add_subcommand("gen-corpus", "generate toy cars, their SDF samples and meshes");
    c_gen->add_option("--n", corpus.n, "number of cars")->capture_default_str();
    c_gen->add_option("--samples", corpus.samples, "SDF samples per car")->capture_default_str();
    c_gen->add_option("--mesh-resolution", corpus.mesh_resolution, "lattice for OBJ meshes (0: none)")->capture_default_str();
    c_gen->add_option("--out", corpus.out, "output directory")->capture_default_str();
    seed_opt(c_gen);

    SdfArgs sdf;
    auto* c_sdf = app.add_subcommand("train-sdf", "train the auto-decoder on a corpus");
    c_sdf->add_option("--corpus", sdf.corpus, "corpus directory")->capture_default_str();
    c_sdf->add_option("--out", sdf.out, "checkpoint to write")->capture_default_str();
    c_sdf->add_option("--epochs", sdf.cfg.epochs)->capture_default_str();
    c_sdf->add_option("--latent-dim", sdf.cfg.latent_dim)->capture_default_str();
    c_sdf->add_option("--width", sdf.cfg.width)->capture_default_str();
    c_sdf->add_option("--batch", sdf.cfg.batch_size)->capture_default_str();
    c_sdf->add_option("--lr", sdf.cfg.learning_rate)->capture_default_str();
    c_sdf->add_option("--decay-every", sdf.cfg.lr_decay_every, "halve both rates every k epochs (0: never)")
        ->capture_default_str();
    seed_opt(c_sdf);

    EstimatorArgs est;
    auto* c_est = app.add_subcommand("train-estimator", "augment latents and train the parameter estimator");
    c_est->add_option("--model", est.model, "checkpoint with decoder and latents")->capture_default_str();
    c_est->add_option("--out", est.out, "checkpoint to write")->capture_default_str();
    c_est->add_option("--records", est.records, "augmented dataset size")->capture_default_str();
    c_est->add_option("--grid", est.grid, "marching-cubes lattice for labelling")->capture_default_str();
    c_est->add_option("--epochs", est.cfg.epochs)->capture_default_str();
    c_est->add_option("--lr", est.cfg.learning_rate)->capture_default_str();
    seed_opt(c_est);

    OptimizeArgs opt;
    auto* c_opt = app.add_subcommand("optimize", "find latents matching target parameters");
    c_opt->add_option("--model", opt.model, "checkpoint with decoder and estimator")->capture_default_str();
    c_opt->add_option("--target", opt.target, "7 comma-separated parameters")->required()->delimiter(',');
    c_opt->add_option("--seeds", opt.seeds, "runs, with init seeds seed, seed+1, ...")
        ->check(CLI::Range(1, 64))
        ->capture_default_str();
    c_opt->add_option("--max-iters", opt.cfg.max_steps)->check(CLI::NonNegativeNumber)->capture_default_str();
    c_opt->add_option("--tol", opt.cfg.tolerance)->check(CLI::NonNegativeNumber)->capture_default_str();
    c_opt->add_option("--grid", opt.grid, "lattice of the output meshes")->capture_default_str();
    c_opt->add_option("--out", opt.out, "output directory")->capture_default_str();
    seed_opt(c_opt);

    ExtractArgs ext;
    auto* c_ext = app.add_subcommand("extract", "measure the seven parameters of a mesh");
    c_ext->add_option("--mesh", ext.mesh, "OBJ file")->required()->check(CLI::ExistingFile);
    c_ext->add_option("--grid", ext.grid, "lattice the mesh came from (sets the band widths)")->capture_default_str();
    c_ext->add_option("--out", ext.out, "JSON file (default: stdout)");
    seed_opt(c_ext);

    RenderArgs ren;
    auto* c_ren = app.add_subcommand("render", "six-view normal atlas of a mesh");
    c_ren->add_option("--mesh", ren.mesh, "OBJ file")->required()->check(CLI::ExistingFile);
    c_ren->add_option("--out", ren.out, "PNG file")->capture_default_str();
    c_ren->add_option("--edges", ren.edges, "also write Canny edges of the side view here");
    c_ren->add_option("--resolution", ren.resolution, "tile size in pixels")->capture_default_str();
    seed_opt(c_ren);

    DragTrainArgs dt;
    auto* c_dt = app.add_subcommand("drag-train", "train the drag surrogate on oracle-labelled toy cars");
    c_dt->add_option("--n", dt.n, "number of cars")->capture_default_str();
    c_dt->add_option("--mesh-resolution", dt.mesh_resolution)->capture_default_str();
    c_dt->add_option("--resolution", dt.resolution, "atlas tile size")->capture_default_str();
    c_dt->add_option("--trees", dt.cfg.trees)->capture_default_str();
    c_dt->add_option("--depth", dt.cfg.depth)->capture_default_str();
    c_dt->add_option("--lr", dt.cfg.learning_rate)->capture_default_str();
    c_dt->add_option("--out", dt.out, "checkpoint to write")->capture_default_str();
    seed_opt(c_dt);

    DragPredictArgs dp;
    auto* c_dp = app.add_subcommand("drag-predict", "predict the drag coefficient of a mesh");
    c_dp->add_option("--model", dp.model, "checkpoint with a drag model")->capture_default_str();
    c_dp->add_option("--mesh", dp.mesh, "OBJ file")->required()->check(CLI::ExistingFile);
    c_dp->add_option("--out", dp.out, "JSON file (default: stdout)");
    seed_opt(c_dp);

    ServeArgs srv;
    auto* c_srv = app.add_subcommand("serve", "run the HTTP service");
    c_srv->add_option("--config", srv.config, "JSON config file")->check(CLI::ExistingFile);
    c_srv->add_option("--model", srv.model, "checkpoint to load");
    c_srv->add_option("--data-dir", srv.data_dir, "artifact store directory");
    c_srv->add_option("--port", srv.port, "port (0: any free port)");
    c_srv->add_option("--workers", srv.workers, "worker threads (0: all cores)");
    c_srv->add_option("--once", srv.once, "run one optimization through the API and exit")->delimiter(',');
    auto* srv_seed = seed_opt(c_srv);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (c_gen->parsed()) gen_corpus(corpus, seed);
        else if (c_sdf->parsed()) train_sdf(sdf, seed);
        else if (c_est->parsed()) train_estimator_cmd(est, seed);
        else if (c_opt->parsed()) optimize_cmd(opt, seed);
        else if (c_ext->parsed()) extract_cmd(ext);
        else if (c_ren->parsed()) render_cmd(ren);
        else if (c_dt->parsed()) drag_train_cmd(dt, seed);
        else if (c_dp->parsed()) drag_predict_cmd(dp);
        else if (c_srv->parsed()) return serve_cmd(srv, seed, srv_seed->count() > 0);
    } catch (const UsageError& e) {
        fmt::print(stderr, "usage error: {}\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return 0;
}
