#include "vsdf/service/service.hpp"

#include "vsdf/errors.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace vsdf::service {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

ServiceConfig config_from_json(const json& j, ServiceConfig c) {
    if (!j.is_object()) throw InvalidArgument("config: expected a JSON object");
    static const std::set<std::string> known = {"host", "port", "data_dir", "model", "workers", "seed", "max_iters",
                                                "tol", "mesh_grid", "render_resolution", "rows_per_event"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw InvalidArgument("config: unknown key '" + key + "'");
    try {
        if (j.contains("host")) c.host = j.at("host").get<std::string>();
        if (j.contains("port")) c.port = j.at("port").get<int>();
        if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
        if (j.contains("model")) c.model_path = j.at("model").get<std::string>();
        if (j.contains("workers")) c.workers = j.at("workers").get<unsigned>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("max_iters")) c.max_iters = j.at("max_iters").get<int>();
        if (j.contains("tol")) c.tol = j.at("tol").get<double>();
        if (j.contains("mesh_grid")) c.mesh_grid = j.at("mesh_grid").get<int>();
        if (j.contains("render_resolution")) c.render_resolution = j.at("render_resolution").get<int>();
        if (j.contains("rows_per_event")) c.rows_per_event = j.at("rows_per_event").get<int>();
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    if (c.port < 0 || c.port > 65535) throw InvalidArgument("config: port out of range");
    if (c.max_iters < 0) throw InvalidArgument("config: max_iters must be >= 0");
    if (!(c.tol >= 0)) throw InvalidArgument("config: tol must be >= 0");
    if (c.mesh_grid < 8) throw InvalidArgument("config: mesh_grid must be >= 8");
    if (c.render_resolution < 8) throw InvalidArgument("config: render_resolution must be >= 8");
    if (c.rows_per_event < 1) throw InvalidArgument("config: rows_per_event must be >= 1");
    return c;
}

void apply_env_overrides(ServiceConfig& c) {
    if (const char* p = std::getenv("VSDF_PORT"); p && *p) {
        int port = -1;
        const std::string_view s(p);
        auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), port);
        if (ec != std::errc{} || end != s.data() + s.size() || port < 0 || port > 65535)
            throw InvalidArgument(fmt::format("VSDF_PORT: not a port number: '{}'", s));
        c.port = port;
    }
    if (const char* d = std::getenv("VSDF_DATA_DIR"); d && *d) c.data_dir = d;
}

ServiceConfig load_config(const fs::path& file) {
    ServiceConfig c;
    if (!file.empty()) {
        std::ifstream in(file);
        if (!in) throw InvalidArgument("config: cannot open " + file.string());
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw InvalidArgument("config: " + file.string() + ": " + e.what());
        }
        c = config_from_json(j, c);
    }
    apply_env_overrides(c);
    return c;
}

// ---------------------------------------------------------------- store

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex_id(std::uint64_t h) { return fmt::format("{:016x}", h); }

ArtifactStore::ArtifactStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path ArtifactStore::path(const std::string& id, const std::string& ext) const { return dir_ / (id + ext); }

bool ArtifactStore::has(const std::string& id, const std::string& ext) const { return fs::exists(path(id, ext)); }

void ArtifactStore::put(const std::string& id, const std::string& ext, const std::string& bytes) const {
    const fs::path final_path = path(id, ext);
    fs::path tmp = final_path;
    tmp += fmt::format(".tmp{}", std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("store: cannot write " + tmp.string());
    }
    fs::rename(tmp, final_path);
}

std::optional<std::string> ArtifactStore::get(const std::string& id, const std::string& ext) const {
    std::ifstream in(path(id, ext), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// ---------------------------------------------------------------- requests

std::string_view to_string(JobKind k) {
    switch (k) {
        case JobKind::Optimize: return "optimize";
        case JobKind::Drag: return "drag";
        case JobKind::Extract: return "extract";
    }
    return "?";
}

std::string_view to_string(JobStatus s) {
    switch (s) {
        case JobStatus::Queued: return "queued";
        case JobStatus::Running: return "running";
        case JobStatus::Done: return "done";
        case JobStatus::Failed: return "failed";
    }
    return "?";
}

namespace {

json params_json(const GeomParams& p) { return std::vector<double>(p.data(), p.data() + kNumParams); }

GeomParams params_from_json(const json& j) {
    GeomParams p;
    for (int k = 0; k < kNumParams; ++k) p[k] = j.at(k).get<double>();
    return p;
}

[[noreturn]] void bad_request(const std::string& msg) { throw RequestError(400, msg); }

template <typename T>
T integer_field(const json& body, const char* name, T fallback, long long lo, long long hi) {
    if (!body.contains(name)) return fallback;
    const auto& v = body.at(name);
    if (!v.is_number_integer()) bad_request(fmt::format("'{}' must be an integer", name));
    const auto x = v.get<long long>();
    if (x < lo || x > hi) bad_request(fmt::format("'{}' must be in [{}, {}], got {}", name, lo, hi, x));
    return static_cast<T>(x);
}

}  // namespace

json OptimizeRequest::canonical() const {
    return {{"kind", "optimize"}, {"target", params_json(target)}, {"seed", seed}, {"max_iters", max_iters},
            {"tol", tol},         {"grid", grid},                  {"model", model}};
}

std::string OptimizeRequest::id() const { return hex_id(fnv1a64(canonical().dump())); }

std::vector<OptimizeRequest> parse_optimize_request(const json& body, const ServiceConfig& d) {
    if (!body.is_object()) bad_request("request body must be a JSON object");
    static const std::set<std::string> known = {"target", "seeds", "seed", "max_iters", "tol", "grid"};
    for (const auto& [key, _] : body.items())
        if (!known.count(key)) bad_request("unknown field '" + key + "'");

    if (!body.contains("target")) bad_request("missing field 'target'");
    const auto& t = body.at("target");
    if (!t.is_array()) bad_request("'target' must be an array of 7 numbers");
    if (t.size() != kNumParams)
        bad_request(fmt::format("'target' must have {} elements, got {}", kNumParams, t.size()));
    OptimizeRequest base;
    for (int k = 0; k < kNumParams; ++k) {
        if (!t[k].is_number()) bad_request(fmt::format("'target[{}]' is not a number", k));
        base.target[k] = t[k].get<double>();
        if (!std::isfinite(base.target[k]) || base.target[k] <= 0)
            bad_request(fmt::format("'target[{}]' must be positive and finite", k));
    }
    base.max_iters = integer_field(body, "max_iters", d.max_iters, 0, 1'000'000);
    base.grid = integer_field(body, "grid", d.mesh_grid, 16, 512);
    base.tol = d.tol;
    if (body.contains("tol")) {
        const auto& v = body.at("tol");
        if (!v.is_number() || !std::isfinite(v.get<double>()) || v.get<double>() < 0)
            bad_request("'tol' must be a non-negative number");
        base.tol = v.get<double>();
    }
    const auto first = integer_field<std::uint64_t>(body, "seed", d.seed, 0, (1LL << 53));

    std::vector<std::uint64_t> seeds;
    if (!body.contains("seeds")) {
        seeds = {first};
    } else if (body.at("seeds").is_number_integer()) {
        const int n = integer_field(body, "seeds", 1, 1, 64);
        for (int k = 0; k < n; ++k) seeds.push_back(first + static_cast<std::uint64_t>(k));
    } else if (body.at("seeds").is_array()) {
        const auto& a = body.at("seeds");
        if (a.empty() || a.size() > 64) bad_request("'seeds' list must have 1 to 64 entries");
        std::set<std::uint64_t> seen;
        for (const auto& s : a) {
            if (!s.is_number_unsigned()) bad_request("'seeds' entries must be non-negative integers");
            if (!seen.insert(s.get<std::uint64_t>()).second) bad_request("'seeds' entries must be distinct");
            seeds.push_back(s.get<std::uint64_t>());
        }
    } else {
        bad_request("'seeds' must be a count or a list of seeds");
    }
    std::vector<OptimizeRequest> out;
    for (auto s : seeds) {
        out.push_back(base);
        out.back().seed = s;
    }
    return out;
}

json to_json(const TraceRow& row) { return {{"iter", row.iteration}, {"params", params_json(row.params)}, {"mse", row.mse}}; }

json job_record(const Job& job) {
    json rows = json::array();
    for (const auto& r : job.rows) rows.push_back(to_json(r));
    json j = {{"job_id", job.id},     {"kind", to_string(job.kind)}, {"status", to_string(job.status)},
              {"request", job.request}, {"result", job.result},      {"trace", rows}};
    if (!job.error.empty()) j["error"] = job.error;
    return j;
}

// ---------------------------------------------------------------- jobs

namespace {

std::string model_fingerprint(const ModelBundle* m) {
    if (!m) return "none";
    std::ostringstream os;
    m->to_checkpoint().write(os);
    return hex_id(fnv1a64(os.str()));
}

int model_render_resolution(const ModelBundle* m, int fallback) {
    if (!m || m->config_json.empty()) return fallback;
    const auto j = json::parse(m->config_json, nullptr, false);
    if (j.is_object() && j.contains("render_resolution") && j["render_resolution"].is_number_integer())
        return j["render_resolution"].get<int>();
    return fallback;
}

}  // namespace

JobManager::JobManager(ServiceConfig config, std::shared_ptr<const ModelBundle> model)
    : config_(std::move(config)), model_(std::move(model)), store_(config_.data_dir) {
    fingerprint_ = model_fingerprint(model_.get());
    render_resolution_ = model_render_resolution(model_.get(), config_.render_resolution);
    const unsigned n = config_.workers ? config_.workers : std::max(1u, std::thread::hardware_concurrency());
    for (unsigned i = 0; i < n; ++i) workers_.emplace_back([this] { worker(); });
}

JobManager::~JobManager() { shutdown(); }

void JobManager::shutdown() {
    {
        std::lock_guard lock(mu_);
        if (stopping_ && workers_.empty()) return;
        stopping_ = true;
    }
    changed_.notify_all();
    for (auto& t : workers_) t.join();
    workers_.clear();
}

bool JobManager::can_optimize() const { return model_ && model_->decoder && model_->estimator; }

bool JobManager::can_predict_drag() const { return model_ && model_->drag; }

std::vector<std::string> JobManager::submit_optimize(const std::vector<OptimizeRequest>& requests) {
    if (!can_optimize()) throw RequestError(503, "no checkpoint with a decoder and an estimator is loaded");
    std::vector<std::string> ids;
    {
        std::lock_guard lock(mu_);
        if (stopping_) throw RequestError(503, "service is shutting down");
        for (auto req : requests) {
            req.model = fingerprint_;
            const auto id = req.id();
            ids.push_back(id);
            if (auto it = jobs_.find(id); it != jobs_.end()) {
                if (it->second.status != JobStatus::Failed) continue;
                jobs_.erase(it);  // failures are not cached: run again
            }
            if (auto stored = load_from_store(id)) {
                jobs_.emplace(id, std::move(*stored));
                continue;
            }
            Job job;
            job.id = id;
            job.request = req.canonical();
            jobs_.emplace(id, std::move(job));
            queue_.emplace_back(id, req);
        }
    }
    changed_.notify_all();
    return ids;
}

std::optional<Job> JobManager::load_from_store(const std::string& id) const {
    const auto text = store_.get(id, ".json");
    if (!text) return std::nullopt;
    const auto j = json::parse(*text, nullptr, false);
    if (j.is_discarded() || j.value("status", "") != "done") return std::nullopt;
    Job job;
    job.id = id;
    const auto kind = j.value("kind", "");
    job.kind = kind == "drag" ? JobKind::Drag : kind == "extract" ? JobKind::Extract : JobKind::Optimize;
    job.status = JobStatus::Done;
    job.request = j.value("request", json::object());
    job.result = j.value("result", json::object());
    for (const auto& r : j.value("trace", json::array()))
        job.rows.push_back({r.at("iter").get<int>(), params_from_json(r.at("params")), r.at("mse").get<double>()});
    return job;
}

std::optional<Job> JobManager::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    if (auto it = jobs_.find(id); it != jobs_.end()) return it->second;
    return load_from_store(id);
}

void JobManager::worker() {
    for (;;) {
        std::pair<std::string, OptimizeRequest> item;
        {
            std::unique_lock lock(mu_);
            changed_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_) return;
            item = std::move(queue_.front());
            queue_.pop_front();
            jobs_.at(item.first).status = JobStatus::Running;
        }
        changed_.notify_all();
        try {
            run_optimize(item.first, item.second);
        } catch (const std::exception& e) {
            finish(item.first, JobStatus::Failed, json::object(), e.what());
        }
    }
}

void JobManager::run_optimize(const std::string& id, const OptimizeRequest& req) {
    LatentOptimConfig cfg;
    cfg.max_steps = req.max_iters;
    cfg.tolerance = req.tol;
    const auto on_row = [&](const TraceRow& row) {
        {
            std::lock_guard lock(mu_);
            jobs_.at(id).rows.push_back(row);
        }
        changed_.notify_all();
    };
    const auto run = run_design(*model_, req.target, req.seed, cfg, GridSpec{req.grid, 1.0}, on_row);
    const auto& trace = run.optimization.trace;
    const auto& last = trace.rows.back();

    json result = {{"mesh", fmt::format("/api/v1/meshes/{}.obj", id)},
                   {"converged", trace.converged},
                   {"iterations", last.iteration},
                   {"final_mse", last.mse},
                   {"params", params_json(last.params)},
                   {"latent_norm", static_cast<double>(run.optimization.latent.norm())},
                   {"vertices", run.mesh.vertices.size()},
                   {"triangles", run.mesh.triangles.size()},
                   {"extract_grid", run.extract_grid}};
    if (run.extracted) {
        result["extracted"] = params_json(*run.extracted);
        result["extracted_mse"] = params_mse(*run.extracted, req.target);
    } else {
        result["extracted"] = nullptr;
        result["extract_error"] = run.extract_error;
    }
    std::ostringstream obj, csv;
    write_obj(obj, run.mesh);
    write_trace_csv(csv, trace);
    store_.put(id, ".obj", obj.str());
    store_.put(id, ".csv", csv.str());
    {
        // The trace from the result is authoritative (the callback saw the same rows).
        std::lock_guard lock(mu_);
        jobs_.at(id).rows = trace.rows;
    }
    finish(id, JobStatus::Done, std::move(result), {});
}

void JobManager::finish(const std::string& id, JobStatus status, json result, std::string error) {
    std::string record;
    {
        std::lock_guard lock(mu_);
        auto& job = jobs_.at(id);
        job.result = std::move(result);
        job.error = std::move(error);
        job.status = status;
        record = job_record(job).dump(1);
    }
    // Only finished, successful jobs are persisted; a failed id is retried on resubmission.
    if (status == JobStatus::Done) store_.put(id, ".json", record + "\n");
    changed_.notify_all();
}

std::string JobManager::mesh_obj(const std::string& id) const {
    const auto job = find(id);
    if (!job || job->kind != JobKind::Optimize) throw RequestError(404, "unknown mesh id '" + id + "'");
    if (job->status != JobStatus::Done)
        throw RequestError(409, fmt::format("job {} is {}", id, to_string(job->status)));
    auto text = store_.get(id, ".obj");
    if (!text) throw RequestError(404, "mesh of job '" + id + "' is missing from the store");
    return *text;
}

std::shared_ptr<const TriangleMesh> JobManager::finished_mesh(const std::string& id) const {
    std::istringstream in(mesh_obj(id));
    return std::make_shared<const TriangleMesh>(read_obj(in));
}

void JobManager::record_sync_job(Job job) {
    if (job.status == JobStatus::Done) store_.put(job.id, ".json", job_record(job).dump(1) + "\n");
    std::lock_guard lock(mu_);
    jobs_.insert_or_assign(job.id, std::move(job));
}

double JobManager::predict_drag(const std::string& mesh_id) {
    if (!can_predict_drag()) throw RequestError(503, "no checkpoint with a drag model is loaded");
    const auto mesh = finished_mesh(mesh_id);
    Job job;
    job.kind = JobKind::Drag;
    job.request = {{"kind", "drag"}, {"mesh_id", mesh_id}, {"model", fingerprint_}};
    job.id = hex_id(fnv1a64(job.request.dump()));
    const double cd = model_->drag->predict(drag_features(build_atlas(*mesh, render_resolution_)));
    job.status = JobStatus::Done;
    job.result = {{"cd", cd}, {"mesh_id", mesh_id}};
    record_sync_job(std::move(job));
    return cd;
}

GeomParams JobManager::extract(const std::string& mesh_id) {
    const auto mesh = finished_mesh(mesh_id);
    const int grid = find(mesh_id)->request.value("grid", config_.mesh_grid);
    Job job;
    job.kind = JobKind::Extract;
    job.request = {{"kind", "extract"}, {"mesh_id", mesh_id}};
    job.id = hex_id(fnv1a64(job.request.dump()));
    try {
        const auto p = extract_params(*mesh, extraction_for(GridSpec{grid, 1.0})).params;
        job.status = JobStatus::Done;
        job.result = {{"params", params_json(p)}, {"mesh_id", mesh_id}};
        record_sync_job(std::move(job));
        return p;
    } catch (const ExtractionFailure& e) {
        job.error = e.what();
    } catch (const DegenerateGeometry& e) {
        job.error = e.what();
    }
    job.status = JobStatus::Failed;
    const std::string msg = "cannot measure mesh " + mesh_id + ": " + job.error;
    record_sync_job(std::move(job));
    throw RequestError(422, msg);
}

JobManager::Progress JobManager::wait_rows(const std::string& id, std::size_t cursor, std::size_t want,
                                           std::chrono::milliseconds timeout) const {
    Progress p;
    std::unique_lock lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) {
        lock.unlock();
        auto stored = load_from_store(id);
        if (!stored) throw RequestError(404, "unknown job id '" + id + "'");
        p.finished = true;
        if (cursor < stored->rows.size()) p.rows.assign(stored->rows.begin() + static_cast<std::ptrdiff_t>(cursor), stored->rows.end());
        p.job = std::move(stored);
        return p;
    }
    changed_.wait_for(lock, timeout, [&] {
        const auto& j = jobs_.at(id);
        return stopping_ || j.finished() || j.rows.size() >= cursor + want;
    });
    const auto& job = jobs_.at(id);
    if (cursor < job.rows.size()) p.rows.assign(job.rows.begin() + static_cast<std::ptrdiff_t>(cursor), job.rows.end());
    p.finished = job.finished();
    if (p.finished) p.job = job;
    return p;
}

bool JobManager::wait_finished(const std::string& id, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    if (!jobs_.count(id)) return load_from_store(id).has_value();
    return changed_.wait_for(lock, timeout, [&] { return jobs_.at(id).finished(); });
}

}  // namespace vsdf::service
