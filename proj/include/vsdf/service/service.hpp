#pragma once

// HTTP job service: optimization jobs on a worker pool, content-addressed
// artifacts on disk, progress over server-sent events.

#include "vsdf/pipeline.hpp"

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace vsdf::service {

using nlohmann::json;

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path data_dir = "vsdf-data";
    std::filesystem::path model_path;  // empty: start without a checkpoint (jobs answer 503)
    unsigned workers = 0;              // 0 = hardware concurrency
    // Request defaults.
    std::uint64_t seed = 1;
    int max_iters = 5000;
    double tol = 1e-6;
    int mesh_grid = 128;
    int render_resolution = 128;       // atlas tiles for drag prediction
    int rows_per_event = 10;
};

/// Defaults, then the JSON file (if any), then VSDF_PORT / VSDF_DATA_DIR.
/// Throws InvalidArgument on unknown keys, wrong types or bad values.
ServiceConfig load_config(const std::filesystem::path& file = {});
ServiceConfig config_from_json(const json& j, ServiceConfig base = {});
void apply_env_overrides(ServiceConfig& config);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex_id(std::uint64_t h);

/// Files named by content id under one directory; writes go through a
/// temporary file and a rename, so readers never see partial artifacts.
class ArtifactStore {
public:
    explicit ArtifactStore(std::filesystem::path dir);
    std::filesystem::path path(const std::string& id, const std::string& ext) const;
    bool has(const std::string& id, const std::string& ext) const;
    void put(const std::string& id, const std::string& ext, const std::string& bytes) const;
    std::optional<std::string> get(const std::string& id, const std::string& ext) const;

private:
    std::filesystem::path dir_;
};

/// Typed request errors, mapped to HTTP status codes by the server.
struct RequestError : std::runtime_error {
    int status;
    RequestError(int s, const std::string& what) : std::runtime_error(what), status(s) {}
};

enum class JobKind { Optimize, Drag, Extract };
enum class JobStatus { Queued, Running, Done, Failed };
std::string_view to_string(JobKind k);
std::string_view to_string(JobStatus s);

/// A validated optimization request for one seed. `canonical()` is the JSON
/// the content id is computed from.
struct OptimizeRequest {
    GeomParams target;
    std::uint64_t seed = 1;
    int max_iters = 5000;
    double tol = 1e-6;
    int grid = 128;
    std::string model;  // fingerprint of the checkpoint, filled in on submission
    json canonical() const;
    std::string id() const;
};

/// Parses `{target: [7], seeds, seed, max_iters, tol, grid}` into one request
/// per seed. `seeds` is a count (seed, seed+1, ...) or an explicit list.
/// Throws RequestError(400) naming the offending field.
std::vector<OptimizeRequest> parse_optimize_request(const json& body, const ServiceConfig& defaults);

struct Job {
    std::string id;
    JobKind kind = JobKind::Optimize;
    JobStatus status = JobStatus::Queued;
    json request;
    json result;
    std::string error;
    std::vector<TraceRow> rows;
    bool finished() const { return status == JobStatus::Done || status == JobStatus::Failed; }
};

json to_json(const TraceRow& row);
json job_record(const Job& job);

/// Job table plus worker pool. Jobs only read the shared model, so runs with
/// distinct seeds give the same artifacts whether they overlap or not.
class JobManager {
public:
    JobManager(ServiceConfig config, std::shared_ptr<const ModelBundle> model);
    ~JobManager();
    JobManager(const JobManager&) = delete;
    JobManager& operator=(const JobManager&) = delete;

    const ServiceConfig& config() const { return config_; }
    bool can_optimize() const;
    bool can_predict_drag() const;

    /// Queues one job per seed; an id that is already known (in memory or in
    /// the store) is not run again. Returns the ids in seed order.
    std::vector<std::string> submit_optimize(const std::vector<OptimizeRequest>& requests);

    /// Snapshot of a job; nullopt for an unknown id.
    std::optional<Job> find(const std::string& id) const;

    /// Mesh of a finished optimization job as OBJ text.
    /// RequestError 404 for unknown ids, 409 while the job is not done.
    std::string mesh_obj(const std::string& id) const;

    /// Synchronous jobs, recorded in the table like the others.
    double predict_drag(const std::string& mesh_id);
    GeomParams extract(const std::string& mesh_id);

    /// Blocks until the job has more than `cursor` rows, finished, or the
    /// timeout passed. Returns the rows from `cursor` on and whether the job
    /// has finished (the returned rows are then the last ones).
    struct Progress {
        std::vector<TraceRow> rows;
        bool finished = false;
        std::optional<Job> job;  // set once finished
    };
    Progress wait_rows(const std::string& id, std::size_t cursor, std::size_t want,
                       std::chrono::milliseconds timeout) const;

    /// Waits until the job finished; false on timeout.
    bool wait_finished(const std::string& id, std::chrono::milliseconds timeout) const;

    void shutdown();

private:
    void worker();
    void run_optimize(const std::string& id, const OptimizeRequest& req);
    void finish(const std::string& id, JobStatus status, json result, std::string error);
    std::optional<Job> load_from_store(const std::string& id) const;
    std::shared_ptr<const TriangleMesh> finished_mesh(const std::string& id) const;
    void record_sync_job(Job job);

    ServiceConfig config_;
    std::shared_ptr<const ModelBundle> model_;
    ArtifactStore store_;
    std::string fingerprint_;
    int render_resolution_ = 128;

    mutable std::mutex mu_;
    mutable std::condition_variable changed_;
    std::map<std::string, Job> jobs_;
    std::deque<std::pair<std::string, OptimizeRequest>> queue_;
    bool stopping_ = false;
    std::vector<std::thread> workers_;
};

/// The HTTP front end. `start()` binds (port 0 picks a free port) and serves
/// on a background thread; `stop()` is idempotent.
class Server {
public:
    Server(ServiceConfig config, std::shared_ptr<const ModelBundle> model);
    ~Server();
    int start();
    void stop();
    int port() const { return port_; }
    JobManager& jobs() { return *jobs_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::unique_ptr<JobManager> jobs_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace vsdf::service
