#include "vsdf/service/service.hpp"

#include "vsdf/errors.hpp"

#include <httplib.h>
#include <fmt/format.h>

#include <atomic>

namespace vsdf::service {

namespace {

constexpr const char* kJson = "application/json";

void send_error(httplib::Response& res, int status, const std::string& msg) {
    res.status = status;
    res.set_content(json{{"error", msg}, {"status", status}}.dump() + "\n", kJson);
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump() + "\n", kJson);
}

json parse_body(const httplib::Request& req) {
    auto body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) throw RequestError(400, "request body is not valid JSON");
    return body;
}

std::string mesh_id_field(const json& body) {
    if (!body.is_object() || !body.contains("mesh_id") || !body.at("mesh_id").is_string())
        throw RequestError(400, "'mesh_id' must be a string");
    return body.at("mesh_id").get<std::string>();
}

json rows_json(const std::vector<TraceRow>& rows, std::size_t begin, std::size_t end) {
    json a = json::array();
    for (std::size_t i = begin; i < end; ++i) a.push_back(to_json(rows[i]));
    return a;
}

std::string sse_event(const std::string& event, const json& data) {
    return fmt::format("event: {}\ndata: {}\n\n", event, data.dump());
}

// Runs a handler, turning typed errors into status codes.
template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const RequestError& e) {
            send_error(res, e.status, e.what());
        } catch (const InvalidArgument& e) {
            send_error(res, 400, e.what());
        }
    };
}

}  // namespace

struct Server::Impl {
    httplib::Server http;
    std::atomic<bool> stopping{false};
};

Server::Server(ServiceConfig config, std::shared_ptr<const ModelBundle> model)
    : impl_(std::make_unique<Impl>()), jobs_(std::make_unique<JobManager>(std::move(config), std::move(model))) {
    auto& http = impl_->http;
    JobManager* jobs = jobs_.get();
    Impl* impl = impl_.get();

    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string msg = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            msg = e.what();
        } catch (...) {
        }
        send_error(res, 500, msg);
    });

    http.Get("/api/v1/health", guarded([jobs](const httplib::Request&, httplib::Response& res) {
                 send_json(res, 200,
                           {{"status", "ok"},
                            {"checkpoint_loaded", jobs->can_optimize()},
                            {"drag_model_loaded", jobs->can_predict_drag()}});
             }));

    http.Post("/api/v1/optimize", guarded([jobs](const httplib::Request& req, httplib::Response& res) {
                  const auto requests = parse_optimize_request(parse_body(req), jobs->config());
                  const auto ids = jobs->submit_optimize(requests);
                  send_json(res, 202, {{"job_id", ids.front()}, {"job_ids", ids}});
              }));

    http.Get(R"(/api/v1/jobs/([^/]+))", guarded([jobs](const httplib::Request& req, httplib::Response& res) {
                 const auto job = jobs->find(req.matches[1]);
                 if (!job) throw RequestError(404, "unknown job id '" + std::string(req.matches[1]) + "'");
                 send_json(res, 200, job_record(*job));
             }));

    http.Get(R"(/api/v1/meshes/([^/]+)\.obj)", guarded([jobs](const httplib::Request& req, httplib::Response& res) {
                 res.set_content(jobs->mesh_obj(req.matches[1]), "model/obj");
             }));

    http.Post("/api/v1/drag", guarded([jobs](const httplib::Request& req, httplib::Response& res) {
                  const auto id = mesh_id_field(parse_body(req));
                  send_json(res, 200, {{"cd", jobs->predict_drag(id)}, {"mesh_id", id}});
              }));

    http.Get(R"(/api/v1/params/([^/]+))", guarded([jobs](const httplib::Request& req, httplib::Response& res) {
                 const auto p = jobs->extract(req.matches[1]);
                 send_json(res, 200,
                           {{"params", std::vector<double>(p.data(), p.data() + kNumParams)},
                            {"mesh_id", std::string(req.matches[1])}});
             }));

    // One `progress` event per rows_per_event accepted iterations, then one
    // `final` event with the remaining rows and the job record. Rows are never
    // dropped: a slow client receives the backlog as consecutive events.
    http.Get(R"(/api/v1/stream/([^/]+))", guarded([jobs, impl](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 if (!jobs->find(id)) throw RequestError(404, "unknown job id '" + id + "'");
                 const auto per_event = static_cast<std::size_t>(jobs->config().rows_per_event);
                 auto cursor = std::make_shared<std::size_t>(0);
                 res.set_header("Cache-Control", "no-cache");
                 res.set_chunked_content_provider(
                     "text/event-stream",
                     [jobs, impl, id, per_event, cursor](std::size_t, httplib::DataSink& sink) {
                         while (!impl->stopping) {
                             auto p = jobs->wait_rows(id, *cursor, per_event, std::chrono::milliseconds(200));
                             std::size_t used = 0;
                             while (p.rows.size() - used >= per_event) {
                                 const auto ev = sse_event(
                                     "progress", {{"job_id", id}, {"rows", rows_json(p.rows, used, used + per_event)}});
                                 if (!sink.write(ev.data(), ev.size())) return false;
                                 used += per_event;
                             }
                             *cursor += used;
                             if (p.finished) {
                                 json rec = job_record(*p.job);
                                 rec.erase("trace");
                                 rec["rows"] = rows_json(p.rows, used, p.rows.size());
                                 const auto ev = sse_event("final", rec);
                                 if (!sink.write(ev.data(), ev.size())) return false;
                                 sink.done();
                                 return true;
                             }
                             if (!sink.is_writable()) return false;
                         }
                         return false;
                     });
             }));
}

Server::~Server() { stop(); }

int Server::start() {
    const auto& c = jobs_->config();
    port_ = c.port == 0 ? impl_->http.bind_to_any_port(c.host) : (impl_->http.bind_to_port(c.host, c.port) ? c.port : -1);
    if (port_ < 0) throw std::runtime_error(fmt::format("cannot bind {}:{}", c.host, c.port));
    thread_ = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
    return port_;
}

void Server::stop() {
    impl_->stopping = true;
    impl_->http.stop();
    if (thread_.joinable()) thread_.join();
    jobs_->shutdown();
}

}  // namespace vsdf::service
