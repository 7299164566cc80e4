#include "dxe/http_api.hpp"

#include <httplib.h>

#include <condition_variable>
#include <map>
#include <mutex>
#include <thread>

#include "dxe/error.hpp"
#include "dxe/json_io.hpp"
#include "dxe/text.hpp"

namespace dxe {

namespace {

[[noreturn]] void bad_body(const std::string& why) { throw Error(ErrorCode::InvalidDocument, why); }

template <typename T, typename Parse>
std::set<T> enum_set(const json& j, const char* name, Parse parse) {
  std::set<T> out;
  if (!j.at(name).is_array()) bad_body(std::string(name) + " must be an array");
  for (const auto& v : j.at(name)) {
    if (!v.is_string()) bad_body(std::string(name) + " entries must be strings");
    const auto parsed = parse(v.get<std::string>());
    if (!parsed) bad_body(std::string(name) + ": unknown value \"" + v.get<std::string>() + "\"");
    out.insert(*parsed);
  }
  return out;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, json{{"error", {{"code", code}, {"message", message}}}});
}

json parse_body(const httplib::Request& req) {
  const auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded()) bad_body("request body is not valid JSON");
  if (!j.is_object()) bad_body("request body must be a JSON object");
  return j;
}

}  // namespace

ModelFilter model_filter_from_json(const json& j) {
  ModelFilter f;
  if (j.is_null()) return f;
  if (!j.is_object()) bad_body("filter must be an object");
  try {
    if (j.contains("regions")) f.regions = enum_set<Region>(j, "regions", parse_region);
    if (j.contains("cost_tiers")) f.cost_tiers = enum_set<CostTier>(j, "cost_tiers", parse_cost_tier);
    if (j.contains("ids")) f.ids = j.at("ids").get<std::set<std::string>>();
    if (j.contains("enabled_only")) f.enabled_only = j.at("enabled_only").get<bool>();
    if (j.contains("min_release_date")) {
      f.min_release_date = parse_date(j.at("min_release_date").get<std::string>());
      if (!f.min_release_date) bad_body("min_release_date must be YYYY-MM-DD");
    }
  } catch (const json::exception& e) {
    bad_body(std::string("filter: ") + e.what());
  }
  return f;
}

RunRequest run_request_from_json(const json& j) {
  if (!j.is_object()) bad_body("run request must be an object");
  RunRequest r;
  try {
    if (!j.contains("case_id") || !j.at("case_id").is_string()) bad_body("case_id is required");
    r.case_id = j.at("case_id").get<std::string>();
    if (j.contains("filter")) r.filter = model_filter_from_json(j.at("filter"));
    if (j.contains("chain")) r.chain = j.at("chain").get<std::vector<ChainEntry>>();
    if (j.contains("provider")) r.provider = j.at("provider").get<std::string>();
    if (j.contains("seed") && !j.at("seed").is_null()) r.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("per_model_timeout_ms")) r.per_model_timeout = Millis{j.at("per_model_timeout_ms").get<std::int64_t>()};
    if (j.contains("max_retries")) r.max_retries = j.at("max_retries").get<int>();
    if (j.contains("max_parallel")) r.max_parallel = j.at("max_parallel").get<int>();
    if (j.contains("deadline_ms") && !j.at("deadline_ms").is_null()) {
      r.deadline = Millis{j.at("deadline_ms").get<std::int64_t>()};
    }
  } catch (const json::exception& e) {
    bad_body(std::string("run request: ") + e.what());
  }
  return r;
}

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound:
    case ErrorCode::CaseNotFound: return 404;
    case ErrorCode::DuplicateId:
    case ErrorCode::SubsetNotInRun:
    case ErrorCode::StoreConflict: return 409;
    case ErrorCode::Io: return 500;
    default: return 422;
  }
}

struct HttpApi::Impl {
  Orchestrator& orch;
  httplib::Server server;

  std::mutex jobs_mutex;
  std::condition_variable jobs_cv;
  std::map<std::string, std::string> failed;  // run id -> error, for runs that left no record
  std::set<std::string> running;
  std::vector<std::thread> workers;

  explicit Impl(Orchestrator& o) : orch(o) { routes(); }

  ~Impl() {
    server.stop();
    for (auto& t : workers) {
      if (t.joinable()) t.join();
    }
  }

  template <typename F>
  httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, http_status_for(e.code()), to_string(e.code()), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what());
      }
    };
  }

  void submit(PreparedRun run) {
    {
      std::lock_guard lock(jobs_mutex);
      running.insert(run.run_id);
    }
    workers.emplace_back([this, run = std::move(run)] {
      std::string error;
      try {
        orch.execute(run);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoResponders) error = e.what();
      } catch (const std::exception& e) {
        error = e.what();
      }
      std::lock_guard lock(jobs_mutex);
      running.erase(run.run_id);
      if (!error.empty()) failed[run.run_id] = error;
      jobs_cv.notify_all();
    });
  }

  bool is_running(const std::string& id) {
    std::lock_guard lock(jobs_mutex);
    return running.count(id) != 0;
  }

  void routes() {
    server.Post("/v1/cases", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      ClinicalCase c;
      try {
        c = body.get<ClinicalCase>();
      } catch (const json::exception& e) {
        bad_body(std::string("case: ") + e.what());
      }
      orch.cases().add(c);
      send_json(res, 201, json{{"case_id", c.case_id}});
    }));

    server.Get("/v1/cases", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, json{{"cases", orch.cases().list()}});
    }));

    server.Get("/v1/models", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, json{{"models", orch.registry().snapshot().models()}});
    }));

    server.Post("/v1/runs", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto run = orch.prepare(run_request_from_json(parse_body(req)));
      const auto id = run.run_id;
      submit(std::move(run));
      send_json(res, 202, json{{"run_id", id}, {"status", "running"}});
    }));

    server.Get("/v1/runs", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, json{{"runs", orch.store().list()}});
    }));

    server.Get(R"(/v1/runs/([A-Za-z0-9._-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (is_running(id)) {
        send_json(res, 200, json{{"run_id", id}, {"status", "running"}});
        return;
      }
      {
        std::lock_guard lock(jobs_mutex);
        if (const auto it = failed.find(id); it != failed.end()) {
          send_json(res, 200, json{{"run_id", id}, {"status", "failed"}, {"error", it->second}});
          return;
        }
      }
      send_json(res, 200, run_record_to_json(orch.store().load(id)));
    }));

    server.Get(R"(/v1/runs/([A-Za-z0-9._-]+)/report)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 if (is_running(id)) {
                   send_error(res, 409, "Running", "run " + id + " has not finished");
                   return;
                 }
                 const auto rec = orch.store().load(id);
                 if (!rec.report) {
                   send_error(res, 404, "NoResponders", "run " + id + " produced no report");
                   return;
                 }
                 if (req.get_param_value("format") == "text") {
                   res.status = 200;
                   res.set_content(render_report_text(*rec.report), "text/plain; charset=utf-8");
                   return;
                 }
                 send_json(res, 200, json(*rec.report));
               }));

    server.Post(R"(/v1/runs/([A-Za-z0-9._-]+)/restratify)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  if (!orch.store().contains(id)) throw Error(ErrorCode::NotFound, "run " + id + " not found");
                  const auto body = parse_body(req);
                  if (!body.contains("model_ids") || !body.at("model_ids").is_array()) {
                    bad_body("model_ids must be an array of model ids");
                  }
                  std::set<std::string> ids;
                  for (const auto& v : body.at("model_ids")) {
                    if (!v.is_string()) bad_body("model_ids entries must be strings");
                    ids.insert(v.get<std::string>());
                  }
                  send_json(res, 200, restratify_to_json(orch.restratify(id, ids)));
                }));

    server.Get("/v1/metrics", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::vector<std::string> ids;
      if (req.has_param("runs")) {
        for (auto& id : text::split(req.get_param_value("runs"), ',')) {
          const auto t = text::trim(id);
          if (!t.empty()) ids.emplace_back(t);
        }
      } else {
        ids = orch.store().list();
      }
      const auto m = orch.batch_metrics(ids);
      if (req.get_param_value("format") == "text") {
        res.status = 200;
        res.set_content(render_metrics_text(m), "text/plain; charset=utf-8");
        return;
      }
      send_json(res, 200, metrics_to_json(m));
    }));
  }
};

HttpApi::HttpApi(Orchestrator& orchestrator) : impl_(std::make_unique<Impl>(orchestrator)) {}

HttpApi::~HttpApi() = default;

int HttpApi::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpApi::serve() { return impl_->server.listen_after_bind(); }

void HttpApi::stop() { impl_->server.stop(); }

void HttpApi::wait_for_jobs() {
  std::unique_lock lock(impl_->jobs_mutex);
  impl_->jobs_cv.wait(lock, [this] { return impl_->running.empty(); });
}

}  // namespace dxe
