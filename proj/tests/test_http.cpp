#include <catch_amalgamated.hpp>

#include <httplib.h>

#include <thread>

#include "dxe/http_api.hpp"
#include "dxe/json_io.hpp"
#include "dxe/live_provider.hpp"
#include "dxe/workspace.hpp"
#include "test_support.hpp"

using namespace dxe;
using json = nlohmann::json;
using namespace std::chrono_literals;

namespace {

struct Server {
  dxe::testing::TempDir dir;
  std::unique_ptr<Workspace> ws;
  std::unique_ptr<HttpApi> api;
  std::thread thread;
  int port = -1;

  Server() {
    Workspace::init(dir.path(), dxe::testing::assets_dir());
    ws = std::make_unique<Workspace>(dir.path(), dxe::testing::fixed_clock);
    api = std::make_unique<HttpApi>(ws->orchestrator());
    port = api->bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    thread = std::thread([this] { api->serve(); });
  }
  ~Server() {
    api->wait_for_jobs();
    api->stop();
    thread.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30s);
    return c;
  }

  // Submits a run and waits for its record.
  std::string run(const json& body) {
    auto c = client();
    const auto res = c.Post("/v1/runs", body.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 202);
    const auto id = json::parse(res->body).at("run_id").get<std::string>();
    api->wait_for_jobs();
    return id;
  }
};

json body_of(const httplib::Result& res) {
  REQUIRE(res);
  return json::parse(res->body);
}

}  // namespace

TEST_CASE("submitted runs are stored and retrievable", "[http]") {
  Server s;
  const auto id = s.run(json{{"case_id", "c01-fmf"}, {"seed", 7}});
  auto c = s.client();

  const auto res = c.Get("/v1/runs/" + id);
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto rec = run_record_from_json(json::parse(res->body));
  CHECK(rec.run_id == id);
  CHECK(rec.status == kRunCompleted);
  CHECK(rec.plan_echo.model_ids.size() == 30);
  CHECK(run_record_to_json(rec) == run_record_to_json(s.ws->store().load(id)));

  const auto report = c.Get("/v1/runs/" + id + "/report");
  REQUIRE(report);
  CHECK(report->status == 200);
  const auto rj = json::parse(report->body);
  CHECK(rj.at("differential").is_object());

  const auto text = c.Get("/v1/runs/" + id + "/report?format=text");
  REQUIRE(text);
  CHECK(text->status == 200);
  CHECK(text->get_header_value("Content-Type").rfind("text/plain", 0) == 0);
  CHECK(text->body.find("Primary") != std::string::npos);
}

TEST_CASE("unknown runs and malformed bodies map to 404 and 422", "[http]") {
  Server s;
  auto c = s.client();

  auto res = c.Get("/v1/runs/no-such-run");
  REQUIRE(res);
  CHECK(res->status == 404);
  CHECK(body_of(res).at("error").at("code") == "NotFound");

  CHECK(c.Get("/v1/runs/no-such-run/report")->status == 404);

  res = c.Post("/v1/runs", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);

  res = c.Post("/v1/runs", json{{"seed", 1}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);

  res = c.Post("/v1/runs", json{{"case_id", "c01-fmf"}, {"filter", {{"regions", {"Atlantis"}}}}}.dump(),
               "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);

  res = c.Post("/v1/runs", json{{"case_id", "c01-fmf"}, {"provider", "carrier-pigeon"}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);

  res = c.Post("/v1/runs", json{{"case_id", "nope"}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 404);

  // A filter that selects nothing is a validation error, not a stored run.
  res = c.Post("/v1/runs", json{{"case_id", "c01-fmf"}, {"filter", {{"ids", {"ghost"}}}}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);
  CHECK(s.ws->store().list().empty());
}

TEST_CASE("restratify over HTTP", "[http]") {
  Server s;
  const auto id = s.run(json{{"case_id", "c03-meth"}, {"seed", 11}});
  const auto rec = s.ws->store().load(id);
  auto c = s.client();

  json all = json::array();
  for (const auto& m : rec.plan_echo.model_ids) all.push_back(m);
  auto res = c.Post("/v1/runs/" + id + "/restratify", json{{"model_ids", all}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto view = json::parse(res->body);
  CHECK(view.at("differential") == json(*rec.differential));

  res = c.Post("/v1/runs/" + id + "/restratify", json{{"model_ids", {"not-in-run"}}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 409);
  CHECK(body_of(res).at("error").at("code") == "SubsetNotInRun");

  res = c.Post("/v1/runs/" + id + "/restratify", json{{"model_ids", "m1"}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);

  res = c.Post("/v1/runs/missing/restratify", json{{"model_ids", all}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 404);

  CHECK(s.ws->store().list() == std::vector<std::string>{id});
}

TEST_CASE("run listing, metrics and catalogues", "[http]") {
  Server s;
  const auto a = s.run(json{{"case_id", "c01-fmf"}, {"seed", 1}});
  const auto b = s.run(json{{"case_id", "c02-lewy"}, {"seed", 2}});
  auto c = s.client();

  const auto runs = body_of(c.Get("/v1/runs")).at("runs").get<std::vector<std::string>>();
  CHECK(runs == std::vector<std::string>{a, b});
  CHECK(std::is_sorted(runs.begin(), runs.end()));

  const auto metrics = body_of(c.Get("/v1/metrics"));
  CHECK(metrics.at("cases").size() == 2);
  const auto one = body_of(c.Get("/v1/metrics?runs=" + a));
  CHECK(one.at("cases").size() == 1);
  CHECK(c.Get("/v1/metrics?runs=ghost")->status == 404);
  const auto text = c.Get("/v1/metrics?format=text");
  REQUIRE(text);
  CHECK(text->status == 200);
  CHECK_FALSE(text->body.empty());

  CHECK(body_of(c.Get("/v1/models")).at("models").size() == 30);
  CHECK(body_of(c.Get("/v1/cases")).at("cases").size() == 12);
}

TEST_CASE("cases can be added over HTTP", "[http]") {
  Server s;
  auto c = s.client();
  const json doc{{"case_id", "x01-new"},
                 {"title", "New case"},
                 {"narrative", "A 40-year-old with fever and a rash."},
                 {"demographics", {{"age", 40}, {"sex", "F"}}}};
  auto res = c.Post("/v1/cases", doc.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  CHECK(s.ws->cases().find("x01-new"));

  res = c.Post("/v1/cases", doc.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 409);

  auto bad = doc;
  bad["case_id"] = "x02-bad";
  bad["narrative"] = "";
  res = c.Post("/v1/cases", bad.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);

  const auto id = s.run(json{{"case_id", "x01-new"}, {"seed", 3}});
  CHECK(s.ws->store().load(id).case_snapshot.case_id == "x01-new");
}

TEST_CASE("request body decoding", "[http]") {
  const auto r = run_request_from_json(json{{"case_id", "c"},
                                            {"seed", 9},
                                            {"provider", "sim"},
                                            {"per_model_timeout_ms", 500},
                                            {"max_retries", 2},
                                            {"max_parallel", 3},
                                            {"deadline_ms", 4000},
                                            {"filter", {{"regions", {"US", "China"}}, {"cost_tiers", {"Paid"}}}}});
  CHECK(r.case_id == "c");
  CHECK(r.seed == 9u);
  CHECK(r.per_model_timeout == Millis{500});
  CHECK(r.max_retries == 2);
  CHECK(r.max_parallel == 3);
  CHECK(r.deadline == Millis{4000});
  CHECK(r.filter.regions == std::set<Region>{Region::US, Region::China});
  CHECK(r.filter.cost_tiers == std::set<CostTier>{CostTier::Paid});

  CHECK_THROWS_AS(run_request_from_json(json{{"case_id", 3}}), Error);
  CHECK_THROWS_AS(model_filter_from_json(json{{"min_release_date", "yesterday"}}), Error);
  CHECK_THROWS_AS(model_filter_from_json(json::array()), Error);

  CHECK(http_status_for(ErrorCode::NotFound) == 404);
  CHECK(http_status_for(ErrorCode::SubsetNotInRun) == 409);
  CHECK(http_status_for(ErrorCode::PlanInvalid) == 422);
}

// Live provider against a local stand-in endpoint.

namespace {

struct FakeEndpoint {
  httplib::Server server;
  std::thread thread;
  int port = -1;
  std::string seen_auth;
  std::string seen_body;
  std::mutex mutex;

  explicit FakeEndpoint(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server.Post("/api/v1/chat/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mutex);
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
      }
      handler(req, res);
    });
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeEndpoint() {
    server.stop();
    thread.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port) + "/api/v1"; }
};

json completion(const std::string& content, const std::string& finish = "stop") {
  return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}, {"finish_reason", finish}}}}};
}

struct Captured {
  std::vector<ExchangeRecord> records;
  ExchangeSink sink() {
    return [this](const ExchangeRecord& r) { records.push_back(r); };
  }
};

ClinicalCase small_case() {
  ClinicalCase c;
  c.case_id = "live-1";
  c.narrative = "Recurrent fevers with serositis.";
  return c;
}

QueryContext ctx_with(Millis timeout) {
  QueryContext ctx;
  ctx.timeout = timeout;
  return ctx;
}

constexpr const char* kSecret = "sk-test-0123456789";

}  // namespace

TEST_CASE("live provider returns message content and never records the key", "[live]") {
  FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) {
    res.set_content(completion("```json\n{\"differential\": []}\n```").dump(), "application/json");
  });
  Captured cap;
  LiveProvider p({ep.base_url(), kSecret}, cap.sink());
  const auto model = dxe::testing::descriptor("vendor/model-a");
  const auto reply = p.query(model, small_case(), ctx_with(Millis{5000}));
  REQUIRE(reply.ok());
  CHECK(reply.text->find("differential") != std::string::npos);

  CHECK(ep.seen_auth == std::string("Bearer ") + kSecret);
  const auto sent = json::parse(ep.seen_body);
  CHECK(sent.at("model") == "sim:vendor/model-a");
  CHECK(sent.at("messages").size() == 2);

  REQUIRE(cap.records.size() == 1);
  const auto& rec = cap.records.front();
  CHECK(rec.outcome == "ok");
  CHECK(rec.http_status == 200);
  for (const auto* field : {&rec.url, &rec.request_body, &rec.response_body, &rec.endpoint_ref}) {
    CHECK(field->find(kSecret) == std::string::npos);
  }
}

TEST_CASE("live provider classifies transport failures", "[live]") {
  const auto model = dxe::testing::descriptor("m");

  SECTION("unreachable host is a network failure") {
    // Nothing listens on port 1 and connecting there is refused outright.
    LiveProvider p({"http://127.0.0.1:1/api/v1", kSecret});
    const auto reply = p.query(model, small_case(), ctx_with(Millis{2000}));
    CHECK_FALSE(reply.ok());
    CHECK(reply.failure == TransportFailure::Network);
  }

  SECTION("oversized body is an overflow") {
    FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) {
      res.set_content(completion(std::string(64 * 1024, 'x')).dump(), "application/json");
    });
    Captured cap;
    LiveProviderConfig cfg{ep.base_url(), kSecret};
    cfg.max_response_bytes = 4096;
    LiveProvider p(cfg, cap.sink());
    const auto reply = p.query(model, small_case(), ctx_with(Millis{5000}));
    CHECK(reply.failure == TransportFailure::Overflow);
    REQUIRE(cap.records.size() == 1);
    CHECK(cap.records.front().response_body.size() <= 4096);
  }

  SECTION("finish_reason length is an overflow") {
    FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) {
      res.set_content(completion("cut off", "length").dump(), "application/json");
    });
    LiveProvider p({ep.base_url(), kSecret});
    CHECK(p.query(model, small_case(), ctx_with(Millis{5000})).failure == TransportFailure::Overflow);
  }

  SECTION("429 and 5xx are retryable network failures, other 4xx refusals") {
    for (const auto& [status, expected] : std::vector<std::pair<int, TransportFailure>>{
             {429, TransportFailure::Network},
             {503, TransportFailure::Network},
             {400, TransportFailure::Refusal},
             {403, TransportFailure::Refusal}}) {
      FakeEndpoint ep([status = status](const httplib::Request&, httplib::Response& res) {
        res.status = status;
        res.set_content("{}", "application/json");
      });
      LiveProvider p({ep.base_url(), kSecret});
      const auto reply = p.query(model, small_case(), ctx_with(Millis{5000}));
      CHECK_FALSE(reply.ok());
      CHECK(reply.failure == expected);
    }
  }

  SECTION("slow endpoint times out") {
    FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(800ms);
      res.set_content(completion("late").dump(), "application/json");
    });
    LiveProvider p({ep.base_url(), kSecret});
    CHECK(p.query(model, small_case(), ctx_with(Millis{150})).failure == TransportFailure::Timeout);
  }

  SECTION("unexpected shape is a refusal") {
    FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"choices": []})", "application/json");
    });
    LiveProvider p({ep.base_url(), kSecret});
    CHECK(p.query(model, small_case(), ctx_with(Millis{5000})).failure == TransportFailure::Refusal);
  }

  SECTION("missing configuration refuses without a request") {
    LiveProvider p({"", ""});
    const auto reply = p.query(model, small_case(), ctx_with(Millis{100}));
    CHECK(reply.failure == TransportFailure::Refusal);
    CHECK(reply.detail.find(kApiKeyEnv) != std::string::npos);
  }
}

TEST_CASE("live provider serves as a synthesizer", "[live]") {
  FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) {
    res.set_content(completion("Ensemble summary.").dump(), "application/json");
  });
  LiveProvider p({ep.base_url(), kSecret});
  const auto reply = p.synthesize("vendor/writer", "Summarize this.", ctx_with(Millis{5000}));
  REQUIRE(reply.ok());
  CHECK(*reply.text == "Ensemble summary.");
  CHECK(json::parse(ep.seen_body).at("model") == "vendor/writer");
}
