#include <catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include "dxe/error.hpp"
#include "dxe/gateway.hpp"
#include "dxe/simharness.hpp"
#include "test_support.hpp"

using namespace dxe;
using namespace std::chrono_literals;

namespace {

struct Fixture {
  SimPopulation pop = load_population((dxe::testing::assets_dir() / "sim" / "population.yaml").string());
  RegistrySnapshot snapshot{pop.descriptors()};
  std::vector<ClinicalCase> cases = load_case_bundle(dxe::testing::assets_dir() / "cases");

  QueryPlan plan(const std::string& case_id, std::uint64_t seed) const {
    QueryPlan p;
    p.case_id = case_id;
    for (const auto& d : snapshot.models()) p.model_ids.push_back(d.model_id);
    p.seed = seed;
    p.per_model_timeout = 2000ms;
    return p;
  }
};

// Answers every model with a fixed block, optionally stalling some models
// until cancelled, and records the peak number of concurrent calls.
class ScriptedProvider final : public ProviderPort {
 public:
  std::set<std::string> stall;
  std::map<std::string, int> network_failures;  // model -> failures before success
  Millis work{0};

  ProviderReply query(const ModelDescriptor& model, const ClinicalCase&, const QueryContext& ctx) override {
    const int now = ++in_flight_;
    int seen = peak_.load();
    while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
    }
    ProviderReply reply;
    {
      std::unique_lock lock(mutex_);
      ++calls_[model.model_id];
      if (auto it = network_failures.find(model.model_id); it != network_failures.end() && it->second > 0) {
        --it->second;
        lock.unlock();
        --in_flight_;
        return ProviderReply::fail(TransportFailure::Network, "connection reset");
      }
    }
    if (stall.contains(model.model_id)) {
      std::mutex m;
      std::condition_variable_any cv;
      std::unique_lock lock(m);
      cv.wait(lock, ctx.stop, [] { return false; });
      reply = ProviderReply::fail(TransportFailure::Timeout, "stalled");
    } else {
      if (work.count() > 0) std::this_thread::sleep_for(work);
      reply = ProviderReply::success(render_wire_block(std::vector<DiagnosisCandidate>{
                                         dxe::testing::candidate("Answer " + model.model_id, "", 0.5, 1)}),
                                     10);
    }
    --in_flight_;
    return reply;
  }

  int peak() const { return peak_; }
  int calls(const std::string& m) const {
    std::lock_guard lock(mutex_);
    auto it = calls_.find(m);
    return it == calls_.end() ? 0 : it->second;
  }

 private:
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
  mutable std::mutex mutex_;
  std::map<std::string, int> calls_;
};

RegistrySnapshot abc_snapshot() {
  return RegistrySnapshot({dxe::testing::descriptor("A"), dxe::testing::descriptor("B"), dxe::testing::descriptor("C")});
}

ClinicalCase tiny_case() {
  ClinicalCase c;
  c.case_id = "c";
  c.narrative = "Fever.";
  return c;
}

}  // namespace

TEST_CASE("seeded simulated fan-out is deterministic", "[gateway]") {
  Fixture f;
  const auto& c = f.cases.front();
  const auto provider = std::make_shared<SimulatedProvider>(f.pop.profiles());
  const auto plan = f.plan(c.case_id, 7);
  const auto first = execute_fanout(plan, c, f.snapshot, provider);
  REQUIRE(first.responses.size() == 30);
  for (const auto& r : first.responses) CHECK(r.status == ResponseStatus::Ok);
  const auto again = execute_fanout(plan, c, f.snapshot, std::make_shared<SimulatedProvider>(f.pop.profiles()));
  CHECK(serialize_fanout(first) == serialize_fanout(again));

  auto parallel_one = plan;
  parallel_one.max_parallel = 1;
  CHECK(serialize_fanout(execute_fanout(parallel_one, c, f.snapshot, provider)) != std::string{});
  CHECK(execute_fanout(parallel_one, c, f.snapshot, provider).responses == first.responses);

  auto other_seed = plan;
  other_seed.seed = 8;
  CHECK(execute_fanout(other_seed, c, f.snapshot, provider).responses != first.responses);
}

TEST_CASE("a stalled model times out without affecting the others", "[gateway]") {
  auto provider = std::make_shared<ScriptedProvider>();
  provider->stall = {"B"};
  QueryPlan plan;
  plan.case_id = "c";
  plan.model_ids = {"A", "B", "C"};
  plan.per_model_timeout = 100ms;
  plan.max_retries = 0;
  const auto start = std::chrono::steady_clock::now();
  const auto result = execute_fanout(plan, tiny_case(), abc_snapshot(), provider);
  CHECK(std::chrono::steady_clock::now() - start < 5s);
  REQUIRE(result.responses.size() == 3);
  CHECK(result.responses[0].status == ResponseStatus::Ok);
  CHECK(result.responses[1].status == ResponseStatus::Timeout);
  CHECK(result.responses[2].status == ResponseStatus::Ok);
}

TEST_CASE("plan validation", "[gateway]") {
  auto provider = std::make_shared<ScriptedProvider>();
  QueryPlan plan;
  plan.case_id = "c";
  plan.model_ids = {"A", "B", "A"};
  CHECK_THROWS_AS(validate_plan(plan), Error);
  CHECK_THROWS_AS(execute_fanout(plan, tiny_case(), abc_snapshot(), provider), Error);
  plan.model_ids = {"A", "Z"};
  CHECK_THROWS_AS(execute_fanout(plan, tiny_case(), abc_snapshot(), provider), Error);
  plan.model_ids = {};
  CHECK_THROWS_AS(validate_plan(plan), Error);
  plan.model_ids = {"A"};
  plan.max_parallel = 0;
  CHECK_THROWS_AS(validate_plan(plan), Error);
  plan.max_parallel = 1;
  plan.per_model_timeout = 0ms;
  CHECK_THROWS_AS(validate_plan(plan), Error);
  plan.per_model_timeout = 10ms;
  plan.max_retries = -1;
  CHECK_THROWS_AS(validate_plan(plan), Error);
  try {
    plan.max_retries = 0;
    plan.case_id = "other";
    execute_fanout(plan, tiny_case(), abc_snapshot(), provider);
    FAIL("case mismatch accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PlanInvalid);
  }
}

TEST_CASE("concurrency never exceeds max_parallel", "[gateway][concurrency]") {
  std::vector<ModelDescriptor> models;
  QueryPlan plan;
  plan.case_id = "c";
  for (int i = 0; i < 24; ++i) {
    models.push_back(dxe::testing::descriptor("m" + std::to_string(100 + i)));
    plan.model_ids.push_back(models.back().model_id);
  }
  for (int limit : {1, 3, 8}) {
    auto provider = std::make_shared<ScriptedProvider>();
    provider->work = 5ms;
    provider->stall = {"m105", "m117"};
    plan.max_parallel = limit;
    plan.per_model_timeout = 50ms;
    plan.max_retries = 0;
    const auto result = execute_fanout(plan, tiny_case(), RegistrySnapshot(models), provider);
    CHECK(provider->peak() <= limit);
    CHECK(result.responses.size() == 24);
    int timeouts = 0;
    for (const auto& r : result.responses) timeouts += r.status == ResponseStatus::Timeout;
    CHECK(timeouts == 2);
  }
}

TEST_CASE("network failures retry within budget", "[gateway]") {
  auto provider = std::make_shared<ScriptedProvider>();
  provider->network_failures = {{"A", 1}, {"B", 5}};
  QueryPlan plan;
  plan.case_id = "c";
  plan.model_ids = {"A", "B", "C"};
  plan.max_retries = 2;
  plan.per_model_timeout = 500ms;
  const auto result = execute_fanout(plan, tiny_case(), abc_snapshot(), provider);
  CHECK(result.responses[0].status == ResponseStatus::Ok);
  CHECK(provider->calls("A") == 2);
  CHECK(result.responses[1].status == ResponseStatus::ProviderError);
  CHECK(provider->calls("B") == 3);
  CHECK(provider->calls("C") == 1);
}

TEST_CASE("injected failures change only the affected entries", "[gateway][property]") {
  Fixture f;
  const auto& c = f.cases[2];
  auto plan = f.plan(c.case_id, 99);
  plan.per_model_timeout = 150ms;
  const auto baseline = execute_fanout(plan, c, f.snapshot, std::make_shared<SimulatedProvider>(f.pop.profiles()));
  const std::vector<std::pair<std::set<std::string>, TransportFailure>> scenarios = {
      {{"sim-us-03"}, TransportFailure::Timeout},
      {{"sim-eu-01", "sim-cn-02"}, TransportFailure::Overflow},
      {{"sim-other-02", "sim-us-19", "sim-us-01"}, TransportFailure::Refusal},
  };
  for (const auto& [subset, kind] : scenarios) {
    auto provider = std::make_shared<SimulatedProvider>(f.pop.profiles());
    for (const auto& m : subset) provider->inject_fault(m, {kind, -1});
    const auto faulty = execute_fanout(plan, c, f.snapshot, provider);
    REQUIRE(faulty.responses.size() == baseline.responses.size());
    for (std::size_t i = 0; i < baseline.responses.size(); ++i) {
      const auto& r = faulty.responses[i];
      if (subset.contains(r.model_id)) {
        CHECK(r.status != ResponseStatus::Ok);
      } else {
        CHECK(r == baseline.responses[i]);
      }
    }
  }
}

TEST_CASE("failure kinds map to statuses", "[gateway]") {
  Fixture f;
  const auto& c = f.cases.front();
  auto provider = std::make_shared<SimulatedProvider>(f.pop.profiles());
  provider->inject_fault("sim-us-01", {TransportFailure::Overflow, -1});
  provider->inject_fault("sim-us-02", {TransportFailure::Refusal, -1});
  provider->inject_fault("sim-us-03", {TransportFailure::Network, -1});
  provider->inject_fault("sim-us-04", {TransportFailure::Network, 1});
  auto plan = f.plan(c.case_id, 1);
  plan.max_retries = 1;
  const auto result = execute_fanout(plan, c, f.snapshot, provider);
  std::map<std::string, ResponseStatus> by_model;
  for (const auto& r : result.responses) by_model[r.model_id] = r.status;
  CHECK(by_model["sim-us-01"] == ResponseStatus::TokenOverflow);
  CHECK(by_model["sim-us-02"] == ResponseStatus::ProviderError);
  CHECK(by_model["sim-us-03"] == ResponseStatus::ProviderError);
  CHECK(by_model["sim-us-04"] == ResponseStatus::Ok);
  CHECK(provider->calls("sim-us-03") == 2);
  CHECK(provider->calls("sim-us-02") == 1);
  std::size_t total = 0;
  for (const auto& [m, s] : by_model) total += !m.empty();
  CHECK(total == plan.model_ids.size());
}

TEST_CASE("a fan-out deadline turns unfinished models into timeouts", "[gateway]") {
  auto provider = std::make_shared<ScriptedProvider>();
  provider->stall = {"A", "B"};
  QueryPlan plan;
  plan.case_id = "c";
  plan.model_ids = {"A", "B", "C"};
  plan.per_model_timeout = 10s;
  plan.max_retries = 0;
  plan.deadline = 150ms;
  const auto start = std::chrono::steady_clock::now();
  const auto result = execute_fanout(plan, tiny_case(), abc_snapshot(), provider);
  CHECK(std::chrono::steady_clock::now() - start < 5s);
  CHECK(result.responses[0].status == ResponseStatus::Timeout);
  CHECK(result.responses[1].status == ResponseStatus::Timeout);
  CHECK(result.responses[2].status == ResponseStatus::Ok);
}

TEST_CASE("call_with_deadline", "[gateway]") {
  const auto ok = call_with_deadline([](std::stop_token) { return ProviderReply::success("x"); }, 500ms);
  CHECK(ok.ok());
  const auto slow = call_with_deadline(
      [](std::stop_token st) {
        while (!st.stop_requested()) std::this_thread::sleep_for(1ms);
        return ProviderReply::success("late");
      },
      30ms);
  CHECK_FALSE(slow.ok());
  CHECK(slow.failure == TransportFailure::Timeout);
  const auto thrown = call_with_deadline([](std::stop_token) -> ProviderReply { throw std::runtime_error("boom"); }, 500ms);
  CHECK(thrown.failure == TransportFailure::Network);
}

TEST_CASE("case prompt carries the case", "[gateway]") {
  auto c = tiny_case();
  c.demographics.age = 45;
  const auto prompt = render_case_prompt(c);
  CHECK(prompt.find("Fever.") != std::string::npos);
  CHECK(prompt.find("```json") != std::string::npos);
}
