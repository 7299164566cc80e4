#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "dxe/casemodel.hpp"
#include "dxe/registry.hpp"

// Stage-one fan-out: the same case goes to every selected model at once,
// each with its own timeout and retry budget, bounded by max_parallel.
namespace dxe {

using Millis = std::chrono::milliseconds;

struct QueryPlan {
  std::string case_id;
  std::vector<std::string> model_ids;
  Millis per_model_timeout{30000};
  int max_retries = 1;
  int max_parallel = 8;
  std::uint64_t seed = 0;
  // Optional budget for the whole fan-out; unfinished models become Timeout.
  std::optional<Millis> deadline;

  bool operator==(const QueryPlan&) const = default;
};

// Throws Error(PlanInvalid).
void validate_plan(const QueryPlan& plan);

enum class TransportFailure { Timeout, Overflow, Refusal, Network };

std::string_view to_string(TransportFailure f);

struct ProviderReply {
  std::optional<std::string> text;
  TransportFailure failure = TransportFailure::Network;
  std::string detail;
  // Providers that model latency (the simulator) report it here so runs
  // stay reproducible; otherwise the gateway measures wall time.
  std::optional<std::int64_t> reported_latency_ms;

  bool ok() const { return text.has_value(); }

  static ProviderReply success(std::string body, std::optional<std::int64_t> latency = std::nullopt) {
    ProviderReply r;
    r.text = std::move(body);
    r.reported_latency_ms = latency;
    return r;
  }
  static ProviderReply fail(TransportFailure f, std::string why) {
    ProviderReply r;
    r.failure = f;
    r.detail = std::move(why);
    return r;
  }
};

// Per-attempt context handed to providers. Implementations should return
// promptly once `stop` is requested; the gateway requests it on timeout.
struct QueryContext {
  Millis timeout{30000};
  std::uint64_t seed = 0;
  int attempt = 0;
  std::stop_token stop;
};

// Abstracts a live API and the simulated population alike. Must be safe to
// call concurrently and must never throw; failures are classified.
class ProviderPort {
 public:
  virtual ~ProviderPort() = default;
  virtual ProviderReply query(const ModelDescriptor& model, const ClinicalCase& c,
                              const QueryContext& ctx) = 0;
};

struct FanoutResult {
  std::string case_id;
  std::vector<ModelResponse> responses;  // one per planned model, by model_id
  Millis wall_time{0};
  QueryPlan plan_echo;
};

// Runs `call` on a worker thread and waits at most `timeout` for it. On
// expiry the stop token is triggered and a Timeout reply is returned
// without waiting for the worker to finish. Exceptions become Network
// failures.
ProviderReply call_with_deadline(std::function<ProviderReply(std::stop_token)> call, Millis timeout);

// Throws Error(PlanInvalid) if the plan is malformed or names a model the
// snapshot does not know. Per-model failures are data in the result.
//
// Retries apply only to Network failures. Timeout maps to status Timeout,
// Overflow to TokenOverflow, Refusal and exhausted Network retries to
// ProviderError. A timed-out query keeps its concurrency slot until the
// provider actually returns, so at most max_parallel queries are ever
// inside the provider.
FanoutResult execute_fanout(const QueryPlan& plan, const ClinicalCase& c,
                            const RegistrySnapshot& registry,
                            const std::shared_ptr<ProviderPort>& provider);

// Canonical machine form; excludes wall_time so seeded runs compare
// byte-for-byte. Wall time belongs in run timings.
std::string serialize_fanout(const FanoutResult& result);

// Default prompt sent to each model for a case.
std::string render_case_prompt(const ClinicalCase& c);

}  // namespace dxe
