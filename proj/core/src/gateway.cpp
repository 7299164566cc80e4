#include "dxe/gateway.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <set>
#include <thread>

#include "dxe/error.hpp"

namespace dxe {

namespace {

using SteadyClock = std::chrono::steady_clock;

struct AttemptState {
  bool done = false;
  ProviderReply reply;
};

struct SharedState {
  std::mutex mu;
  std::condition_variable cv;
  int running = 0;
};

struct ActiveAttempt {
  std::size_t index = 0;
  std::shared_ptr<AttemptState> state;
  SteadyClock::time_point started;
  SteadyClock::time_point deadline;
  std::stop_source stop;
  bool abandoned = false;  // timed out; still occupying its slot
};

ResponseStatus status_for(TransportFailure f) {
  switch (f) {
    case TransportFailure::Timeout: return ResponseStatus::Timeout;
    case TransportFailure::Overflow: return ResponseStatus::TokenOverflow;
    case TransportFailure::Refusal:
    case TransportFailure::Network: return ResponseStatus::ProviderError;
  }
  return ResponseStatus::ProviderError;
}

ModelResponse failed_response(const std::string& model_id, const std::string& case_id,
                              ResponseStatus status, std::int64_t latency, std::string why) {
  ModelResponse r;
  r.model_id = model_id;
  r.case_id = case_id;
  r.status = status;
  r.latency_ms = latency;
  r.diagnostics = std::move(why);
  return r;
}

// Runs the provider on a detached thread. Everything the worker touches is
// owned through shared pointers, so a worker that outlives the fan-out
// (an abandoned, timed-out query) never dangles.
void launch(const std::shared_ptr<SharedState>& shared, const std::shared_ptr<AttemptState>& state,
            const std::shared_ptr<ProviderPort>& provider, const ModelDescriptor& model,
            const std::shared_ptr<const ClinicalCase>& clinical_case, QueryContext ctx) {
  std::thread([shared, state, provider, model, clinical_case, ctx = std::move(ctx)] {
    ProviderReply reply;
    try {
      reply = provider->query(model, *clinical_case, ctx);
    } catch (const std::exception& e) {
      reply = ProviderReply::fail(TransportFailure::Network, std::string("provider threw: ") + e.what());
    } catch (...) {
      reply = ProviderReply::fail(TransportFailure::Network, "provider threw a non-standard exception");
    }
    {
      std::lock_guard lock(shared->mu);
      state->reply = std::move(reply);
      state->done = true;
      --shared->running;
    }
    shared->cv.notify_all();
  }).detach();
}

}  // namespace

std::string_view to_string(TransportFailure f) {
  switch (f) {
    case TransportFailure::Timeout: return "timeout";
    case TransportFailure::Overflow: return "overflow";
    case TransportFailure::Refusal: return "refusal";
    case TransportFailure::Network: return "network";
  }
  return "network";
}

void validate_plan(const QueryPlan& plan) {
  if (plan.case_id.empty()) throw Error(ErrorCode::PlanInvalid, "case_id is empty");
  if (plan.model_ids.empty()) throw Error(ErrorCode::PlanInvalid, "model_ids is empty");
  std::set<std::string> seen;
  for (const auto& id : plan.model_ids) {
    if (!seen.insert(id).second) throw Error(ErrorCode::PlanInvalid, "duplicate model id " + id);
  }
  if (plan.per_model_timeout.count() <= 0) throw Error(ErrorCode::PlanInvalid, "per_model_timeout must be > 0");
  if (plan.max_parallel < 1) throw Error(ErrorCode::PlanInvalid, "max_parallel must be >= 1");
  if (plan.max_retries < 0) throw Error(ErrorCode::PlanInvalid, "max_retries must be >= 0");
  if (plan.deadline && plan.deadline->count() <= 0) throw Error(ErrorCode::PlanInvalid, "deadline must be > 0");
}

ProviderReply call_with_deadline(std::function<ProviderReply(std::stop_token)> call, Millis timeout) {
  auto shared = std::make_shared<SharedState>();
  auto state = std::make_shared<AttemptState>();
  std::stop_source stop;
  {
    std::lock_guard lock(shared->mu);
    ++shared->running;
  }
  std::thread([shared, state, call = std::move(call), token = stop.get_token()] {
    ProviderReply reply;
    try {
      reply = call(token);
    } catch (const std::exception& e) {
      reply = ProviderReply::fail(TransportFailure::Network, std::string("call threw: ") + e.what());
    } catch (...) {
      reply = ProviderReply::fail(TransportFailure::Network, "call threw a non-standard exception");
    }
    {
      std::lock_guard lock(shared->mu);
      state->reply = std::move(reply);
      state->done = true;
      --shared->running;
    }
    shared->cv.notify_all();
  }).detach();

  std::unique_lock lock(shared->mu);
  if (!shared->cv.wait_for(lock, timeout, [&] { return state->done; })) {
    stop.request_stop();
    return ProviderReply::fail(TransportFailure::Timeout,
                               "no reply within " + std::to_string(timeout.count()) + "ms");
  }
  return std::move(state->reply);
}

FanoutResult execute_fanout(const QueryPlan& plan, const ClinicalCase& c, const RegistrySnapshot& registry,
                            const std::shared_ptr<ProviderPort>& provider) {
  validate_plan(plan);
  if (!provider) throw Error(ErrorCode::PlanInvalid, "no provider");
  if (plan.case_id != c.case_id) {
    throw Error(ErrorCode::PlanInvalid, "plan is for case " + plan.case_id + ", got " + c.case_id);
  }

  std::vector<std::string> ids = plan.model_ids;
  std::sort(ids.begin(), ids.end());
  std::vector<ModelDescriptor> models;
  models.reserve(ids.size());
  for (const auto& id : ids) {
    const auto* d = registry.find(id);
    if (d == nullptr) throw Error(ErrorCode::PlanInvalid, "model " + id + " is not in the registry");
    if (!d->enabled) throw Error(ErrorCode::PlanInvalid, "model " + id + " is disabled");
    models.push_back(*d);
  }

  const auto shared_case = std::make_shared<const ClinicalCase>(c);
  auto shared = std::make_shared<SharedState>();
  const auto start = SteadyClock::now();
  const std::optional<SteadyClock::time_point> global_deadline =
      plan.deadline ? std::optional(start + *plan.deadline) : std::nullopt;

  std::vector<std::optional<ModelResponse>> finals(models.size());
  std::vector<int> attempts(models.size(), 0);
  std::deque<std::size_t> pending;
  for (std::size_t i = 0; i < models.size(); ++i) pending.push_back(i);
  std::vector<ActiveAttempt> active;
  std::size_t finalized = 0;

  const auto finalize = [&](std::size_t idx, ModelResponse r) {
    if (finals[idx]) return;
    finals[idx] = std::move(r);
    ++finalized;
  };

  std::unique_lock lock(shared->mu);
  while (finalized < models.size()) {
    const auto now = SteadyClock::now();

    if (global_deadline && now >= *global_deadline) {
      for (auto& a : active) a.stop.request_stop();
      for (std::size_t i = 0; i < models.size(); ++i) {
        finalize(i, failed_response(models[i].model_id, c.case_id, ResponseStatus::Timeout,
                                    plan.per_model_timeout.count(), "fan-out deadline reached"));
      }
      break;
    }

    while (!pending.empty() && shared->running < plan.max_parallel) {
      const auto idx = pending.front();
      pending.pop_front();
      ActiveAttempt a;
      a.index = idx;
      a.state = std::make_shared<AttemptState>();
      a.started = now;
      a.deadline = now + plan.per_model_timeout;
      QueryContext ctx{plan.per_model_timeout, plan.seed, attempts[idx], a.stop.get_token()};
      ++attempts[idx];
      ++shared->running;
      launch(shared, a.state, provider, models[idx], shared_case, std::move(ctx));
      active.push_back(std::move(a));
    }

    for (auto it = active.begin(); it != active.end();) {
      if (!it->state->done) {
        ++it;
        continue;
      }
      if (!it->abandoned) {
        const auto idx = it->index;
        const auto& model_id = models[idx].model_id;
        auto& reply = it->state->reply;
        const auto measured =
            std::chrono::duration_cast<Millis>(SteadyClock::now() - it->started).count();
        if (reply.ok()) {
          auto r = parse_response(*reply.text, model_id, c.case_id);
          r.latency_ms = reply.reported_latency_ms.value_or(measured);
          finalize(idx, std::move(r));
        } else if (reply.failure == TransportFailure::Network && attempts[idx] <= plan.max_retries) {
          pending.push_back(idx);
        } else {
          const auto latency = reply.failure == TransportFailure::Timeout
                                   ? plan.per_model_timeout.count()
                                   : reply.reported_latency_ms.value_or(measured);
          finalize(idx, failed_response(model_id, c.case_id, status_for(reply.failure), latency,
                                        std::string(to_string(reply.failure)) + " after " +
                                            std::to_string(attempts[idx]) + " attempt(s): " + reply.detail));
        }
      }
      it = active.erase(it);
    }

    for (auto& a : active) {
      if (!a.abandoned && now >= a.deadline) {
        a.abandoned = true;
        a.stop.request_stop();
        finalize(a.index, failed_response(models[a.index].model_id, c.case_id, ResponseStatus::Timeout,
                                          plan.per_model_timeout.count(),
                                          "timeout: no reply within " +
                                              std::to_string(plan.per_model_timeout.count()) + "ms"));
      }
    }

    if (finalized == models.size()) break;
    if (!pending.empty() && shared->running < plan.max_parallel) continue;

    std::optional<SteadyClock::time_point> wake = global_deadline;
    for (const auto& a : active) {
      if (!a.abandoned && (!wake || a.deadline < *wake)) wake = a.deadline;
    }
    const auto progressed = [&] {
      return std::any_of(active.begin(), active.end(), [](const ActiveAttempt& a) { return a.state->done; });
    };
    if (wake) {
      shared->cv.wait_until(lock, *wake, progressed);
    } else {
      shared->cv.wait(lock, progressed);
    }
  }
  lock.unlock();

  FanoutResult result;
  result.case_id = c.case_id;
  result.plan_echo = plan;
  result.wall_time = std::chrono::duration_cast<Millis>(SteadyClock::now() - start);
  result.responses.reserve(finals.size());
  for (auto& r : finals) result.responses.push_back(std::move(*r));
  return result;
}

std::string render_case_prompt(const ClinicalCase& c) {
  std::string p;
  p += "You are one member of a panel of independent diagnostic models. Give your own differential;\n";
  p += "do not try to guess what other models would say.\n\n";
  p += "Case: " + c.title + "\n";
  if (c.demographics.age) p += "Age: " + std::to_string(*c.demographics.age) + "\n";
  p += "Sex: " + std::string(to_string(c.demographics.sex)) + "\n";
  if (!c.demographics.origin.empty()) p += "Origin: " + c.demographics.origin + "\n";
  if (!c.demographics.social_context.empty()) p += "Social context: " + c.demographics.social_context + "\n";
  p += "\n" + c.narrative + "\n\n";
  p += "Discuss your reasoning in prose, then end with a fenced ```json block of the form\n";
  p += "{\"diagnoses\": [{\"rank\": 1, \"label\": \"...\", \"icd10\": [\"X00.0\"], \"confidence\": 0.0-1.0,\n";
  p += "\"rationale\": \"...\"}]} listing your candidates from most to least likely.\n";
  return p;
}

}  // namespace dxe
