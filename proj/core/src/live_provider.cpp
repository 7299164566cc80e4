#include "dxe/live_provider.hpp"

#include <httplib.h>

#include <cstdlib>
#include <nlohmann/json.hpp>
#include <stop_token>

namespace dxe {

namespace {

constexpr std::string_view kQuerySystemPrompt =
    "You are a careful clinical reasoning assistant producing a differential diagnosis for a "
    "research ensemble. Answer only with your own assessment.";

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

std::optional<SplitUrl> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) return std::nullopt;
  const auto path_begin = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_begin);
  out.path = path_begin == std::string::npos ? "" : url.substr(path_begin);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

}  // namespace

LiveProviderConfig LiveProviderConfig::from_environment() {
  LiveProviderConfig c;
  if (const char* v = std::getenv(kBaseUrlEnv)) c.base_url = v;
  if (const char* v = std::getenv(kApiKeyEnv)) c.api_key = v;
  return c;
}

LiveProvider::LiveProvider(LiveProviderConfig config, ExchangeSink sink)
    : config_(std::move(config)), sink_(std::move(sink)) {}

ProviderReply LiveProvider::query(const ModelDescriptor& model, const ClinicalCase& c, const QueryContext& ctx) {
  const auto& ref = model.endpoint_ref.empty() ? model.model_id : model.endpoint_ref;
  return complete(ref, std::string(kQuerySystemPrompt), render_case_prompt(c), ctx);
}

ProviderReply LiveProvider::synthesize(std::string_view synthesizer_ref, std::string_view prompt,
                                       const QueryContext& ctx) {
  return complete(std::string(synthesizer_ref), "You write concise clinical summaries.", std::string(prompt), ctx);
}

ProviderReply LiveProvider::complete(const std::string& endpoint_ref, const std::string& system_prompt,
                                     const std::string& user_prompt, const QueryContext& ctx) {
  ExchangeRecord rec;
  rec.endpoint_ref = endpoint_ref;
  const auto finish = [&](ProviderReply reply) {
    rec.outcome = reply.ok() ? "ok" : std::string(to_string(reply.failure));
    if (sink_) sink_(rec);
    return reply;
  };

  if (config_.base_url.empty() || config_.api_key.empty()) {
    return finish(ProviderReply::fail(TransportFailure::Refusal,
                                      std::string("provider not configured; set ") + kBaseUrlEnv + " and " +
                                          kApiKeyEnv));
  }
  const auto url = split_url(config_.base_url);
  if (!url) return finish(ProviderReply::fail(TransportFailure::Refusal, "bad base url: " + config_.base_url));
  const std::string path = url->path + "/chat/completions";
  rec.url = url->origin + path;

  const nlohmann::json body{{"model", endpoint_ref},
                            {"max_tokens", config_.max_tokens},
                            {"messages",
                             {{{"role", "system"}, {"content", system_prompt}},
                              {{"role", "user"}, {"content", user_prompt}}}}};
  rec.request_body = body.dump();

  httplib::Client client(url->origin);
  client.set_connection_timeout(ctx.timeout);
  client.set_read_timeout(ctx.timeout);
  client.set_write_timeout(ctx.timeout);
  client.set_bearer_token_auth(config_.api_key);
  std::stop_callback cancel(ctx.stop, [&client] { client.stop(); });

  std::string received;
  bool overflow = false;
  httplib::Request req;
  req.method = "POST";
  req.path = path;
  req.body = rec.request_body;
  req.set_header("Content-Type", "application/json");
  req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
    if (received.size() + len > config_.max_response_bytes) {
      overflow = true;
      return false;
    }
    received.append(data, len);
    return true;
  };
  auto res = client.send(req);
  if (overflow) {
    rec.response_body = received;
    return finish(ProviderReply::fail(TransportFailure::Overflow, "response exceeded max_response_bytes"));
  }
  if (!res) {
    const auto err = res.error();
    if (ctx.stop.stop_requested()) return finish(ProviderReply::fail(TransportFailure::Timeout, "cancelled"));
    if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
      return finish(ProviderReply::fail(TransportFailure::Timeout, httplib::to_string(err)));
    }
    return finish(ProviderReply::fail(TransportFailure::Network, httplib::to_string(err)));
  }
  rec.http_status = res->status;
  rec.response_body = received.empty() ? res->body : received;
  if (res->status == 429 || res->status >= 500) {
    return finish(ProviderReply::fail(TransportFailure::Network, "HTTP " + std::to_string(res->status)));
  }
  if (res->status >= 400) {
    return finish(ProviderReply::fail(TransportFailure::Refusal, "HTTP " + std::to_string(res->status)));
  }

  const auto doc = nlohmann::json::parse(rec.response_body, nullptr, false);
  if (doc.is_discarded() || !doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
    return finish(ProviderReply::fail(TransportFailure::Refusal, "unexpected response shape"));
  }
  const auto& choice = doc["choices"][0];
  if (choice.value("finish_reason", "") == "length") {
    return finish(ProviderReply::fail(TransportFailure::Overflow, "finish_reason=length"));
  }
  const auto* content = choice.contains("message") ? &choice["message"] : nullptr;
  if (content == nullptr || !content->contains("content") || !(*content)["content"].is_string()) {
    return finish(ProviderReply::fail(TransportFailure::Refusal, "no message content"));
  }
  return finish(ProviderReply::success((*content)["content"].get<std::string>()));
}

}  // namespace dxe
