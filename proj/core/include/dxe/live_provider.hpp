#pragma once

#include <cstddef>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dxe/gateway.hpp"
#include "dxe/synthesis.hpp"

namespace dxe {

inline constexpr const char* kBaseUrlEnv = "DXE_PROVIDER_BASE_URL";
inline constexpr const char* kApiKeyEnv = "DXE_API_KEY";

struct LiveProviderConfig {
  std::string base_url;  // e.g. https://openrouter.ai/api/v1
  std::string api_key;
  std::size_t max_response_bytes = 256 * 1024;
  int max_tokens = 2048;

  // Reads DXE_PROVIDER_BASE_URL and DXE_API_KEY. Missing variables leave
  // the fields empty; the provider then fails every query as a refusal.
  static LiveProviderConfig from_environment();
};

// One request/response pair as sent over the wire. The authorization
// header value is never recorded.
struct ExchangeRecord {
  std::string endpoint_ref;
  std::string url;
  std::string request_body;
  int http_status = 0;
  std::string response_body;
  std::string outcome;  // "ok" or a TransportFailure name
};

using ExchangeSink = std::function<void(const ExchangeRecord&)>;

// HTTP JSON chat-completion client for an aggregator endpoint. Also serves
// as a synthesizer for chain entries naming a model endpoint.
//
// Classification: connection failures, HTTP 429 and 5xx are Network
// (retryable); other 4xx are Refusal; a body larger than
// max_response_bytes or finish_reason "length" is Overflow; exceeding the
// attempt timeout is Timeout.
class LiveProvider final : public ProviderPort, public SynthesisPort {
 public:
  explicit LiveProvider(LiveProviderConfig config, ExchangeSink sink = {});

  ProviderReply query(const ModelDescriptor& model, const ClinicalCase& c, const QueryContext& ctx) override;
  ProviderReply synthesize(std::string_view synthesizer_ref, std::string_view prompt,
                           const QueryContext& ctx) override;

 private:
  ProviderReply complete(const std::string& endpoint_ref, const std::string& system_prompt,
                         const std::string& user_prompt, const QueryContext& ctx);

  LiveProviderConfig config_;
  ExchangeSink sink_;
};

}  // namespace dxe
