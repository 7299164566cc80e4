#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "dxe/error.hpp"
#include "dxe/service.hpp"

// JSON HTTP surface under /v1. Runs submitted over HTTP execute on a
// background thread; GET /v1/runs/{id} reports "running" until the record
// is stored.
namespace dxe {

// Throws Error(InvalidDocument) on malformed bodies.
ModelFilter model_filter_from_json(const nlohmann::json& j);
RunRequest run_request_from_json(const nlohmann::json& j);

// HTTP status for an operation error.
int http_status_for(ErrorCode code);

class HttpApi {
 public:
  explicit HttpApi(Orchestrator& orchestrator);
  ~HttpApi();
  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  // Binds without serving; port 0 picks a free port. Returns the bound port
  // or -1.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  bool serve();
  void stop();
  // Blocks until every submitted run has finished.
  void wait_for_jobs();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dxe
