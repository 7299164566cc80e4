#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dxe {

enum class ErrorCode {
  DuplicateId,
  InvalidDescriptor,
  InvalidCase,
  InvalidDocument,
  InvalidLexicon,
  NotFound,
  EmptyInput,
  PlanInvalid,
  ChainInvalid,
  NoResponders,
  ProfileInvalid,
  SpecInvalid,
  CaseNotFound,
  NoModelsSelected,
  SubsetNotInRun,
  StoreConflict,
  Io,
};

std::string_view to_string(ErrorCode code);

// All operation-level failures surface as dxe::Error. Per-model query
// failures are never thrown; they are encoded in ModelResponse::status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dxe
