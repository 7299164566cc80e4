#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Shared vocabulary: clinical cases, model responses and diagnosis
// candidates, plus the response wire format every provider is asked to emit.
namespace dxe {

enum class Sex { M, F, Unspecified };

std::string_view to_string(Sex s);
std::optional<Sex> parse_sex(std::string_view s);

struct Demographics {
  std::optional<int> age;
  Sex sex = Sex::Unspecified;
  std::string origin;
  std::string social_context;

  bool operator==(const Demographics&) const = default;
};

struct ClinicalCase {
  std::string case_id;
  std::string title;
  std::string narrative;
  Demographics demographics;
  std::set<std::string> tags;

  bool operator==(const ClinicalCase&) const = default;
};

// Throws Error(InvalidCase): empty id or narrative, age outside [0, 130].
void validate_case(const ClinicalCase& c);

inline constexpr int kCaseSchemaVersion = 1;
ClinicalCase parse_case_document(std::string_view text);
std::string write_case_document(const ClinicalCase& c);

// Loads every `*.case.yaml` in `dir`, sorted by case_id. Duplicate ids throw.
std::vector<ClinicalCase> load_case_bundle(const std::filesystem::path& dir);

// One uppercase letter, two digits, then optionally '.' and 1-4 of [A-Z0-9].
bool validate_icd10(std::string_view code);

struct DiagnosisCandidate {
  std::string label;
  std::vector<std::string> icd10_codes;
  double confidence = 0.0;  // canonical [0, 1]
  int rank = 1;             // 1 = the model's top choice
  std::string rationale;

  bool operator==(const DiagnosisCandidate&) const = default;
};

enum class ResponseStatus { Ok, Timeout, ProviderError, TokenOverflow, MalformedOutput };

std::string_view to_string(ResponseStatus s);
std::optional<ResponseStatus> parse_response_status(std::string_view s);

struct ModelResponse {
  std::string model_id;
  std::string case_id;
  ResponseStatus status = ResponseStatus::MalformedOutput;
  std::vector<DiagnosisCandidate> candidates;  // rank ascending; empty unless Ok
  std::string raw_text;                        // always preserved
  std::int64_t latency_ms = 0;
  std::string diagnostics;  // why parsing or the transport failed

  bool ok() const { return status == ResponseStatus::Ok; }
  bool operator==(const ModelResponse&) const = default;
};

// Total: never throws. Structural problems yield MalformedOutput with the
// raw text kept and the reason in `diagnostics`.
//
// Wire format: a fenced ```json block (or a bare JSON object) holding
//   {"diagnoses": [{"label", "icd10": [...], "confidence", "rationale", "rank"?}]}
// Confidences are accepted on a 0-1 or 0-100 scale: if any value in the
// block exceeds 1 or is written as "NN%", the whole block is read as
// percentages and divided by 100.
ModelResponse parse_response(std::string_view raw_text, std::string model_id, std::string case_id);

// Renders candidates as a canonical fenced block (fractional confidences,
// explicit ranks). parse_response of the result reproduces the candidates.
std::string render_wire_block(std::span<const DiagnosisCandidate> candidates);

// Maps a confidence to [0, 1] given the block scale; values already in
// [0, 1] on the fractional scale are unchanged.
double normalize_confidence(double value, bool percent_scale);

}  // namespace dxe
