#include "dxe/casemodel.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <nlohmann/json.hpp>

#include "dxe/error.hpp"
#include "dxe/text.hpp"

namespace dxe {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 3> kSexNames = {"M", "F", "Unspecified"};
constexpr std::array<std::string_view, 5> kStatusNames = {"Ok", "Timeout", "ProviderError",
                                                          "TokenOverflow", "MalformedOutput"};

[[noreturn]] void bad_case(const std::string& why) { throw Error(ErrorCode::InvalidCase, why); }

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Locates the JSON payload: the first ```json fence, else a bare object.
std::optional<std::string_view> extract_block(std::string_view raw) {
  constexpr std::string_view kOpen = "```json";
  const auto open = raw.find(kOpen);
  if (open != std::string_view::npos) {
    const auto body_start = open + kOpen.size();
    const auto close = raw.find("```", body_start);
    if (close == std::string_view::npos) return std::nullopt;
    return raw.substr(body_start, close - body_start);
  }
  const auto trimmed = text::trim(raw);
  if (!trimmed.empty() && trimmed.front() == '{' && trimmed.back() == '}') return trimmed;
  return std::nullopt;
}

struct RawConfidence {
  double value = 0.0;
  bool percent_marked = false;
};

std::optional<RawConfidence> read_confidence(const json& node) {
  if (node.is_number()) return RawConfidence{node.get<double>(), false};
  if (!node.is_string()) return std::nullopt;
  auto s = text::trim(node.get_ref<const std::string&>());
  bool percent = false;
  if (!s.empty() && s.back() == '%') {
    percent = true;
    s.remove_suffix(1);
    s = text::trim(s);
  }
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
  return RawConfidence{v, percent};
}

ModelResponse malformed(ModelResponse r, std::string why) {
  r.status = ResponseStatus::MalformedOutput;
  r.candidates.clear();
  r.diagnostics = std::move(why);
  return r;
}

}  // namespace

std::string_view to_string(Sex s) { return kSexNames[static_cast<std::size_t>(s)]; }

std::optional<Sex> parse_sex(std::string_view s) {
  for (std::size_t i = 0; i < kSexNames.size(); ++i) {
    if (kSexNames[i] == s) return static_cast<Sex>(i);
  }
  return std::nullopt;
}

std::string_view to_string(ResponseStatus s) { return kStatusNames[static_cast<std::size_t>(s)]; }

std::optional<ResponseStatus> parse_response_status(std::string_view s) {
  for (std::size_t i = 0; i < kStatusNames.size(); ++i) {
    if (kStatusNames[i] == s) return static_cast<ResponseStatus>(i);
  }
  return std::nullopt;
}

void validate_case(const ClinicalCase& c) {
  if (c.case_id.empty()) bad_case("case_id: must not be empty");
  if (c.case_id.find_first_of("/\\ ") != std::string::npos || c.case_id.front() == '.') {
    bad_case("case_id: must not contain path separators or spaces");
  }
  if (text::trim(c.narrative).empty()) bad_case("narrative: must not be empty");
  if (c.demographics.age && (*c.demographics.age < 0 || *c.demographics.age > 130)) {
    bad_case("demographics.age: " + std::to_string(*c.demographics.age) + " outside [0, 130]");
  }
}

ClinicalCase parse_case_document(std::string_view text) {
  YAML::Node doc;
  try {
    doc = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::InvalidDocument, std::string("case document: ") + e.what());
  }
  if (!doc.IsMap()) throw Error(ErrorCode::InvalidDocument, "case document: expected a mapping");
  const auto version = doc["schema_version"];
  if (!version || version.as<std::string>() != std::to_string(kCaseSchemaVersion)) {
    throw Error(ErrorCode::InvalidDocument, "case document: schema_version must be " +
                                                std::to_string(kCaseSchemaVersion));
  }
  const auto str = [&](const YAML::Node& node, const char* key) -> std::string {
    const auto n = node[key];
    if (!n || n.IsNull()) return {};
    if (!n.IsScalar()) bad_case(std::string(key) + ": expected a scalar");
    return n.as<std::string>();
  };

  ClinicalCase c;
  c.case_id = str(doc, "case_id");
  c.title = str(doc, "title");
  c.narrative = str(doc, "narrative");
  if (const auto demo = doc["demographics"]) {
    if (!demo.IsMap()) bad_case("demographics: expected a mapping");
    if (const auto age = demo["age"]; age && !age.IsNull()) {
      try {
        c.demographics.age = age.as<int>();
      } catch (const YAML::Exception&) {
        bad_case("demographics.age: expected an integer");
      }
    }
    const auto sex = str(demo, "sex");
    if (!sex.empty()) {
      auto s = parse_sex(sex);
      if (!s) bad_case("demographics.sex: '" + sex + "' is not M, F or Unspecified");
      c.demographics.sex = *s;
    }
    c.demographics.origin = str(demo, "origin");
    c.demographics.social_context = str(demo, "social_context");
  }
  if (const auto tags = doc["tags"]) {
    if (!tags.IsSequence()) bad_case("tags: expected a list");
    for (const auto& t : tags) c.tags.insert(t.as<std::string>());
  }
  validate_case(c);
  return c;
}

std::string write_case_document(const ClinicalCase& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "schema_version" << YAML::Value << kCaseSchemaVersion;
  out << YAML::Key << "case_id" << YAML::Value << c.case_id;
  out << YAML::Key << "title" << YAML::Value << c.title;
  // A literal block always reads back with a trailing newline, so only
  // narratives that already end in one are written that way.
  out << YAML::Key << "narrative" << YAML::Value;
  if (c.narrative.ends_with('\n')) out << YAML::Literal;
  out << c.narrative;
  out << YAML::Key << "demographics" << YAML::Value << YAML::BeginMap;
  if (c.demographics.age) out << YAML::Key << "age" << YAML::Value << *c.demographics.age;
  out << YAML::Key << "sex" << YAML::Value << std::string(to_string(c.demographics.sex));
  out << YAML::Key << "origin" << YAML::Value << c.demographics.origin;
  out << YAML::Key << "social_context" << YAML::Value << c.demographics.social_context;
  out << YAML::EndMap;
  out << YAML::Key << "tags" << YAML::Value << YAML::BeginSeq;
  for (const auto& t : c.tags) out << t;
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::vector<ClinicalCase> load_case_bundle(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::Io, "case bundle directory not found: " + dir.string());
  }
  std::vector<ClinicalCase> cases;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_regular_file() || !name.ends_with(".case.yaml")) continue;
    try {
      cases.push_back(parse_case_document(text::read_file(entry.path().string())));
    } catch (const Error& e) {
      throw Error(e.code(), name + ": " + e.what());
    }
  }
  std::sort(cases.begin(), cases.end(),
            [](const ClinicalCase& a, const ClinicalCase& b) { return a.case_id < b.case_id; });
  for (std::size_t i = 1; i < cases.size(); ++i) {
    if (cases[i].case_id == cases[i - 1].case_id) {
      throw Error(ErrorCode::DuplicateId, "case " + cases[i].case_id + " appears twice in bundle");
    }
  }
  return cases;
}

bool validate_icd10(std::string_view code) {
  if (code.size() < 3) return false;
  if (!is_upper(code[0]) || !is_digit(code[1]) || !is_digit(code[2])) return false;
  if (code.size() == 3) return true;
  if (code[3] != '.') return false;
  const auto tail = code.substr(4);
  if (tail.empty() || tail.size() > 4) return false;
  return std::all_of(tail.begin(), tail.end(), [](char c) { return is_upper(c) || is_digit(c); });
}

double normalize_confidence(double value, bool percent_scale) {
  return percent_scale ? value / 100.0 : value;
}

ModelResponse parse_response(std::string_view raw_text, std::string model_id, std::string case_id) {
  ModelResponse r;
  r.model_id = std::move(model_id);
  r.case_id = std::move(case_id);
  r.raw_text = std::string(raw_text);

  const auto block = extract_block(raw_text);
  if (!block) return malformed(std::move(r), "no structured diagnosis block found");

  const json doc = json::parse(*block, nullptr, false);
  if (doc.is_discarded()) return malformed(std::move(r), "structured block is not valid JSON");
  if (!doc.is_object() || !doc.contains("diagnoses") || !doc["diagnoses"].is_array()) {
    return malformed(std::move(r), "structured block lacks a 'diagnoses' list");
  }
  const auto& items = doc["diagnoses"];
  if (items.empty()) return malformed(std::move(r), "'diagnoses' list is empty");

  std::vector<RawConfidence> confidences;
  std::vector<DiagnosisCandidate> candidates;
  std::size_t ranked = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    const auto where = "candidate " + std::to_string(i + 1);
    if (!item.is_object()) return malformed(std::move(r), where + ": not an object");

    DiagnosisCandidate c;
    if (!item.contains("label") || !item["label"].is_string() ||
        text::trim(item["label"].get_ref<const std::string&>()).empty()) {
      return malformed(std::move(r), where + ": missing label");
    }
    c.label = std::string(text::trim(item["label"].get_ref<const std::string&>()));

    const char* codes_key = item.contains("icd10") ? "icd10" : (item.contains("codes") ? "codes" : nullptr);
    if (codes_key != nullptr) {
      const auto& codes = item[codes_key];
      if (codes.is_string()) {
        c.icd10_codes.push_back(codes.get<std::string>());
      } else if (codes.is_array()) {
        for (const auto& code : codes) {
          if (!code.is_string()) return malformed(std::move(r), where + ": non-string ICD-10 code");
          c.icd10_codes.push_back(code.get<std::string>());
        }
      } else {
        return malformed(std::move(r), where + ": ICD-10 codes must be a list of strings");
      }
    }
    for (const auto& code : c.icd10_codes) {
      if (!validate_icd10(code)) {
        return malformed(std::move(r), where + ": invalid ICD-10 code '" + code +
                                           "' (expected letter, two digits, optional .XXXX)");
      }
    }

    if (!item.contains("confidence")) return malformed(std::move(r), where + ": missing confidence");
    const auto conf = read_confidence(item["confidence"]);
    if (!conf || !std::isfinite(conf->value)) {
      return malformed(std::move(r), where + ": confidence is not a number");
    }
    confidences.push_back(*conf);

    if (item.contains("rationale")) {
      if (!item["rationale"].is_string()) return malformed(std::move(r), where + ": rationale must be text");
      c.rationale = item["rationale"].get<std::string>();
    }
    if (item.contains("rank")) {
      if (!item["rank"].is_number_integer()) return malformed(std::move(r), where + ": rank must be an integer");
      c.rank = item["rank"].get<int>();
      ++ranked;
    } else {
      c.rank = static_cast<int>(i + 1);
    }
    candidates.push_back(std::move(c));
  }

  if (ranked != 0 && ranked != candidates.size()) {
    return malformed(std::move(r), "ranks given for some candidates but not all");
  }
  const bool percent_scale = std::any_of(confidences.begin(), confidences.end(), [](const RawConfidence& c) {
    return c.percent_marked || c.value > 1.0;
  });
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double v = normalize_confidence(confidences[i].value, percent_scale);
    if (v < 0.0 || v > 1.0) {
      return malformed(std::move(r), "candidate " + std::to_string(i + 1) + ": confidence out of range");
    }
    candidates[i].confidence = v;
  }

  std::sort(candidates.begin(), candidates.end(),
            [](const DiagnosisCandidate& a, const DiagnosisCandidate& b) { return a.rank < b.rank; });
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].rank != static_cast<int>(i + 1)) {
      return malformed(std::move(r), "ranks must be 1..k without gaps or duplicates");
    }
  }

  r.status = ResponseStatus::Ok;
  r.candidates = std::move(candidates);
  r.diagnostics.clear();
  return r;
}

std::string render_wire_block(std::span<const DiagnosisCandidate> candidates) {
  json items = json::array();
  for (const auto& c : candidates) {
    items.push_back(json{{"rank", c.rank},
                         {"label", c.label},
                         {"icd10", c.icd10_codes},
                         {"confidence", c.confidence},
                         {"rationale", c.rationale}});
  }
  return "```json\n" + json{{"diagnoses", items}}.dump() + "\n```\n";
}

}  // namespace dxe
