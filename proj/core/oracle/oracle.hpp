#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dxe/casemodel.hpp"

// Brute-force reference implementations used only by tests. Deliberately
// written without calling into consensus or biaslens: flat loops, their own
// label normalization and a token-based phrase matcher.
namespace dxe::oracle {

// alias -> canonical, both normalized with oracle rules.
std::map<std::string, std::string> parse_synonyms(std::string_view text);

std::string key_of(const DiagnosisCandidate& c, const std::map<std::string, std::string>& synonyms);

struct Entry {
  std::string tier;  // "Primary", "Alternative", "Minority" or "" for untiered
  int top1 = 0;
  int any = 0;
  double share = 0.0;
  std::set<std::string> supporters;
};

struct Stratification {
  bool no_responders = false;
  int responders = 0;
  std::map<std::string, Entry> entries;
};

Stratification stratify(const std::vector<ModelResponse>& responses,
                        const std::map<std::string, std::string>& synonyms);

// Phrases are space-separated words. Hits are counted on word tokens;
// consecutive phrase words must be separated by whitespace only.
int count_phrases(std::string_view text, const std::vector<std::string>& phrases);

struct MarkerTotals {
  int uncertainty = 0;
  int confidence = 0;
};

// Sums over Ok and MalformedOutput responses.
MarkerTotals marker_totals(const std::vector<ModelResponse>& responses, const std::vector<std::string>& uncertainty,
                           const std::vector<std::string>& confidence);

}  // namespace dxe::oracle
