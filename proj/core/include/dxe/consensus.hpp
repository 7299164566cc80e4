#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dxe/casemodel.hpp"
#include "dxe/registry.hpp"

// Stage-two core: canonical diagnosis keys, tier stratification and the
// consensus statistics derived from them. Nothing here collapses the
// ensemble to a single answer.
namespace dxe {

// "alias => canonical" lines; both sides are stored label-normalized.
class SynonymTable {
 public:
  SynonymTable() = default;
  static SynonymTable parse(std::string_view content, std::string_view source_name = "synonyms");
  static SynonymTable load(const std::string& path);

  void add(std::string_view alias, std::string_view canonical);
  std::optional<std::string> lookup(std::string_view normalized_label) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

  // Round-trips through parse().
  std::string to_text() const;

 private:
  std::map<std::string, std::string> entries_;
};

// Lowercase; apostrophes dropped; other ASCII punctuation becomes a space;
// whitespace runs collapse to one space; trimmed.
std::string normalize_label(std::string_view label);

// First ICD-10 code's 3-character category ("E85.0" -> "e85"), else the
// synonym of the normalized label, else the normalized label.
std::string canonical_key(const DiagnosisCandidate& candidate, const SynonymTable& synonyms);

enum class Tier { Primary, Alternative, Minority };

std::string_view to_string(Tier t);

// Exact integer comparison: Primary iff 10*votes >= 3*n; Alternative iff
// 10*votes >= n; Minority iff votes > 0. nullopt when votes == 0.
std::optional<Tier> tier_for(int top1_votes, int responders);

struct DiagnosisStats {
  std::string key;
  std::string display_label;                  // most frequent original label
  std::optional<std::string> icd10_category;  // e.g. "E85" when code-backed
  std::set<std::string> member_labels;
  std::optional<Tier> tier;  // absent for keys that never won a top-1 vote
  double share = 0.0;        // top1_count / responding_count
  int top1_count = 0;
  int any_mention_count = 0;  // models listing the key at any rank
  std::set<std::string> supporting_models;
  std::set<std::string> top1_models;
  double mean_confidence = 0.0;  // over supporting models, best rank each

  bool operator==(const DiagnosisStats&) const = default;
};

struct StratifiedDifferential {
  std::string case_id;
  // Display order: top1_count desc, mean_confidence desc, key asc. Holds
  // every key mentioned at any rank, tiered or not.
  std::vector<DiagnosisStats> entries;
  int responding_count = 0;
  int breadth = 0;

  const DiagnosisStats* find(std::string_view key) const;
  std::vector<const DiagnosisStats*> in_tier(Tier t) const;
  std::set<std::string> keys() const;
  std::optional<std::string> leading_key() const;
  int tiered_count() const;
  int alternative_tier_count() const;  // keys in the Alternative tier
  int non_primary_count() const;       // every mentioned key outside Primary

  bool operator==(const StratifiedDifferential&) const = default;
};

// Denominator is the Ok responses only. Throws Error(NoResponders).
StratifiedDifferential stratify(std::span<const ModelResponse> responses, const SynonymTable& synonyms);

// The leading diagnosis's top-1 share. Throws Error(EmptyInput) when no
// key is tiered.
double consensus_rate(const StratifiedDifferential& diff);

// Half-up integer percent for display: 0.63333 -> 63, 0.625 -> 63.
int display_percent(double fraction);

// One-decimal half-up percent: 0.83333 -> 83.3.
double display_percent_1dp(double fraction);

int diagnostic_breadth(const StratifiedDifferential& diff);

struct BreadthStats {
  double mean = 0.0;
  int min = 0;
  int max = 0;
};

// Throws Error(EmptyInput).
BreadthStats breadth_stats(std::span<const StratifiedDifferential> runs);

struct RunOutcome {
  StratifiedDifferential differential;
  std::vector<ModelResponse> responses;
};

enum class ParticipationCategory { High, Moderate, Low };

std::string_view to_string(ParticipationCategory c);

// High iff 10*hits >= 6*cases; Moderate iff 10*hits >= 3*cases; else Low.
ParticipationCategory participation_category(int primary_hits, int cases_counted);

struct ModelParticipation {
  std::string model_id;
  int cases_counted = 0;
  int primary_tier_hits = 0;
  double participation_rate = 0.0;
  ParticipationCategory category = ParticipationCategory::Low;

  bool operator==(const ModelParticipation&) const = default;
};

// A model counts in a run only when its response there is Ok. Sorted by
// rate desc, then model_id asc.
std::vector<ModelParticipation> model_participation(std::span<const RunOutcome> runs,
                                                    const SynonymTable& synonyms);

struct CohortComparison {
  std::map<CostTier, double> by_cost_tier;
  std::map<Region, double> by_region;
};

// Unweighted mean participation rate per cohort. Throws Error(NotFound)
// for a participation whose model is missing from the snapshot.
CohortComparison cohort_comparison(std::span<const ModelParticipation> participations,
                                   const RegistrySnapshot& registry);

}  // namespace dxe
