#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dxe/casemodel.hpp"
#include "dxe/consensus.hpp"
#include "dxe/registry.hpp"

// Bias attribution: lexical marker counts over response text and
// descriptive per-cohort aggregation. Every rate here divides by Ok
// responses only.
namespace dxe {

// Ordered lowercase phrases. Multi-word phrases must precede any of their
// own sub-phrases so longest-match order is explicit in the asset.
class MarkerLexicon {
 public:
  MarkerLexicon() = default;
  // Throws Error(InvalidLexicon).
  MarkerLexicon(std::string name, std::vector<std::string> phrases);

  const std::string& name() const { return name_; }
  const std::vector<std::string>& phrases() const { return phrases_; }
  bool empty() const { return phrases_.empty(); }

  bool operator==(const MarkerLexicon&) const = default;

 private:
  std::string name_;
  std::vector<std::string> phrases_;
};

struct MarkerHit {
  std::size_t begin = 0;  // byte offsets into the original text
  std::size_t end = 0;
  std::size_t phrase_index = 0;
};

// Case-insensitive, word-aligned, longest-match, non-overlapping hits,
// scanning left to right. Whitespace runs in the text match a single space
// in a phrase.
std::vector<MarkerHit> find_markers(std::string_view text, const MarkerLexicon& lexicon);
int count_markers(std::string_view text, const MarkerLexicon& lexicon);

// "phrase => lexicon_name" asset; phrases keep file order per lexicon.
std::map<std::string, MarkerLexicon> parse_lexicon_asset(std::string_view content,
                                                         std::string_view source_name = "lexicons");

// The eight markers of the calibration analysis, as shipped.
MarkerLexicon default_uncertainty_lexicon();
MarkerLexicon default_confidence_lexicon();

// Counts mentions of one canonical term in a response: parsed candidates
// whose key matches, unioned with raw-text phrase hits of the term's
// lexicon. A candidate label located inside the raw text at a span that
// overlaps a phrase hit counts once.
class MentionCounter {
 public:
  MentionCounter(SynonymTable synonyms, std::map<std::string, MarkerLexicon> term_lexicons);

  int count(const ModelResponse& response, std::string_view term_key) const;

  const SynonymTable& synonyms() const { return synonyms_; }
  const std::map<std::string, MarkerLexicon>& term_lexicons() const { return term_lexicons_; }

 private:
  SynonymTable synonyms_;
  std::map<std::string, MarkerLexicon> term_lexicons_;
};

// Per region with at least one Ok response: total mentions / Ok count.
std::map<Region, double> regional_mention_rate(std::span<const ModelResponse> responses,
                                               const RegistrySnapshot& registry, std::string_view term_key,
                                               const MentionCounter& counter);

// Per anchor term: total lexicon hits across Ok responses / Ok count.
// Every anchor key is present in the result (0.0 when no Ok responses).
std::map<std::string, double> demographic_anchoring(std::span<const ModelResponse> responses,
                                                    const ClinicalCase& c,
                                                    const std::map<std::string, MarkerLexicon>& anchors);

struct TreatmentSplit {
  int aggressive = 0;
  int conservative = 0;
  int unclassified = 0;

  bool operator==(const TreatmentSplit&) const = default;
};

// Per Ok response: more aggressive hits -> aggressive, fewer -> conservative,
// equal (including none) -> unclassified.
TreatmentSplit treatment_split(std::span<const ModelResponse> responses, const MarkerLexicon& aggressive,
                               const MarkerLexicon& conservative);

struct TemporalFlags {
  std::map<std::string, int> total_mentions;  // every watched term present
  std::map<std::string, int> cases_present;   // runs with >= 1 mention
};

// Throws Error(EmptyInput) for an empty watchlist.
TemporalFlags temporal_flags(std::span<const std::vector<ModelResponse>> runs,
                             std::span<const std::string> watchlist, const MentionCounter& counter);

struct MarkerCounts {
  int uncertainty = 0;
  int confidence = 0;

  bool operator==(const MarkerCounts&) const = default;
};

struct BiasConfig {
  MarkerLexicon uncertainty;
  MarkerLexicon confidence;
  std::map<std::string, MarkerLexicon> term_lexicons;  // canonical key -> phrases
  std::vector<std::string> regional_terms;
  std::map<std::string, MarkerLexicon> anchors;
  MarkerLexicon aggressive;
  MarkerLexicon conservative;
  std::vector<std::string> temporal_watchlist;

  // Built-in marker lexicons and empty everything else.
  static BiasConfig defaults();

  // Reads a lexicon asset where lexicon names carry their role:
  //   uncertainty, confidence, aggressive, conservative,
  //   term:<key> (mention phrases, also enrolls <key> as a regional term),
  //   anchor:<name>, watch:<key> (the phrase side is ignored; lists the
  //   temporal watchlist).
  // Roles absent from the asset keep their defaults.
  static BiasConfig from_asset(std::string_view content, std::string_view source_name = "lexicons");

  // Serialized back to the asset form; from_asset(to_asset()) == *this.
  std::string to_asset() const;

  bool operator==(const BiasConfig&) const = default;
};

struct BiasFindings {
  std::string case_id;
  // Markers count over every response with text (Ok and MalformedOutput).
  int uncertainty_count = 0;
  int confidence_count = 0;
  std::map<std::string, MarkerCounts> per_model_counts;
  std::map<std::pair<std::string, Region>, double> mentions_per_model_by_region;
  std::map<std::string, double> demographic_anchoring;
  TreatmentSplit treatment_split;

  bool operator==(const BiasFindings&) const = default;
};

BiasFindings analyze_bias(const ClinicalCase& c, std::span<const ModelResponse> responses,
                          const RegistrySnapshot& registry, const BiasConfig& config,
                          const MentionCounter& counter);

}  // namespace dxe
