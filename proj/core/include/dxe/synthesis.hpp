#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dxe/biaslens.hpp"
#include "dxe/consensus.hpp"
#include "dxe/gateway.hpp"

// Report assembly. All structured fields come from consensus and biaslens;
// a synthesizer only contributes advisory prose, so it can never change a
// tier or a count.
namespace dxe {

inline constexpr std::string_view kTemplateSynthesizer = "template";

struct ChainEntry {
  std::string synthesizer_ref;  // a model id, or "template"
  Millis timeout{60000};

  bool operator==(const ChainEntry&) const = default;
};

class SynthesizerChain {
 public:
  // Throws Error(ChainInvalid): empty, or "template" missing, repeated or
  // not last.
  explicit SynthesizerChain(std::vector<ChainEntry> entries);
  static SynthesizerChain template_only();

  const std::vector<ChainEntry>& entries() const { return entries_; }
  bool operator==(const SynthesizerChain&) const = default;

 private:
  std::vector<ChainEntry> entries_;
};

// Narrative generator behind a chain entry. Implementations must not throw.
class SynthesisPort {
 public:
  virtual ~SynthesisPort() = default;
  virtual ProviderReply synthesize(std::string_view synthesizer_ref, std::string_view prompt,
                                   const QueryContext& ctx) = 0;
};

struct SynthesisAttempt {
  std::string synthesizer_ref;
  std::string outcome;  // "ok", or "<failure>: detail"

  bool operator==(const SynthesisAttempt&) const = default;
};

struct ProvenanceEntry {
  std::string model_id;
  Region origin_region = Region::Other;
  double confidence = 0.0;
  int rank = 0;

  bool operator==(const ProvenanceEntry&) const = default;
};

struct EnsembleReport {
  std::string case_id;
  std::string run_id;
  std::string generated_at;  // ISO-8601 UTC
  StratifiedDifferential differential;
  BiasFindings bias_findings;
  std::string narrative;
  std::string narrative_source;
  std::map<std::string, std::vector<ProvenanceEntry>> provenance;  // key -> supporters
  std::map<std::string, ResponseStatus> response_statuses;
  std::string registry_snapshot_ref;
  std::vector<SynthesisAttempt> attempts;

  bool operator==(const EnsembleReport&) const = default;
};

struct ReportInputs {
  std::string run_id;
  std::string generated_at;
  const StratifiedDifferential* differential = nullptr;
  const BiasFindings* findings = nullptr;
  std::span<const ModelResponse> responses;
  const RegistrySnapshot* registry = nullptr;
  const SynonymTable* synonyms = nullptr;
};

// Deterministic narrative: consensus, alternatives, minority (each with
// "flagged by N models; regions: ..." lines), bias section and status
// appendix, in that order. Empty tiers are printed and marked empty.
// `statuses` feeds the status appendix and may be empty.
std::string render_template(const StratifiedDifferential& diff, const BiasFindings& findings,
                            const RegistrySnapshot& registry,
                            const std::map<std::string, ResponseStatus>& statuses = {});

// Prompt handed to LLM synthesizers. `prompt_template` may contain
// {{differential}} and {{findings}}; the default is used when empty.
std::string render_synthesis_prompt(const StratifiedDifferential& diff, const BiasFindings& findings,
                                    const std::string& prompt_template = {});

// Walks the chain in order; the first entry to return a non-empty narrative
// within its timeout wins and later entries are never contacted. The
// template entry always succeeds. `port` may be null when the chain is
// template-only; a model entry with no port fails as a refusal.
EnsembleReport build_report(const ReportInputs& inputs, const SynthesizerChain& chain,
                            const std::shared_ptr<SynthesisPort>& port, const std::string& prompt_template = {});

// Human-readable document: the structured tier listing, then the narrative.
std::string render_report_text(const EnsembleReport& report);

struct ComparisonView {
  // What a single-model system would have shown: the highest-confidence
  // top-1 candidate in the run (ties: lower model_id).
  std::string single_key;
  std::string single_label;
  std::string single_model;
  double single_confidence = 0.0;
  // The ensemble column.
  std::vector<std::string> primary_keys;
  int alternative_count = 0;
  int minority_count = 0;
  std::string ensemble_summary;
};

ComparisonView single_vs_ensemble_view(const EnsembleReport& report);

}  // namespace dxe
