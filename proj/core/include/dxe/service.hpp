#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dxe/biaslens.hpp"
#include "dxe/casemodel.hpp"
#include "dxe/consensus.hpp"
#include "dxe/gateway.hpp"
#include "dxe/registry.hpp"
#include "dxe/synthesis.hpp"

// Stage three: the pipeline driver, the append-only run store and the
// batch metrics that feed the aggregate tables.
namespace dxe {

inline constexpr int kRunRecordSchemaVersion = 1;

// Analysis inputs captured verbatim in every run so a stored run replays
// under the configuration it was produced with.
struct AnalysisAssets {
  std::string synonyms_text;
  std::string lexicon_text;
  std::string synthesis_prompt;

  // Reads <dir>/synonyms.txt, <dir>/lexicons.txt and, if present,
  // <dir>/synthesis_prompt.txt. Missing synonym or lexicon files mean empty.
  static AnalysisAssets load(const std::filesystem::path& dir);

  SynonymTable synonyms() const;
  BiasConfig bias_config() const;
  MentionCounter mention_counter() const;

  bool operator==(const AnalysisAssets&) const = default;
};

struct RunTimings {
  std::int64_t fanout_ms = 0;
  std::int64_t analysis_ms = 0;
  std::int64_t synthesis_ms = 0;
  std::int64_t total_ms = 0;
};

inline constexpr std::string_view kRunCompleted = "completed";
inline constexpr std::string_view kRunNoResponders = "no_responders";

struct RunRecord {
  int schema_version = kRunRecordSchemaVersion;
  std::string run_id;
  std::string case_id;
  std::string status;  // kRunCompleted or kRunNoResponders
  std::string created_at;
  std::string provider;
  QueryPlan plan_echo;
  RegistrySnapshot registry_snapshot;
  ClinicalCase case_snapshot;
  std::vector<ChainEntry> chain;
  AnalysisAssets analysis;
  std::vector<ModelResponse> responses;
  std::optional<StratifiedDifferential> differential;
  std::optional<BiasFindings> bias_findings;
  std::optional<EnsembleReport> report;
  RunTimings timings;
};

nlohmann::json run_record_to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);

// One directory per run under `root`: record.json, plus report.json and
// report.txt when the run produced a report. Ids are reserved by creating
// the directory, so concurrent writers never share an id, and records are
// never rewritten.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  std::string reserve_id();
  // Throws Error(StoreConflict) if the id was not reserved or already holds
  // a record.
  void write(const RunRecord& record);
  // Throws Error(NotFound).
  RunRecord load(const std::string& run_id) const;
  bool contains(const std::string& run_id) const;
  // Ids that hold a record, ascending.
  std::vector<std::string> list() const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  mutable std::mutex mutex_;
};

// Case bundle with optional on-disk persistence (one YAML file per case).
class CaseLibrary {
 public:
  CaseLibrary() = default;
  explicit CaseLibrary(std::filesystem::path dir);

  // Throws Error(InvalidCase) or Error(DuplicateId).
  void add(const ClinicalCase& c);
  std::optional<ClinicalCase> find(const std::string& case_id) const;
  std::vector<ClinicalCase> list() const;

 private:
  std::optional<std::filesystem::path> dir_;
  mutable std::mutex mutex_;
  std::map<std::string, ClinicalCase> cases_;
};

struct RunRequest {
  std::string case_id;
  ModelFilter filter;
  std::vector<ChainEntry> chain = {ChainEntry{"template", Millis{1000}}};
  std::string provider = "sim";
  std::optional<std::uint64_t> seed;
  Millis per_model_timeout{30000};
  int max_retries = 1;
  int max_parallel = 8;
  std::optional<Millis> deadline;
};

// Validated request with its run id reserved; executing it always leaves a
// stored record behind.
struct PreparedRun {
  std::string run_id;
  RunRequest request;
  ClinicalCase c;
  RegistrySnapshot snapshot;
  SynthesizerChain chain;
  std::shared_ptr<ProviderPort> provider;
};

struct CaseRow {
  std::string run_id;
  std::string case_id;
  std::string title;
  std::string leading_key;
  std::string leading_label;
  std::optional<std::string> icd10_category;
  double consensus_rate = 0.0;
  int responders = 0;
  int alternative_tier_count = 0;
  int non_primary_count = 0;
  int breadth = 0;
  int uncertainty_markers = 0;
  int confidence_markers = 0;
};

struct MetricsBundle {
  std::vector<CaseRow> cases;
  std::vector<std::string> skipped_runs;  // stored without a differential
  std::vector<ModelParticipation> participation;
  std::map<ParticipationCategory, int> category_counts;
  CohortComparison cohorts;
  std::map<Region, double> region_distribution;
  BreadthStats breadth;
  std::optional<double> breadth_consensus_correlation;
  int uncertainty_total = 0;
  int confidence_total = 0;
  TemporalFlags temporal;
};

nlohmann::json metrics_to_json(const MetricsBundle& m);
std::string render_metrics_text(const MetricsBundle& m);

// Sample Pearson correlation; nullopt when either side has no variance or
// fewer than two points.
std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys);

struct RestratifyView {
  std::string run_id;
  std::set<std::string> model_ids;
  bool no_responders = false;
  std::optional<StratifiedDifferential> differential;
  std::optional<BiasFindings> bias_findings;
};

nlohmann::json restratify_to_json(const RestratifyView& v);

struct ReplayResult {
  std::string run_id;
  std::vector<std::string> mismatches;
  bool ok() const { return mismatches.empty(); }
};

class Orchestrator {
 public:
  using Timestamp = std::function<std::string()>;

  Orchestrator(Registry& registry, CaseLibrary& cases, RunStore& store, AnalysisAssets assets,
               std::map<std::string, std::shared_ptr<ProviderPort>> providers,
               std::shared_ptr<SynthesisPort> synthesizer, Timestamp now = {});

  // Throws CaseNotFound, NoModelsSelected, ChainInvalid or PlanInvalid
  // (unknown provider) before anything is stored.
  PreparedRun prepare(const RunRequest& request);
  // Persists the record. Throws Error(NoResponders) after persisting a
  // failed run.
  std::string execute(const PreparedRun& run);
  std::string run_case(const RunRequest& request) { return execute(prepare(request)); }

  // Throws Error(EmptyInput) for no ids, Error(NotFound) for unknown ones.
  MetricsBundle batch_metrics(std::span<const std::string> run_ids) const;

  // Derived view over a stored run, never stored. Throws NotFound or
  // SubsetNotInRun.
  RestratifyView restratify(const std::string& run_id, const std::set<std::string>& model_ids) const;

  // Recomputes the differential, findings and template report from the
  // stored responses and compares them with what was stored.
  ReplayResult verify(const std::string& run_id) const;

  Registry& registry() { return registry_; }
  CaseLibrary& cases() { return cases_; }
  const RunStore& store() const { return store_; }
  const AnalysisAssets& assets() const { return assets_; }

 private:
  Registry& registry_;
  CaseLibrary& cases_;
  RunStore& store_;
  AnalysisAssets assets_;
  SynonymTable synonyms_;
  BiasConfig bias_config_;
  MentionCounter counter_;
  std::map<std::string, std::shared_ptr<ProviderPort>> providers_;
  std::shared_ptr<SynthesisPort> synthesizer_;
  Timestamp now_;
};

std::string utc_timestamp();

}  // namespace dxe
