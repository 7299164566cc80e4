#include "dxe/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <numeric>
#include <sstream>

#include "dxe/error.hpp"
#include "dxe/hash.hpp"
#include "dxe/json_io.hpp"
#include "dxe/text.hpp"

namespace dxe {

namespace fs = std::filesystem;

namespace {

std::int64_t elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - since).count();
}

std::string read_optional(const fs::path& p) { return fs::exists(p) ? text::read_file(p.string()) : std::string(); }

std::vector<ModelResponse> restrict_responses(const std::vector<ModelResponse>& all,
                                              const std::set<std::string>& ids) {
  std::vector<ModelResponse> out;
  for (const auto& r : all) {
    if (ids.count(r.model_id) != 0) out.push_back(r);
  }
  return out;
}

std::map<std::string, ResponseStatus> statuses_of(std::span<const ModelResponse> responses) {
  std::map<std::string, ResponseStatus> out;
  for (const auto& r : responses) out[r.model_id] = r.status;
  return out;
}

}  // namespace

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

AnalysisAssets AnalysisAssets::load(const fs::path& dir) {
  AnalysisAssets a;
  a.synonyms_text = read_optional(dir / "synonyms.txt");
  a.lexicon_text = read_optional(dir / "lexicons.txt");
  a.synthesis_prompt = read_optional(dir / "synthesis_prompt.txt");
  return a;
}

SynonymTable AnalysisAssets::synonyms() const { return SynonymTable::parse(synonyms_text); }

BiasConfig AnalysisAssets::bias_config() const {
  return lexicon_text.empty() ? BiasConfig::defaults() : BiasConfig::from_asset(lexicon_text);
}

MentionCounter AnalysisAssets::mention_counter() const { return MentionCounter(synonyms(), bias_config().term_lexicons); }

nlohmann::json run_record_to_json(const RunRecord& r) {
  json j{{"schema_version", r.schema_version},
         {"run_id", r.run_id},
         {"case_id", r.case_id},
         {"status", r.status},
         {"created_at", r.created_at},
         {"provider", r.provider},
         {"plan", r.plan_echo},
         {"registry_snapshot", r.registry_snapshot},
         {"case_snapshot", r.case_snapshot},
         {"chain", r.chain},
         {"analysis",
          {{"synonyms_text", r.analysis.synonyms_text},
           {"lexicon_text", r.analysis.lexicon_text},
           {"synthesis_prompt", r.analysis.synthesis_prompt}}},
         {"responses", r.responses},
         {"differential", r.differential ? json(*r.differential) : json(nullptr)},
         {"bias_findings", r.bias_findings ? json(*r.bias_findings) : json(nullptr)},
         {"report", r.report ? json(*r.report) : json(nullptr)},
         {"timings",
          {{"fanout_ms", r.timings.fanout_ms},
           {"analysis_ms", r.timings.analysis_ms},
           {"synthesis_ms", r.timings.synthesis_ms},
           {"total_ms", r.timings.total_ms}}}};
  return j;
}

RunRecord run_record_from_json(const nlohmann::json& j) {
  try {
    RunRecord r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kRunRecordSchemaVersion) {
      throw Error(ErrorCode::InvalidDocument, "unsupported run record schema_version " +
                                                  std::to_string(r.schema_version));
    }
    r.run_id = j.at("run_id").get<std::string>();
    r.case_id = j.at("case_id").get<std::string>();
    r.status = j.at("status").get<std::string>();
    r.created_at = j.at("created_at").get<std::string>();
    r.provider = j.at("provider").get<std::string>();
    r.plan_echo = j.at("plan").get<QueryPlan>();
    r.registry_snapshot = j.at("registry_snapshot").get<RegistrySnapshot>();
    r.case_snapshot = j.at("case_snapshot").get<ClinicalCase>();
    r.chain = j.at("chain").get<std::vector<ChainEntry>>();
    const auto& a = j.at("analysis");
    r.analysis.synonyms_text = a.at("synonyms_text").get<std::string>();
    r.analysis.lexicon_text = a.at("lexicon_text").get<std::string>();
    r.analysis.synthesis_prompt = a.at("synthesis_prompt").get<std::string>();
    r.responses = j.at("responses").get<std::vector<ModelResponse>>();
    if (!j.at("differential").is_null()) r.differential = j.at("differential").get<StratifiedDifferential>();
    if (!j.at("bias_findings").is_null()) r.bias_findings = j.at("bias_findings").get<BiasFindings>();
    if (!j.at("report").is_null()) r.report = j.at("report").get<EnsembleReport>();
    const auto& t = j.at("timings");
    r.timings = {t.at("fanout_ms").get<std::int64_t>(), t.at("analysis_ms").get<std::int64_t>(),
                 t.at("synthesis_ms").get<std::int64_t>(), t.at("total_ms").get<std::int64_t>()};
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidDocument, std::string("run record: ") + e.what());
  }
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

std::string RunStore::reserve_id() {
  std::lock_guard lock(mutex_);
  int next = 1;
  for (const auto& entry : fs::directory_iterator(root_)) {
    const auto name = entry.path().filename().string();
    int n = 0;
    if (std::sscanf(name.c_str(), "run-%d", &n) == 1) next = std::max(next, n + 1);
  }
  // create_directory fails on an existing directory, which makes the
  // reservation atomic even across processes sharing the store.
  for (;; ++next) {
    char id[32];
    std::snprintf(id, sizeof id, "run-%06d", next);
    if (fs::create_directory(root_ / id)) return id;
  }
}

void RunStore::write(const RunRecord& record) {
  std::lock_guard lock(mutex_);
  const auto dir = root_ / record.run_id;
  if (record.run_id.empty() || !fs::is_directory(dir)) {
    throw Error(ErrorCode::StoreConflict, "run id " + record.run_id + " was not reserved");
  }
  if (fs::exists(dir / "record.json")) {
    throw Error(ErrorCode::StoreConflict, "run " + record.run_id + " already stored");
  }
  if (record.report) {
    text::write_file_atomic((dir / "report.json").string(), json(*record.report).dump(2) + "\n");
    text::write_file_atomic((dir / "report.txt").string(), render_report_text(*record.report));
  }
  // record.json goes last: its presence marks the run as committed.
  text::write_file_atomic((dir / "record.json").string(), run_record_to_json(record).dump(2) + "\n");
}

RunRecord RunStore::load(const std::string& run_id) const {
  const auto path = root_ / run_id / "record.json";
  if (run_id.empty() || run_id.find('/') != std::string::npos || !fs::exists(path)) {
    throw Error(ErrorCode::NotFound, "run " + run_id + " not found");
  }
  return run_record_from_json(parse_json_document(text::read_file(path.string()), path.string()));
}

bool RunStore::contains(const std::string& run_id) const {
  return !run_id.empty() && run_id.find('/') == std::string::npos && fs::exists(root_ / run_id / "record.json");
}

std::vector<std::string> RunStore::list() const {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (entry.is_directory() && fs::exists(entry.path() / "record.json")) {
      out.push_back(entry.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

CaseLibrary::CaseLibrary(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(*dir_);
  for (auto& c : load_case_bundle(*dir_)) cases_.emplace(c.case_id, std::move(c));
}

void CaseLibrary::add(const ClinicalCase& c) {
  validate_case(c);
  std::lock_guard lock(mutex_);
  if (cases_.count(c.case_id) != 0) throw Error(ErrorCode::DuplicateId, "case " + c.case_id + " already exists");
  if (dir_) text::write_file_atomic((*dir_ / (c.case_id + ".case.yaml")).string(), write_case_document(c));
  cases_.emplace(c.case_id, c);
}

std::optional<ClinicalCase> CaseLibrary::find(const std::string& case_id) const {
  std::lock_guard lock(mutex_);
  const auto it = cases_.find(case_id);
  if (it == cases_.end()) return std::nullopt;
  return it->second;
}

std::vector<ClinicalCase> CaseLibrary::list() const {
  std::lock_guard lock(mutex_);
  std::vector<ClinicalCase> out;
  for (const auto& [id, c] : cases_) out.push_back(c);
  return out;
}

std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) return std::nullopt;
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

Orchestrator::Orchestrator(Registry& registry, CaseLibrary& cases, RunStore& store, AnalysisAssets assets,
                           std::map<std::string, std::shared_ptr<ProviderPort>> providers,
                           std::shared_ptr<SynthesisPort> synthesizer, Timestamp now)
    : registry_(registry),
      cases_(cases),
      store_(store),
      assets_(std::move(assets)),
      synonyms_(assets_.synonyms()),
      bias_config_(assets_.bias_config()),
      counter_(synonyms_, bias_config_.term_lexicons),
      providers_(std::move(providers)),
      synthesizer_(std::move(synthesizer)),
      now_(now ? std::move(now) : Timestamp(utc_timestamp)) {}

PreparedRun Orchestrator::prepare(const RunRequest& request) {
  auto c = cases_.find(request.case_id);
  if (!c) throw Error(ErrorCode::CaseNotFound, "case " + request.case_id + " not found");
  auto models = registry_.select_models(request.filter);
  if (models.empty()) throw Error(ErrorCode::NoModelsSelected, "no registered model matches the filter");
  SynthesizerChain chain(request.chain);
  const auto provider = providers_.find(request.provider);
  if (provider == providers_.end() || !provider->second) {
    throw Error(ErrorCode::PlanInvalid, "unknown provider \"" + request.provider + "\"");
  }
  QueryPlan probe{request.case_id, {}, request.per_model_timeout, request.max_retries, request.max_parallel, 0,
                  request.deadline};
  for (const auto& m : models) probe.model_ids.push_back(m.model_id);
  validate_plan(probe);

  PreparedRun run{store_.reserve_id(), request, std::move(*c), RegistrySnapshot(std::move(models)), std::move(chain),
                  provider->second};
  return run;
}

std::string Orchestrator::execute(const PreparedRun& run) {
  const auto started = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.run_id = run.run_id;
  rec.case_id = run.c.case_id;
  rec.created_at = now_();
  rec.provider = run.request.provider;
  rec.registry_snapshot = run.snapshot;
  rec.case_snapshot = run.c;
  rec.chain = run.chain.entries();
  rec.analysis = assets_;

  auto& plan = rec.plan_echo;
  plan.case_id = run.c.case_id;
  for (const auto& m : run.snapshot.models()) plan.model_ids.push_back(m.model_id);
  plan.per_model_timeout = run.request.per_model_timeout;
  plan.max_retries = run.request.max_retries;
  plan.max_parallel = run.request.max_parallel;
  plan.seed = run.request.seed ? *run.request.seed : fnv1a64(run.run_id);
  plan.deadline = run.request.deadline;

  auto fanout = execute_fanout(plan, run.c, run.snapshot, run.provider);
  rec.responses = std::move(fanout.responses);
  rec.timings.fanout_ms = fanout.wall_time.count();

  auto phase = std::chrono::steady_clock::now();
  StratifiedDifferential diff;
  try {
    diff = stratify(rec.responses, synonyms_);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoResponders) throw;
    rec.status = kRunNoResponders;
    rec.timings.total_ms = elapsed_ms(started);
    store_.write(rec);
    throw Error(ErrorCode::NoResponders, "run " + rec.run_id + " stored without responders");
  }
  auto findings = analyze_bias(run.c, rec.responses, run.snapshot, bias_config_, counter_);
  rec.timings.analysis_ms = elapsed_ms(phase);

  phase = std::chrono::steady_clock::now();
  ReportInputs inputs{rec.run_id, rec.created_at, &diff, &findings, rec.responses, &run.snapshot, &synonyms_};
  rec.report = build_report(inputs, run.chain, synthesizer_, assets_.synthesis_prompt);
  rec.timings.synthesis_ms = elapsed_ms(phase);

  rec.differential = std::move(diff);
  rec.bias_findings = std::move(findings);
  rec.status = kRunCompleted;
  rec.timings.total_ms = elapsed_ms(started);
  store_.write(rec);
  return rec.run_id;
}

MetricsBundle Orchestrator::batch_metrics(std::span<const std::string> run_ids) const {
  if (run_ids.empty()) throw Error(ErrorCode::EmptyInput, "batch_metrics needs at least one run");
  MetricsBundle m;
  std::map<std::string, ModelDescriptor> descriptors;
  std::map<std::string, ModelParticipation> merged;
  std::vector<StratifiedDifferential> diffs;

  for (const auto& id : run_ids) {
    const auto rec = store_.load(id);
    for (const auto& d : rec.registry_snapshot.models()) descriptors.emplace(d.model_id, d);
    if (!rec.differential || !rec.bias_findings) {
      m.skipped_runs.push_back(id);
      continue;
    }
    const auto& diff = *rec.differential;
    const auto synonyms = rec.analysis.synonyms();
    const auto config = rec.analysis.bias_config();

    CaseRow row;
    row.run_id = id;
    row.case_id = rec.case_id;
    row.title = rec.case_snapshot.title;
    row.responders = diff.responding_count;
    if (const auto lead = diff.leading_key()) {
      const auto* e = diff.find(*lead);
      row.leading_key = e->key;
      row.leading_label = e->display_label;
      row.icd10_category = e->icd10_category;
      row.consensus_rate = consensus_rate(diff);
    }
    row.alternative_tier_count = diff.alternative_tier_count();
    row.non_primary_count = diff.non_primary_count();
    row.breadth = diagnostic_breadth(diff);
    row.uncertainty_markers = rec.bias_findings->uncertainty_count;
    row.confidence_markers = rec.bias_findings->confidence_count;
    m.uncertainty_total += row.uncertainty_markers;
    m.confidence_total += row.confidence_markers;
    m.cases.push_back(std::move(row));
    diffs.push_back(diff);

    const RunOutcome outcome{diff, rec.responses};
    for (const auto& p : model_participation(std::span<const RunOutcome>(&outcome, 1), synonyms)) {
      auto& acc = merged[p.model_id];
      acc.model_id = p.model_id;
      acc.cases_counted += p.cases_counted;
      acc.primary_tier_hits += p.primary_tier_hits;
    }

    if (!config.temporal_watchlist.empty()) {
      const MentionCounter counter(synonyms, config.term_lexicons);
      const std::vector<std::vector<ModelResponse>> one{rec.responses};
      const auto flags = temporal_flags(one, config.temporal_watchlist, counter);
      for (const auto& [term, n] : flags.total_mentions) m.temporal.total_mentions[term] += n;
      for (const auto& [term, n] : flags.cases_present) m.temporal.cases_present[term] += n;
    }
  }

  for (auto& [id, p] : merged) {
    p.participation_rate =
        p.cases_counted == 0 ? 0.0 : static_cast<double>(p.primary_tier_hits) / static_cast<double>(p.cases_counted);
    p.category = participation_category(p.primary_tier_hits, p.cases_counted);
    m.participation.push_back(p);
  }
  std::sort(m.participation.begin(), m.participation.end(),
            [](const ModelParticipation& a, const ModelParticipation& b) {
              if (a.participation_rate != b.participation_rate) return a.participation_rate > b.participation_rate;
              return a.model_id < b.model_id;
            });
  for (auto c : {ParticipationCategory::High, ParticipationCategory::Moderate, ParticipationCategory::Low}) {
    m.category_counts[c] = 0;
  }
  for (const auto& p : m.participation) ++m.category_counts[p.category];

  std::vector<ModelDescriptor> all;
  for (auto& [id, d] : descriptors) all.push_back(d);
  const RegistrySnapshot merged_snapshot(all);
  m.cohorts = cohort_comparison(m.participation, merged_snapshot);
  m.region_distribution = region_distribution(all);

  if (!diffs.empty()) {
    m.breadth = breadth_stats(diffs);
    std::vector<double> rates, breadths;
    for (const auto& row : m.cases) {
      rates.push_back(row.consensus_rate);
      breadths.push_back(row.breadth);
    }
    m.breadth_consensus_correlation = pearson(rates, breadths);
  }
  return m;
}

RestratifyView Orchestrator::restratify(const std::string& run_id, const std::set<std::string>& model_ids) const {
  const auto rec = store_.load(run_id);
  const std::set<std::string> planned(rec.plan_echo.model_ids.begin(), rec.plan_echo.model_ids.end());
  for (const auto& id : model_ids) {
    if (planned.count(id) == 0) throw Error(ErrorCode::SubsetNotInRun, id + " was not part of " + run_id);
  }
  RestratifyView view;
  view.run_id = run_id;
  view.model_ids = model_ids;
  const auto subset = restrict_responses(rec.responses, model_ids);
  const auto synonyms = rec.analysis.synonyms();
  try {
    view.differential = stratify(subset, synonyms);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoResponders) throw;
    view.no_responders = true;
    return view;
  }
  const auto config = rec.analysis.bias_config();
  const MentionCounter counter(synonyms, config.term_lexicons);
  view.bias_findings =
      analyze_bias(rec.case_snapshot, subset, rec.registry_snapshot.restrict_to(model_ids), config, counter);
  return view;
}

ReplayResult Orchestrator::verify(const std::string& run_id) const {
  ReplayResult result;
  result.run_id = run_id;
  const auto rec = store_.load(run_id);
  auto& miss = result.mismatches;

  for (const auto& r : rec.responses) {
    if (!rec.registry_snapshot.contains(r.model_id)) miss.push_back("response from unknown model " + r.model_id);
  }
  const auto synonyms = rec.analysis.synonyms();
  StratifiedDifferential diff;
  try {
    diff = stratify(rec.responses, synonyms);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoResponders) throw;
    if (rec.status != kRunNoResponders) miss.push_back("stored run has a differential but replay has no responders");
    return result;
  }
  if (rec.status != kRunCompleted || !rec.differential || !rec.bias_findings || !rec.report) {
    miss.push_back("stored run is incomplete");
    return result;
  }
  if (!(diff == *rec.differential)) miss.push_back("differential differs");

  const auto config = rec.analysis.bias_config();
  const MentionCounter counter(synonyms, config.term_lexicons);
  const auto findings = analyze_bias(rec.case_snapshot, rec.responses, rec.registry_snapshot, config, counter);
  if (!(findings == *rec.bias_findings)) miss.push_back("bias findings differ");

  const auto& stored = *rec.report;
  const ReportInputs inputs{rec.run_id,        stored.generated_at,     &diff, &findings, rec.responses,
                            &rec.registry_snapshot, &synonyms};
  const auto rebuilt = build_report(inputs, SynthesizerChain::template_only(), nullptr);
  if (!(rebuilt.differential == stored.differential)) miss.push_back("report differential differs");
  if (!(rebuilt.bias_findings == stored.bias_findings)) miss.push_back("report findings differ");
  if (rebuilt.provenance != stored.provenance) miss.push_back("provenance differs");
  if (rebuilt.response_statuses != stored.response_statuses) miss.push_back("response statuses differ");
  if (rebuilt.registry_snapshot_ref != stored.registry_snapshot_ref) miss.push_back("registry snapshot ref differs");
  if (stored.narrative_source == kTemplateSynthesizer && rebuilt.narrative != stored.narrative) {
    miss.push_back("template narrative differs");
  }
  const auto keys = diff.keys();
  std::set<std::string> report_keys;
  for (const auto& e : stored.differential.entries) report_keys.insert(e.key);
  for (const auto& [k, v] : stored.provenance) report_keys.insert(k);
  if (report_keys != keys) miss.push_back("report key set differs from differential");
  return result;
}

nlohmann::json metrics_to_json(const MetricsBundle& m) {
  json cases = json::array();
  for (const auto& r : m.cases) {
    cases.push_back({{"run_id", r.run_id},
                     {"case_id", r.case_id},
                     {"title", r.title},
                     {"leading_key", r.leading_key},
                     {"leading_label", r.leading_label},
                     {"icd10_category", r.icd10_category ? json(*r.icd10_category) : json(nullptr)},
                     {"consensus_rate", r.consensus_rate},
                     {"consensus_percent", display_percent(r.consensus_rate)},
                     {"responders", r.responders},
                     {"alternative_tier_count", r.alternative_tier_count},
                     {"non_primary_count", r.non_primary_count},
                     {"breadth", r.breadth},
                     {"uncertainty_markers", r.uncertainty_markers},
                     {"confidence_markers", r.confidence_markers}});
  }
  json categories = json::object();
  for (const auto& [c, n] : m.category_counts) categories[std::string(to_string(c))] = n;
  json by_tier = json::object();
  for (const auto& [t, v] : m.cohorts.by_cost_tier) by_tier[std::string(to_string(t))] = v;
  json by_region = json::object();
  for (const auto& [r, v] : m.cohorts.by_region) by_region[std::string(to_string(r))] = v;
  json dist = json::object();
  for (const auto& [r, v] : m.region_distribution) dist[std::string(to_string(r))] = v;
  return json{{"cases", cases},
              {"skipped_runs", m.skipped_runs},
              {"participation", m.participation},
              {"category_counts", categories},
              {"cohorts", {{"by_cost_tier", by_tier}, {"by_region", by_region}}},
              {"region_distribution", dist},
              {"breadth", {{"mean", m.breadth.mean}, {"min", m.breadth.min}, {"max", m.breadth.max}}},
              {"breadth_consensus_correlation",
               m.breadth_consensus_correlation ? json(*m.breadth_consensus_correlation) : json(nullptr)},
              {"markers", {{"uncertainty", m.uncertainty_total}, {"confidence", m.confidence_total}}},
              {"temporal",
               {{"total_mentions", m.temporal.total_mentions}, {"cases_present", m.temporal.cases_present}}}};
}

std::string render_metrics_text(const MetricsBundle& m) {
  std::ostringstream out;
  char line[512];
  out << "CONSENSUS BY CASE\n";
  std::snprintf(line, sizeof line, "%-12s %-40s %-40s %9s %6s %8s %7s %6s %6s\n", "run", "case", "leading diagnosis",
                "consensus", "alt", "non-prim", "breadth", "unc", "conf");
  out << line;
  for (const auto& r : m.cases) {
    std::snprintf(line, sizeof line, "%-12s %-40.40s %-40.40s %8d%% %6d %8d %7d %6d %6d\n", r.run_id.c_str(),
                  (r.title.empty() ? r.case_id : r.title).c_str(), r.leading_label.c_str(),
                  display_percent(r.consensus_rate), r.alternative_tier_count, r.non_primary_count, r.breadth,
                  r.uncertainty_markers, r.confidence_markers);
    out << line;
  }
  for (const auto& id : m.skipped_runs) out << id << ": no responders, skipped\n";

  out << "\nMODEL PARTICIPATION\n";
  for (const auto& p : m.participation) {
    std::snprintf(line, sizeof line, "%-24s %3d/%-3d %6s%%  %s\n", p.model_id.c_str(), p.primary_tier_hits,
                  p.cases_counted, text::format_fixed(display_percent_1dp(p.participation_rate), 1).c_str(),
                  std::string(to_string(p.category)).c_str());
    out << line;
  }
  out << "categories:";
  for (const auto& [c, n] : m.category_counts) out << " " << to_string(c) << " " << n;
  out << "\n\nCOHORTS (mean participation)\n";
  for (const auto& [t, v] : m.cohorts.by_cost_tier) {
    out << "  " << to_string(t) << ": " << text::format_fixed(display_percent_1dp(v), 1) << "%\n";
  }
  for (const auto& [r, v] : m.cohorts.by_region) {
    out << "  " << to_string(r) << ": " << text::format_fixed(display_percent_1dp(v), 1) << "%\n";
  }
  out << "\nREGIONS\n";
  for (const auto& [r, v] : m.region_distribution) out << "  " << to_string(r) << ": " << display_percent(v) << "%\n";
  out << "\nBREADTH\n  mean " << text::format_fixed(m.breadth.mean, 1) << " (range " << m.breadth.min << "-"
      << m.breadth.max << ")\n";
  out << "  correlation with consensus: "
      << (m.breadth_consensus_correlation ? text::format_fixed(*m.breadth_consensus_correlation, 3) : "n/a") << "\n";
  out << "\nMARKERS\n  uncertainty " << m.uncertainty_total << ", confidence " << m.confidence_total << "\n";
  if (!m.temporal.total_mentions.empty()) {
    out << "\nTEMPORAL WATCHLIST\n";
    for (const auto& [term, n] : m.temporal.total_mentions) {
      out << "  " << term << ": " << n << " mentions in " << m.temporal.cases_present.at(term) << " runs\n";
    }
  }
  return out.str();
}

nlohmann::json restratify_to_json(const RestratifyView& v) {
  return json{{"run_id", v.run_id},
              {"model_ids", v.model_ids},
              {"no_responders", v.no_responders},
              {"differential", v.differential ? json(*v.differential) : json(nullptr)},
              {"bias_findings", v.bias_findings ? json(*v.bias_findings) : json(nullptr)}};
}

}  // namespace dxe
