// Acceptance gate: one PASS/FAIL line per primary criterion. Exit status is
// the number of failed criteria, so ctest fails if any line fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "dxe/biaslens.hpp"
#include "dxe/consensus.hpp"
#include "dxe/error.hpp"
#include "dxe/gateway.hpp"
#include "dxe/json_io.hpp"
#include "dxe/simharness.hpp"
#include "dxe/synthesis.hpp"
#include "dxe/workspace.hpp"
#include "oracle.hpp"
#include "test_support.hpp"

using namespace dxe;
using namespace std::chrono_literals;
using dxe::testing::candidate;
using dxe::testing::ok_response;

namespace {

// Pinned tolerances and sizes.
constexpr int kOracleSets = 200;
constexpr int kOracleMinModels = 5;
constexpr int kOracleMaxModels = 40;
constexpr int kOracleMaxCandidates = 10;
constexpr double kOracleBudgetSeconds = 10.0;
constexpr int kDeterminismRepeats = 3;
constexpr int kNoCollapseRuns = 100;
constexpr int kCorrelationSeeds = 20;
constexpr int kCorrelationRequired = 18;
constexpr double kEndToEndBudgetSeconds = 60.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failure reasons for one criterion.
struct Check {
  std::vector<std::string> problems;

  void expect(bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  }
  template <typename A, typename B>
  void equal(const A& got, const B& want, const std::string& what) {
    if (!(got == want)) {
      std::ostringstream ss;
      ss << what << ": got " << got << ", want " << want;
      problems.push_back(ss.str());
    }
  }
  bool ok() const { return problems.empty(); }
};

struct Gate {
  int failed = 0;

  void report(const std::string& name, const Check& c, const std::string& detail) {
    std::printf("%s  %-34s %s\n", c.ok() ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    for (std::size_t i = 0; i < c.problems.size() && i < 8; ++i) std::printf("        - %s\n", c.problems[i].c_str());
    if (c.problems.size() > 8) std::printf("        - ... %zu more\n", c.problems.size() - 8);
    if (!c.ok()) ++failed;
    std::fflush(stdout);
  }

  void run(const std::string& name, const std::function<std::string(Check&)>& body) {
    Check c;
    std::string detail;
    try {
      detail = body(c);
    } catch (const std::exception& e) {
      c.problems.push_back(std::string("exception: ") + e.what());
    }
    report(name, c, detail);
  }
};

std::string model_id(int i) {
  char id[16];
  std::snprintf(id, sizeof id, "m%03d", i);
  return id;
}

// Responses whose top-1 picks follow `votes`.
std::vector<ModelResponse> votes_fixture(const std::vector<std::pair<std::string, int>>& votes,
                                         const std::string& code_for_first = {}) {
  std::vector<ModelResponse> out;
  int m = 0;
  bool first = true;
  for (const auto& [label, count] : votes) {
    for (int i = 0; i < count; ++i) {
      out.push_back(ok_response(model_id(m++), "c", {candidate(label, first ? code_for_first : "", 0.7, 1)}));
    }
    first = false;
  }
  return out;
}

ModelResponse text_response(const std::string& model, std::string raw) {
  return ok_response(model, "c", {candidate("Placeholder", "", .5, 1)}, std::move(raw));
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1. Stratification against the brute-force oracle.
std::string oracle_equivalence(Check& c) {
  const auto t0 = Clock::now();
  const auto synonyms = SynonymTable::parse(dxe::testing::kRandomSynonyms);
  const auto oracle_synonyms = oracle::parse_synonyms(dxe::testing::kRandomSynonyms);
  std::mt19937_64 rng(20240601);
  int compared = 0;
  for (int set = 0; set < kOracleSets; ++set) {
    const int n = kOracleMinModels + static_cast<int>(rng() % (kOracleMaxModels - kOracleMinModels + 1));
    const int k = 1 + static_cast<int>(rng() % kOracleMaxCandidates);
    const auto responses = dxe::testing::random_response_set(rng, n, k, "set" + std::to_string(set));
    const auto want = oracle::stratify(responses, oracle_synonyms);
    const std::string tag = "set " + std::to_string(set);
    if (want.no_responders) {
      bool threw = false;
      try {
        stratify(responses, synonyms);
      } catch (const Error& e) {
        threw = e.code() == ErrorCode::NoResponders;
      }
      c.expect(threw, tag + ": expected NoResponders");
      continue;
    }
    const auto got = stratify(responses, synonyms);
    ++compared;
    c.equal(got.responding_count, want.responders, tag + " responders");
    c.equal(got.entries.size(), want.entries.size(), tag + " key count");
    for (const auto& [key, e] : want.entries) {
      const auto* s = got.find(key);
      if (s == nullptr) {
        c.expect(false, tag + ": missing key " + key);
        continue;
      }
      const std::string tier = s->tier ? std::string(to_string(*s->tier)) : std::string();
      c.equal(tier, e.tier, tag + " tier of " + key);
      c.equal(s->top1_count, e.top1, tag + " top1 of " + key);
      c.equal(s->any_mention_count, e.any, tag + " any of " + key);
      c.expect(s->share == e.share, tag + " share of " + key);
      c.expect(s->supporting_models == e.supporters, tag + " supporters of " + key);
    }
  }
  const double secs = seconds_since(t0);
  c.expect(secs < kOracleBudgetSeconds, "runtime " + fmt("%.2f s", secs) + " over budget");
  return std::to_string(compared) + "/" + std::to_string(kOracleSets) + " sets compared, " + fmt("%.2f s", secs);
}

// 2. Tier boundaries on constructed vote fixtures.
std::string threshold_boundaries(Check& c) {
  const auto d30 = stratify(votes_fixture({{"X", 9}, {"Y", 3}, {"Z", 18}}), SynonymTable{});
  c.expect(d30.find("x")->tier == Tier::Primary, "9/30 is Primary");
  c.expect(d30.find("y")->tier == Tier::Alternative, "3/30 is Alternative");
  c.expect(d30.find("x")->share == 0.3, "9/30 share is 0.30");
  const auto d21 = stratify(votes_fixture({{"X", 2}, {"Y", 19}}), SynonymTable{});
  c.expect(d21.find("x")->tier == Tier::Minority, "2/21 is Minority");
  const auto d8 = stratify(votes_fixture({{"X", 8}, {"Y", 22}}), SynonymTable{});
  c.expect(d8.find("x")->tier == Tier::Alternative, "8/30 is Alternative");
  return "9/30 Primary, 3/30 Alternative, 2/21 Minority";
}

// Participation fixture for the cohort means: per-model (hits, cases
// counted); a model counted in 11 cases timed out on the last one.
struct CohortMember {
  std::string id;
  CostTier tier;
  int hits;
  int counted;
};

std::pair<double, double> cohort_means(Check& c) {
  const std::vector<CohortMember> members = {
      {"free-a", CostTier::Free, 4, 11}, {"free-b", CostTier::Free, 6, 11}, {"free-c", CostTier::Free, 7, 12},
      {"free-d", CostTier::Free, 10, 12}, {"paid-a", CostTier::Paid, 4, 11}, {"paid-b", CostTier::Paid, 6, 11},
      {"paid-c", CostTier::Paid, 9, 11}, {"paid-d", CostTier::Paid, 7, 12}};
  constexpr int kCases = 12;
  // Lead votes are spread greedily over the cases each model answered so
  // the shared key stays Primary in every case.
  std::vector<int> lead_votes(kCases, 0);
  std::map<std::string, std::set<int>> lead_cases;
  std::vector<const CohortMember*> order;
  for (const auto& m : members) order.push_back(&m);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->counted < b->counted; });
  for (const auto* m : order) {
    std::vector<int> idx(m->counted);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return lead_votes[a] < lead_votes[b]; });
    for (int i = 0; i < m->hits; ++i) {
      lead_cases[m->id].insert(idx[i]);
      ++lead_votes[idx[i]];
    }
  }
  std::vector<RunOutcome> runs;
  std::vector<ModelDescriptor> descriptors;
  for (const auto& m : members) descriptors.push_back(dxe::testing::descriptor(m.id, Region::US, m.tier));
  for (int k = 0; k < kCases; ++k) {
    std::vector<ModelResponse> r;
    for (const auto& m : members) {
      if (k >= m.counted) {
        r.push_back(dxe::testing::failed_response(m.id, "c", ResponseStatus::Timeout));
      } else {
        const bool lead = lead_cases[m.id].contains(k);
        r.push_back(ok_response(m.id, "c", {candidate(lead ? "Lead" : "Own view of " + m.id, "", .6, 1)}));
      }
    }
    auto diff = stratify(r, SynonymTable{});
    const auto primary = diff.in_tier(Tier::Primary);
    c.expect(primary.size() == 1 && primary.front()->key == "lead", "case " + std::to_string(k) + " led by Lead");
    runs.push_back({std::move(diff), std::move(r)});
  }
  const auto parts = model_participation(runs, SynonymTable{});
  for (const auto& p : parts) {
    for (const auto& m : members) {
      if (m.id == p.model_id) {
        c.equal(p.cases_counted, m.counted, p.model_id + " cases counted");
        c.expect(p.participation_rate == static_cast<double>(m.hits) / m.counted, p.model_id + " rate");
      }
    }
  }
  const auto cohorts = cohort_comparison(parts, RegistrySnapshot(descriptors));
  return {cohorts.by_cost_tier.at(CostTier::Free), cohorts.by_cost_tier.at(CostTier::Paid)};
}

// 3. Published headline figures, from fixtures built to embody them.
std::string reported_figures(Check& c) {
  const auto fmf = stratify(votes_fixture({{"Familial Mediterranean fever", 19}, {"Viral myocarditis", 11}}, "M04.1"),
                            SynonymTable{});
  c.equal(display_percent(consensus_rate(fmf)), 63, "FMF consensus percent");
  c.equal(*fmf.leading_key(), std::string("m04"), "FMF leading key");

  // 16 of 30 pick IgA nephropathy; the other 14 top-1 picks and 44 lower
  // ranked hypotheses are all distinct, so 58 keys sit outside Primary.
  std::vector<ModelResponse> iga;
  int next_alt = 0;
  for (int m = 0; m < 30; ++m) {
    std::vector<DiagnosisCandidate> cands;
    if (m < 16) {
      cands.push_back(candidate("IgA nephropathy", "N02.8", .6, 1));
    } else {
      cands.push_back(candidate("Hypothesis " + std::to_string(next_alt++), "", .5, 1));
    }
    const int extra = m < 14 ? 3 : (m < 16 ? 1 : 0);
    for (int e = 0; e < extra; ++e) {
      cands.push_back(candidate("Hypothesis " + std::to_string(next_alt++), "", .2, 2 + e));
    }
    iga.push_back(ok_response(model_id(m), "c", cands));
  }
  const auto d53 = stratify(iga, SynonymTable{});
  c.equal(display_percent(consensus_rate(d53)), 53, "IgA consensus percent");
  c.equal(d53.non_primary_count(), 58, "keys outside Primary");
  c.equal(d53.breadth, 59, "breadth");

  // Participation: 5 of 6 cases on the Primary key.
  std::vector<RunOutcome> runs;
  for (int i = 0; i < 6; ++i) {
    std::vector<ModelResponse> r;
    for (int k = 0; k < 4; ++k) r.push_back(ok_response("p" + std::to_string(k), "c", {candidate("Lead", "", .8, 1)}));
    r.push_back(ok_response("leader", "c", {candidate(i < 5 ? "Lead" : "Own view", "", .8, 1)}));
    runs.push_back({stratify(r, SynonymTable{}), r});
  }
  double leader_rate = -1;
  for (const auto& p : model_participation(runs, SynonymTable{})) {
    if (p.model_id == "leader") leader_rate = p.participation_rate;
  }
  c.equal(display_percent_1dp(leader_rate), 83.3, "participation percent");

  const auto [free_mean, paid_mean] = cohort_means(c);
  c.equal(display_percent_1dp(free_mean), 58.1, "Free cohort mean");
  c.equal(display_percent_1dp(paid_mean), 57.8, "Paid cohort mean");

  // Regional mention rates: 3 European models with 2 mentions each, 5 US
  // models with 8+6+6+4+4 = 28 mentions.
  const auto lex = parse_lexicon_asset("familial mediterranean fever => term:m04\nfmf => term:m04\n");
  const MentionCounter counter(SynonymTable{}, {{"m04", lex.at("term:m04")}});
  std::vector<ModelDescriptor> models;
  std::vector<ModelResponse> responses;
  for (int i = 0; i < 3; ++i) {
    models.push_back(dxe::testing::descriptor("eu" + std::to_string(i), Region::Europe));
    responses.push_back(text_response("eu" + std::to_string(i), "FMF is likely. Familial Mediterranean fever fits."));
  }
  const std::vector<int> us_mentions = {8, 6, 6, 4, 4};
  for (int i = 0; i < 5; ++i) {
    models.push_back(dxe::testing::descriptor("us" + std::to_string(i), Region::US));
    std::string raw;
    for (int k = 0; k < us_mentions[i]; ++k) raw += "fmf ";
    responses.push_back(text_response("us" + std::to_string(i), raw));
  }
  const auto rates = regional_mention_rate(responses, RegistrySnapshot(models), "m04", counter);
  c.expect(rates.at(Region::Europe) == 2.0, "Europe mentions per model");
  c.expect(rates.at(Region::US) == 5.6, "US mentions per model");

  // Anchoring: 10 substance-use mentions over 4 responding models.
  const auto anchors_lex = parse_lexicon_asset("substance use => anchor:substance_use\n"
                                               "methamphetamine use => anchor:substance_use\n");
  const std::map<std::string, MarkerLexicon> anchors = {{"substance_use", anchors_lex.at("anchor:substance_use")}};
  std::vector<ModelResponse> su;
  for (int hits : {3, 2, 3, 2}) {
    std::string raw;
    for (int i = 0; i < hits; ++i) raw += i % 2 ? "Methamphetamine use. " : "Substance use. ";
    su.push_back(text_response("s" + std::to_string(su.size()), raw));
  }
  su.push_back(dxe::testing::failed_response("late", "c", ResponseStatus::Timeout));
  ClinicalCase homeless;
  homeless.case_id = "c";
  homeless.narrative = "n";
  const double anchoring = demographic_anchoring(su, homeless, anchors).at("substance_use");
  c.expect(anchoring == 2.5, "substance-use anchoring " + fmt("%.3f", anchoring));

  const MarkerLexicon aggressive("aggressive", {"aggressive empirical treatment", "extensive testing"});
  const MarkerLexicon conservative("conservative", {"conservative management", "watchful waiting"});
  std::vector<ModelResponse> batch;
  for (int i = 0; i < 53; ++i) {
    batch.push_back(text_response("t" + std::to_string(i), i < 27 ? "Start aggressive empirical treatment."
                                                                    : "Prefer watchful waiting."));
  }
  const auto split = treatment_split(batch, aggressive, conservative);
  c.equal(split.aggressive, 27, "aggressive");
  c.equal(split.conservative, 26, "conservative");

  return "63%, 53%/58, 83.3%, " + fmt("%.1f", display_percent_1dp(free_mean)) + " vs " +
         fmt("%.1f", display_percent_1dp(paid_mean)) + ", EU " + fmt("%.1f", rates.at(Region::Europe)) + " / US " +
         fmt("%.1f", rates.at(Region::US)) + ", " + fmt("%.1fx", anchoring) + ", " + std::to_string(split.aggressive) +
         "/" + std::to_string(split.conservative);
}

// 4. Marker counting on a hand-counted corpus.
std::string marker_counting(Check& c) {
  struct Sentence {
    const char* text;
    int uncertainty;
    int confidence;
    int rule;  // hits of {"cannot rule out", "rule out"}
  };
  const std::vector<Sentence> corpus = {
      {"This is possibly pericarditis.", 1, 0, 0},
      {"It might be lupus, or it might be sarcoidosis.", 2, 0, 0},
      {"The etiology remains unclear.", 1, 0, 0},
      {"We cannot rule out tuberculosis.", 1, 0, 1},
      {"We should rule out tuberculosis first.", 0, 0, 1},
      {"The rash is pathognomonic for measles.", 0, 1, 0},
      {"This is definitely FMF and certainly not anxiety.", 0, 2, 0},
      {"The findings are highly suggestive of amyloidosis.", 0, 1, 0},
      {"Impossibly rare presentations are unlikely here.", 0, 0, 0},
      {"Uncertainly, the picture is unclearly described.", 0, 0, 0},
      {"POSSIBLY viral; Definitely febrile.", 1, 1, 0},
      {"It might-be hereditary.", 0, 0, 0},
      {"Cannot\n rule   out a vasculitis.", 1, 0, 1},
      {"Highly suggestive, highly suggestive, highly suggestive.", 0, 3, 0},
      {"Cause unclear; possibly genetic; might be acquired.", 3, 0, 0},
      {"We cannot rule out sarcoidosis but can rule out HIV.", 1, 0, 2},
      {"Certainly uncertain.", 0, 1, 0},
      {"The diagnosis is clear and definite.", 0, 0, 0},
      {"Highly suggestive features make this certainly, definitely, pathognomonic.", 0, 4, 0},
      {"Nothing is unclear here.", 1, 0, 0},
  };
  const auto unc = default_uncertainty_lexicon();
  const auto conf = default_confidence_lexicon();
  const MarkerLexicon rule("rule", {"cannot rule out", "rule out"});
  int tu = 0, tc = 0, tr = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus[i];
    const std::string tag = "sentence " + std::to_string(i + 1);
    c.equal(count_markers(s.text, unc), s.uncertainty, tag + " uncertainty");
    c.equal(count_markers(s.text, conf), s.confidence, tag + " confidence");
    c.equal(count_markers(s.text, rule), s.rule, tag + " rule-out overlap");
    tu += count_markers(s.text, unc);
    tc += count_markers(s.text, conf);
    tr += count_markers(s.text, rule);
  }
  c.equal(tu, 12, "uncertainty total");
  c.equal(tc, 13, "confidence total");
  c.equal(tr, 5, "rule-out total");
  return std::to_string(corpus.size()) + " sentences: uncertainty " + std::to_string(tu) + ", confidence " +
         std::to_string(tc) + ", overlap lexicon " + std::to_string(tr);
}

// 5. Seeded fan-out determinism and per-model fault isolation.
std::string fanout_determinism(Check& c) {
  const auto pop = load_population((dxe::testing::assets_dir() / "sim" / "population.yaml").string());
  const RegistrySnapshot snapshot(pop.descriptors());
  const auto cases = load_case_bundle(dxe::testing::assets_dir() / "cases");
  const auto& kase = cases.front();
  QueryPlan plan;
  plan.case_id = kase.case_id;
  for (const auto& d : snapshot.models()) plan.model_ids.push_back(d.model_id);
  plan.seed = 7;
  plan.per_model_timeout = 100ms;

  std::vector<std::string> bytes;
  for (int i = 0; i < kDeterminismRepeats; ++i) {
    bytes.push_back(serialize_fanout(execute_fanout(plan, kase, snapshot, std::make_shared<SimulatedProvider>(pop.profiles()))));
  }
  for (int i = 1; i < kDeterminismRepeats; ++i) c.expect(bytes[i] == bytes[0], "repeat " + std::to_string(i) + " differs");

  const auto baseline = execute_fanout(plan, kase, snapshot, std::make_shared<SimulatedProvider>(pop.profiles()));
  int isolated = 0;
  for (const auto& victim : plan.model_ids) {
    auto provider = std::make_shared<SimulatedProvider>(pop.profiles());
    provider->inject_fault(victim, {TransportFailure::Timeout, -1});
    const auto faulty = execute_fanout(plan, kase, snapshot, provider);
    bool ok = faulty.responses.size() == baseline.responses.size();
    for (std::size_t i = 0; ok && i < faulty.responses.size(); ++i) {
      const auto& r = faulty.responses[i];
      ok = r.model_id == victim ? r.status == ResponseStatus::Timeout : r == baseline.responses[i];
    }
    c.expect(ok, "timeout on " + victim + " leaked into other entries");
    isolated += ok;
  }
  return std::to_string(kDeterminismRepeats) + " identical repeats (" + std::to_string(bytes[0].size()) +
         " bytes), " + std::to_string(isolated) + "/" + std::to_string(plan.model_ids.size()) + " isolated timeouts";
}

// 6. Synthesizer failover with a call-recording synthesizer.
std::string failover_chain(Check& c) {
  std::vector<ModelResponse> responses = votes_fixture({{"Familial Mediterranean fever", 13}, {"Myocarditis", 7}});
  std::vector<ModelDescriptor> models;
  for (const auto& r : responses) models.push_back(dxe::testing::descriptor(r.model_id));
  const RegistrySnapshot snapshot(models);
  const SynonymTable synonyms;
  const auto diff = stratify(responses, synonyms);
  BiasFindings findings;
  findings.case_id = "c";
  ReportInputs in;
  in.run_id = "run-000001";
  in.generated_at = "2026-01-01T00:00:00Z";
  in.differential = &diff;
  in.findings = &findings;
  in.responses = responses;
  in.registry = &snapshot;
  in.synonyms = &synonyms;
  const SynthesizerChain chain({{"A", 200ms}, {"B", 200ms}, {"C", 200ms}, {"template", 1000ms}});
  using B = ScriptedSynthesizer::Behavior;

  auto first_fails = std::make_shared<ScriptedSynthesizer>();
  first_fails->script("A", B::Timeout);
  const auto r1 = build_report(in, chain, first_fails);
  c.equal(r1.narrative_source, std::string("B"), "first survivor");
  c.expect(first_fails->calls() == std::vector<std::string>{"A", "B"}, "C must not be contacted");

  auto first_ok = std::make_shared<ScriptedSynthesizer>();
  const auto r2 = build_report(in, chain, first_ok);
  c.equal(r2.narrative_source, std::string("A"), "healthy head");
  c.expect(first_ok->calls() == std::vector<std::string>{"A"}, "only A contacted");

  auto all_fail = std::make_shared<ScriptedSynthesizer>();
  all_fail->script("A", B::Overflow);
  all_fail->script("B", B::Refusal);
  all_fail->script("C", B::Empty);
  const auto r3 = build_report(in, chain, all_fail);
  c.equal(r3.narrative_source, std::string("template"), "all fail");
  c.expect(all_fail->calls() == std::vector<std::string>{"A", "B", "C"}, "each entry tried once");
  c.expect(r3.narrative == render_template(diff, findings, snapshot, r3.response_statuses), "template narrative");
  return "A timeout -> B; healthy -> A; all fail -> template";
}

std::set<std::string> report_keys(const EnsembleReport& r) {
  std::set<std::string> keys;
  for (const auto& [k, v] : r.provenance) keys.insert(k);
  return keys;
}

struct Bench {
  dxe::testing::TempDir dir;
  std::unique_ptr<Workspace> ws;
  Bench() {
    Workspace::init(dir.path(), dxe::testing::assets_dir());
    ws = std::make_unique<Workspace>(dir.path(), dxe::testing::fixed_clock);
  }
  std::string run(const std::string& case_id, std::uint64_t seed) {
    RunRequest req;
    req.case_id = case_id;
    req.seed = seed;
    return ws->orchestrator().run_case(req);
  }
};

// 7. Reports never drop or merge keys.
std::string no_collapse(Check& c, Bench& b) {
  const auto cases = b.ws->cases().list();
  for (int i = 0; i < kNoCollapseRuns; ++i) {
    const auto seed = static_cast<std::uint64_t>(1000 + i);
    const auto id = b.run(cases[i % cases.size()].case_id, seed);
    const auto rec = b.ws->store().load(id);
    if (!rec.report || !rec.differential) {
      c.expect(false, id + " has no report");
      continue;
    }
    const auto want = rec.differential->keys();
    c.expect(report_keys(*rec.report) == want, id + ": provenance keys differ from differential keys");
    c.expect(rec.report->differential.keys() == want, id + ": report differential keys differ");
    const auto text = render_report_text(*rec.report);
    for (const auto& k : want) c.expect(text.find("[" + k + "]") != std::string::npos, id + ": text omits " + k);
  }
  return std::to_string(kNoCollapseRuns) + " runs, report keys == differential keys";
}

// 8. Consensus and breadth move in opposite directions.
std::string inverse_breadth(Check& c, Bench& b, std::vector<std::string>& all_runs) {
  const auto cases = b.ws->cases().list();
  int negative = 0;
  std::string values;
  for (int s = 1; s <= kCorrelationSeeds; ++s) {
    std::vector<std::string> ids;
    for (const auto& kase : cases) ids.push_back(b.run(kase.case_id, static_cast<std::uint64_t>(s)));
    all_runs.insert(all_runs.end(), ids.begin(), ids.end());
    const auto m = b.ws->orchestrator().batch_metrics(ids);
    c.equal(m.cases.size(), cases.size(), "rows for seed " + std::to_string(s));
    const auto r = m.breadth_consensus_correlation;
    if (r && *r < 0) ++negative;
    values += (values.empty() ? "" : " ") + (r ? fmt("%.2f", *r) : std::string("n/a"));
  }
  c.expect(negative >= kCorrelationRequired,
           std::to_string(negative) + " of " + std::to_string(kCorrelationSeeds) + " seeds negative");
  std::printf("        r by seed: %s\n", values.c_str());
  return std::to_string(negative) + "/" + std::to_string(kCorrelationSeeds) + " seeds with r < 0 (need " +
         std::to_string(kCorrelationRequired) + ")";
}

// 9. Stored runs replay bit-exactly and full restratify matches.
std::string replay(Check& c, Bench& b) {
  const auto ids = b.ws->store().list();
  for (const auto& id : ids) {
    const auto result = b.ws->orchestrator().verify(id);
    for (const auto& m : result.mismatches) c.expect(false, id + ": " + m);
    const auto rec = b.ws->store().load(id);
    const std::set<std::string> all(rec.plan_echo.model_ids.begin(), rec.plan_echo.model_ids.end());
    const auto view = b.ws->orchestrator().restratify(id, all);
    c.expect(view.differential == rec.differential, id + ": restratify(full) differs from stored differential");
    c.expect(view.bias_findings == rec.bias_findings, id + ": restratify(full) differs from stored findings");
  }
  return std::to_string(ids.size()) + " stored runs verified";
}

// 10. Whole pipeline over the bundled batch.
std::string end_to_end(Check& c) {
  const auto t0 = Clock::now();
  Bench b;
  std::vector<std::string> ids;
  for (const auto& kase : b.ws->cases().list()) ids.push_back(b.run(kase.case_id, 42));
  const auto m = b.ws->orchestrator().batch_metrics(ids);
  const auto text = render_metrics_text(m);
  const double secs = seconds_since(t0);
  c.equal(ids.size(), std::size_t{12}, "cases run");
  c.equal(b.ws->registry().size(), std::size_t{30}, "population size");
  c.expect(!text.empty(), "metrics rendered");
  c.expect(secs < kEndToEndBudgetSeconds, "took " + fmt("%.2f s", secs));
  return "30 models x 12 cases + metrics in " + fmt("%.2f s", secs);
}

}  // namespace

int main() {
  Gate gate;
  gate.run("stratify-oracle-equivalence", oracle_equivalence);
  gate.run("tier-threshold-boundaries", threshold_boundaries);
  gate.run("reported-figure-arithmetic", reported_figures);
  gate.run("marker-counting", marker_counting);
  gate.run("fanout-determinism-isolation", fanout_determinism);
  gate.run("synthesizer-failover", failover_chain);

  Bench bench;
  std::vector<std::string> batch_runs;
  gate.run("no-collapse-report", [&](Check& c) { return no_collapse(c, bench); });
  gate.run("inverse-breadth-consensus", [&](Check& c) { return inverse_breadth(c, bench, batch_runs); });
  gate.run("replay-and-restratify", [&](Check& c) { return replay(c, bench); });
  gate.run("end-to-end-wall-time", end_to_end);

  std::printf("%s: %d criteria failed\n", gate.failed == 0 ? "ACCEPTED" : "REJECTED", gate.failed);
  return gate.failed;
}
