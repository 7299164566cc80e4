#include "dxe/synthesis.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dxe/error.hpp"
#include "dxe/text.hpp"

namespace dxe {

namespace {

constexpr std::string_view kDefaultSynthesisPrompt =
    "You are the synthesis stage of a diagnostic ensemble. The structured differential below was\n"
    "computed from independent models and is authoritative: do not merge, drop or re-rank diagnoses.\n"
    "Write a short narrative for a clinician that explains the consensus findings, the plausible\n"
    "alternatives and the minority opinions, and what the bias findings suggest about where the\n"
    "models disagree. Do not recommend accepting or rejecting any single diagnosis.\n\n"
    "Differential:\n{{differential}}\n\nBias findings:\n{{findings}}\n";

std::string region_summary(const std::set<std::string>& models, const RegistrySnapshot& registry) {
  std::map<Region, int> counts;
  int unknown = 0;
  for (const auto& m : models) {
    if (const auto* d = registry.find(m)) {
      ++counts[d->origin_region];
    } else {
      ++unknown;
    }
  }
  std::string out;
  for (const auto& [region, n] : counts) {
    if (!out.empty()) out += ", ";
    out += std::string(to_string(region)) + " " + std::to_string(n);
  }
  if (unknown > 0) out += std::string(out.empty() ? "" : ", ") + "unregistered " + std::to_string(unknown);
  return out.empty() ? "none" : out;
}

void render_entry(std::ostringstream& out, const DiagnosisStats& e, int responders,
                  const RegistrySnapshot& registry) {
  out << "  - " << e.display_label << " [" << e.key << "]";
  if (e.icd10_category) out << " ICD-10 " << *e.icd10_category;
  out << ": top-1 share " << display_percent(e.share) << "% (" << e.top1_count << "/" << responders
      << "), mean confidence " << text::format_fixed(e.mean_confidence, 2) << "\n";
  out << "    flagged by " << e.any_mention_count << " model" << (e.any_mention_count == 1 ? "" : "s")
      << "; regions: " << region_summary(e.supporting_models, registry) << "\n";
}

void render_section(std::ostringstream& out, const std::string& heading,
                    const std::vector<const DiagnosisStats*>& entries, int responders,
                    const RegistrySnapshot& registry) {
  out << heading << "\n";
  if (entries.empty()) {
    out << "  (none)\n";
    return;
  }
  for (const auto* e : entries) render_entry(out, *e, responders, registry);
}

std::string compact_differential(const StratifiedDifferential& diff) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& e : diff.entries) {
    items.push_back({{"key", e.key},
                     {"label", e.display_label},
                     {"tier", e.tier ? std::string(to_string(*e.tier)) : "Mentioned"},
                     {"top1_count", e.top1_count},
                     {"any_mention_count", e.any_mention_count},
                     {"mean_confidence", e.mean_confidence}});
  }
  return nlohmann::json{{"responding_count", diff.responding_count}, {"diagnoses", items}}.dump(2);
}

std::string compact_findings(const BiasFindings& f) {
  nlohmann::json regional = nlohmann::json::object();
  for (const auto& [k, rate] : f.mentions_per_model_by_region) {
    regional[k.first][std::string(to_string(k.second))] = rate;
  }
  return nlohmann::json{{"uncertainty_markers", f.uncertainty_count},
                        {"confidence_markers", f.confidence_count},
                        {"mentions_per_model_by_region", regional},
                        {"demographic_anchoring", f.demographic_anchoring},
                        {"treatment", {{"aggressive", f.treatment_split.aggressive},
                                       {"conservative", f.treatment_split.conservative},
                                       {"unclassified", f.treatment_split.unclassified}}}}
      .dump(2);
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

}  // namespace

SynthesizerChain::SynthesizerChain(std::vector<ChainEntry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw Error(ErrorCode::ChainInvalid, "chain is empty");
  std::size_t templates = 0;
  for (const auto& e : entries_) {
    if (e.synthesizer_ref.empty()) throw Error(ErrorCode::ChainInvalid, "chain entry with empty reference");
    if (e.timeout.count() <= 0) throw Error(ErrorCode::ChainInvalid, e.synthesizer_ref + ": timeout must be > 0");
    if (e.synthesizer_ref == kTemplateSynthesizer) ++templates;
  }
  if (templates != 1 || entries_.back().synthesizer_ref != kTemplateSynthesizer) {
    throw Error(ErrorCode::ChainInvalid, "\"template\" must appear exactly once, as the last entry");
  }
}

SynthesizerChain SynthesizerChain::template_only() {
  return SynthesizerChain({ChainEntry{std::string(kTemplateSynthesizer), Millis{1000}}});
}

std::string render_template(const StratifiedDifferential& diff, const BiasFindings& findings,
                            const RegistrySnapshot& registry,
                            const std::map<std::string, ResponseStatus>& statuses) {
  std::ostringstream out;
  out << "Ensemble differential for case " << diff.case_id << "\n";
  out << "Responding models: " << diff.responding_count << "; distinct diagnoses: " << diff.breadth << "\n\n";

  render_section(out, "CONSENSUS (Primary, >= 30% of responding models)", diff.in_tier(Tier::Primary),
                 diff.responding_count, registry);
  out << "\n";
  render_section(out, "ALTERNATIVES (10-29%)", diff.in_tier(Tier::Alternative), diff.responding_count, registry);
  out << "\n";
  render_section(out, "MINORITY (< 10%)", diff.in_tier(Tier::Minority), diff.responding_count, registry);
  out << "\n";

  std::vector<const DiagnosisStats*> mentioned;
  for (const auto& e : diff.entries) {
    if (!e.tier) mentioned.push_back(&e);
  }
  render_section(out, "ALSO MENTIONED (no top-1 votes)", mentioned, diff.responding_count, registry);
  out << "\n";

  out << "BIAS\n";
  out << "  Uncertainty markers: " << findings.uncertainty_count
      << "; confidence markers: " << findings.confidence_count << "\n";
  if (findings.mentions_per_model_by_region.empty()) {
    out << "  Mentions per model by region: (no watched terms)\n";
  } else {
    out << "  Mentions per model by region:\n";
    std::string current;
    for (const auto& [k, rate] : findings.mentions_per_model_by_region) {
      if (k.first != current) {
        if (!current.empty()) out << "\n";
        current = k.first;
        out << "    " << current << ":";
      }
      out << " " << to_string(k.second) << " " << text::format_fixed(rate, 2);
    }
    out << "\n";
  }
  if (!findings.demographic_anchoring.empty()) {
    out << "  Demographic anchoring (mentions per model):";
    for (const auto& [term, rate] : findings.demographic_anchoring) {
      out << " " << term << " " << text::format_fixed(rate, 2);
    }
    out << "\n";
  }
  const auto& t = findings.treatment_split;
  out << "  Treatment approach: " << t.aggressive << " aggressive, " << t.conservative << " conservative, "
      << t.unclassified << " unclassified\n\n";

  out << "STATUS\n";
  if (statuses.empty()) {
    out << "  (not recorded)\n";
  } else {
    std::map<ResponseStatus, int> counts;
    for (const auto& [model, s] : statuses) ++counts[s];
    for (const auto& [s, n] : counts) out << "  " << to_string(s) << ": " << n << "\n";
    for (const auto& [model, s] : statuses) {
      if (s != ResponseStatus::Ok) out << "  " << model << ": " << to_string(s) << "\n";
    }
  }
  return out.str();
}

std::string render_synthesis_prompt(const StratifiedDifferential& diff, const BiasFindings& findings,
                                    const std::string& prompt_template) {
  std::string prompt = prompt_template.empty() ? std::string(kDefaultSynthesisPrompt) : prompt_template;
  prompt = replace_all(std::move(prompt), "{{differential}}", compact_differential(diff));
  return replace_all(std::move(prompt), "{{findings}}", compact_findings(findings));
}

EnsembleReport build_report(const ReportInputs& inputs, const SynthesizerChain& chain,
                            const std::shared_ptr<SynthesisPort>& port, const std::string& prompt_template) {
  if (inputs.differential == nullptr || inputs.findings == nullptr || inputs.registry == nullptr ||
      inputs.synonyms == nullptr) {
    throw Error(ErrorCode::EmptyInput, "build_report needs differential, findings, registry and synonyms");
  }
  const auto& diff = *inputs.differential;
  if (diff.entries.empty()) throw Error(ErrorCode::EmptyInput, "differential is empty");

  EnsembleReport report;
  report.case_id = diff.case_id;
  report.run_id = inputs.run_id;
  report.generated_at = inputs.generated_at;
  report.differential = diff;
  report.bias_findings = *inputs.findings;
  report.registry_snapshot_ref = inputs.registry->digest();

  for (const auto& e : diff.entries) report.provenance[e.key];
  for (const auto& r : inputs.responses) {
    report.response_statuses[r.model_id] = r.status;
    if (!r.ok()) continue;
    const auto* d = inputs.registry->find(r.model_id);
    if (d == nullptr) throw Error(ErrorCode::NotFound, "model " + r.model_id + " not in registry snapshot");
    std::set<std::string> seen;
    for (const auto& cand : r.candidates) {
      auto key = canonical_key(cand, *inputs.synonyms);
      if (!seen.insert(key).second) continue;
      report.provenance[key].push_back({r.model_id, d->origin_region, cand.confidence, cand.rank});
    }
  }
  for (auto& [key, entries] : report.provenance) {
    std::sort(entries.begin(), entries.end(),
              [](const ProvenanceEntry& a, const ProvenanceEntry& b) { return a.model_id < b.model_id; });
  }

  std::optional<std::string> prompt;
  for (const auto& entry : chain.entries()) {
    if (entry.synthesizer_ref == kTemplateSynthesizer) {
      report.narrative = render_template(diff, *inputs.findings, *inputs.registry, report.response_statuses);
      report.narrative_source = entry.synthesizer_ref;
      report.attempts.push_back({entry.synthesizer_ref, "ok"});
      break;
    }
    if (!port) {
      report.attempts.push_back({entry.synthesizer_ref, "refusal: no synthesizer available"});
      continue;
    }
    if (!prompt) prompt = render_synthesis_prompt(diff, *inputs.findings, prompt_template);
    const auto ref = entry.synthesizer_ref;
    const auto timeout = entry.timeout;
    auto reply = call_with_deadline(
        [port, ref, text = *prompt, timeout](std::stop_token stop) {
          return port->synthesize(ref, text, QueryContext{timeout, 0, 0, std::move(stop)});
        },
        timeout);
    if (reply.ok() && !text::trim(*reply.text).empty()) {
      report.narrative = std::move(*reply.text);
      report.narrative_source = entry.synthesizer_ref;
      report.attempts.push_back({entry.synthesizer_ref, "ok"});
      break;
    }
    const std::string why = reply.ok() ? "empty narrative" : std::string(to_string(reply.failure)) + ": " + reply.detail;
    report.attempts.push_back({entry.synthesizer_ref, why});
  }
  return report;
}

std::string render_report_text(const EnsembleReport& report) {
  std::ostringstream out;
  out << "ENSEMBLE REPORT\n";
  out << "run: " << report.run_id << "\ncase: " << report.case_id << "\ngenerated: " << report.generated_at
      << "\nregistry snapshot: " << report.registry_snapshot_ref << "\n\n";

  const auto& diff = report.differential;
  const auto list_tier = [&](const std::string& heading, std::optional<Tier> tier) {
    out << heading << "\n";
    int shown = 0;
    for (const auto& e : diff.entries) {
      if (e.tier != tier) continue;
      ++shown;
      out << "  - " << e.display_label << " [" << e.key << "] " << display_percent(e.share) << "% top-1, "
          << e.any_mention_count << " mentioning";
      const auto it = report.provenance.find(e.key);
      if (it != report.provenance.end() && !it->second.empty()) {
        out << "; supporters:";
        for (const auto& p : it->second) {
          out << " " << p.model_id << "(" << to_string(p.origin_region) << ", #" << p.rank << ", "
              << text::format_fixed(p.confidence, 2) << ")";
        }
      }
      out << "\n";
    }
    if (shown == 0) out << "  (none)\n";
  };
  list_tier("PRIMARY", Tier::Primary);
  list_tier("ALTERNATIVE", Tier::Alternative);
  list_tier("MINORITY", Tier::Minority);
  list_tier("MENTIONED WITHOUT TOP-1 VOTES", std::nullopt);

  out << "\nNARRATIVE (source: " << report.narrative_source << ")\n" << report.narrative;
  if (!report.narrative.empty() && report.narrative.back() != '\n') out << "\n";
  out << "\nSYNTHESIS ATTEMPTS\n";
  for (const auto& a : report.attempts) out << "  " << a.synthesizer_ref << ": " << a.outcome << "\n";
  return out.str();
}

ComparisonView single_vs_ensemble_view(const EnsembleReport& report) {
  ComparisonView view;
  bool found = false;
  for (const auto& [key, entries] : report.provenance) {
    for (const auto& p : entries) {
      if (p.rank != 1) continue;
      const bool better = !found || p.confidence > view.single_confidence ||
                          (p.confidence == view.single_confidence && p.model_id < view.single_model);
      if (better) {
        found = true;
        view.single_key = key;
        view.single_model = p.model_id;
        view.single_confidence = p.confidence;
      }
    }
  }
  if (const auto* e = report.differential.find(view.single_key)) view.single_label = e->display_label;

  for (const auto* e : report.differential.in_tier(Tier::Primary)) view.primary_keys.push_back(e->key);
  view.alternative_count = report.differential.alternative_tier_count();
  view.minority_count = static_cast<int>(report.differential.in_tier(Tier::Minority).size());

  std::ostringstream s;
  s << "Primary: ";
  if (view.primary_keys.empty()) s << "none";
  for (std::size_t i = 0; i < view.primary_keys.size(); ++i) {
    const auto* e = report.differential.find(view.primary_keys[i]);
    s << (i ? ", " : "") << e->display_label << " (" << display_percent(e->share) << "%)";
  }
  s << "; ";
  if (view.alternative_count == 0) {
    s << "zero alternatives";
  } else {
    s << view.alternative_count << " alternative" << (view.alternative_count == 1 ? "" : "s");
  }
  s << "; " << view.minority_count << " minority; " << report.differential.breadth << " distinct diagnoses preserved";
  view.ensemble_summary = s.str();
  return view;
}

}  // namespace dxe
