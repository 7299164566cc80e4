#include "dxe/json_io.hpp"

#include "dxe/error.hpp"

namespace dxe {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidDocument, what); }

template <typename T>
T field(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) bad(std::string("missing field \"") + name + "\"");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception& e) {
    bad(std::string("field \"") + name + "\": " + e.what());
  }
}

template <typename T>
T field_or(const json& j, const char* name, T fallback) {
  if (!j.contains(name) || j.at(name).is_null()) return fallback;
  return field<T>(j, name);
}

template <typename E, typename Parse>
E enum_field(const json& j, const char* name, Parse parse) {
  const auto s = field<std::string>(j, name);
  const auto v = parse(s);
  if (!v) bad(std::string("field \"") + name + "\": unknown value \"" + s + "\"");
  return *v;
}

std::optional<Tier> parse_tier(std::string_view s) {
  for (auto t : {Tier::Primary, Tier::Alternative, Tier::Minority}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

}  // namespace

void to_json(json& j, const ModelDescriptor& d) {
  json biases = json::array();
  for (const auto& b : d.bias_annotations) {
    json e{{"category", to_string(b.category)}, {"note", b.note}};
    if (b.evidence_ref) e["evidence_ref"] = *b.evidence_ref;
    biases.push_back(std::move(e));
  }
  j = json{{"model_id", d.model_id},
           {"display_name", d.display_name},
           {"endpoint_ref", d.endpoint_ref},
           {"origin_region", to_string(d.origin_region)},
           {"release_date", d.release_date ? json(format_date(*d.release_date)) : json(nullptr)},
           {"cost_tier", to_string(d.cost_tier)},
           {"size_class", to_string(d.size_class)},
           {"intended_scope", d.intended_scope},
           {"bias_annotations", std::move(biases)},
           {"enabled", d.enabled}};
}

void from_json(const json& j, ModelDescriptor& d) {
  d = ModelDescriptor{};
  d.model_id = field<std::string>(j, "model_id");
  d.display_name = field_or<std::string>(j, "display_name", "");
  d.endpoint_ref = field_or<std::string>(j, "endpoint_ref", "");
  d.origin_region = enum_field<Region>(j, "origin_region", parse_region);
  if (j.contains("release_date") && !j.at("release_date").is_null()) {
    const auto s = field<std::string>(j, "release_date");
    d.release_date = parse_date(s);
    if (!d.release_date) bad("field \"release_date\": bad date \"" + s + "\"");
  }
  d.cost_tier = enum_field<CostTier>(j, "cost_tier", parse_cost_tier);
  d.size_class = j.contains("size_class") ? enum_field<SizeClass>(j, "size_class", parse_size_class)
                                          : SizeClass::Unknown;
  d.intended_scope = field_or<std::string>(j, "intended_scope", "");
  for (const auto& b : j.value("bias_annotations", json::array())) {
    BiasAnnotation a;
    a.category = enum_field<BiasCategory>(b, "category", parse_bias_category);
    a.note = field_or<std::string>(b, "note", "");
    if (b.contains("evidence_ref") && !b.at("evidence_ref").is_null()) {
      a.evidence_ref = field<std::string>(b, "evidence_ref");
    }
    d.bias_annotations.insert(std::move(a));
  }
  d.enabled = field_or<bool>(j, "enabled", true);
}

void to_json(json& j, const RegistrySnapshot& s) { j = json{{"models", s.models()}}; }

void from_json(const json& j, RegistrySnapshot& s) {
  s = RegistrySnapshot(field<std::vector<ModelDescriptor>>(j, "models"));
}

void to_json(json& j, const ClinicalCase& c) {
  j = json{{"case_id", c.case_id},
           {"title", c.title},
           {"narrative", c.narrative},
           {"demographics",
            {{"age", c.demographics.age ? json(*c.demographics.age) : json(nullptr)},
             {"sex", to_string(c.demographics.sex)},
             {"origin", c.demographics.origin},
             {"social_context", c.demographics.social_context}}},
           {"tags", c.tags}};
}

void from_json(const json& j, ClinicalCase& c) {
  c = ClinicalCase{};
  c.case_id = field<std::string>(j, "case_id");
  c.title = field_or<std::string>(j, "title", "");
  c.narrative = field<std::string>(j, "narrative");
  if (j.contains("demographics")) {
    const auto& d = j.at("demographics");
    if (!d.is_object()) bad("field \"demographics\" must be an object");
    if (d.contains("age") && !d.at("age").is_null()) c.demographics.age = field<int>(d, "age");
    if (d.contains("sex")) c.demographics.sex = enum_field<Sex>(d, "sex", parse_sex);
    c.demographics.origin = field_or<std::string>(d, "origin", "");
    c.demographics.social_context = field_or<std::string>(d, "social_context", "");
  }
  c.tags = field_or<std::set<std::string>>(j, "tags", {});
}

void to_json(json& j, const DiagnosisCandidate& c) {
  j = json{{"rank", c.rank},
           {"label", c.label},
           {"icd10", c.icd10_codes},
           {"confidence", c.confidence},
           {"rationale", c.rationale}};
}

void from_json(const json& j, DiagnosisCandidate& c) {
  c.rank = field<int>(j, "rank");
  c.label = field<std::string>(j, "label");
  c.icd10_codes = field_or<std::vector<std::string>>(j, "icd10", {});
  c.confidence = field<double>(j, "confidence");
  c.rationale = field_or<std::string>(j, "rationale", "");
}

void to_json(json& j, const ModelResponse& r) {
  j = json{{"model_id", r.model_id},       {"case_id", r.case_id},       {"status", to_string(r.status)},
           {"candidates", r.candidates},   {"raw_text", r.raw_text},     {"latency_ms", r.latency_ms},
           {"diagnostics", r.diagnostics}};
}

void from_json(const json& j, ModelResponse& r) {
  r.model_id = field<std::string>(j, "model_id");
  r.case_id = field<std::string>(j, "case_id");
  r.status = enum_field<ResponseStatus>(j, "status", parse_response_status);
  r.candidates = field_or<std::vector<DiagnosisCandidate>>(j, "candidates", {});
  r.raw_text = field_or<std::string>(j, "raw_text", "");
  r.latency_ms = field_or<std::int64_t>(j, "latency_ms", 0);
  r.diagnostics = field_or<std::string>(j, "diagnostics", "");
}

void to_json(json& j, const QueryPlan& p) {
  j = json{{"case_id", p.case_id},
           {"model_ids", p.model_ids},
           {"per_model_timeout_ms", p.per_model_timeout.count()},
           {"max_retries", p.max_retries},
           {"max_parallel", p.max_parallel},
           {"seed", p.seed},
           {"deadline_ms", p.deadline ? json(p.deadline->count()) : json(nullptr)}};
}

void from_json(const json& j, QueryPlan& p) {
  p = QueryPlan{};
  p.case_id = field<std::string>(j, "case_id");
  p.model_ids = field<std::vector<std::string>>(j, "model_ids");
  p.per_model_timeout = Millis{field_or<std::int64_t>(j, "per_model_timeout_ms", 30000)};
  p.max_retries = field_or<int>(j, "max_retries", 1);
  p.max_parallel = field_or<int>(j, "max_parallel", 8);
  p.seed = field_or<std::uint64_t>(j, "seed", 0);
  if (j.contains("deadline_ms") && !j.at("deadline_ms").is_null()) {
    p.deadline = Millis{field<std::int64_t>(j, "deadline_ms")};
  }
}

void to_json(json& j, const DiagnosisStats& s) {
  j = json{{"key", s.key},
           {"display_label", s.display_label},
           {"icd10_category", s.icd10_category ? json(*s.icd10_category) : json(nullptr)},
           {"member_labels", s.member_labels},
           {"tier", s.tier ? json(to_string(*s.tier)) : json(nullptr)},
           {"share", s.share},
           {"top1_count", s.top1_count},
           {"any_mention_count", s.any_mention_count},
           {"supporting_models", s.supporting_models},
           {"top1_models", s.top1_models},
           {"mean_confidence", s.mean_confidence}};
}

void from_json(const json& j, DiagnosisStats& s) {
  s = DiagnosisStats{};
  s.key = field<std::string>(j, "key");
  s.display_label = field<std::string>(j, "display_label");
  if (j.contains("icd10_category") && !j.at("icd10_category").is_null()) {
    s.icd10_category = field<std::string>(j, "icd10_category");
  }
  s.member_labels = field_or<std::set<std::string>>(j, "member_labels", {});
  if (j.contains("tier") && !j.at("tier").is_null()) s.tier = enum_field<Tier>(j, "tier", parse_tier);
  s.share = field<double>(j, "share");
  s.top1_count = field<int>(j, "top1_count");
  s.any_mention_count = field<int>(j, "any_mention_count");
  s.supporting_models = field_or<std::set<std::string>>(j, "supporting_models", {});
  s.top1_models = field_or<std::set<std::string>>(j, "top1_models", {});
  s.mean_confidence = field<double>(j, "mean_confidence");
}

void to_json(json& j, const StratifiedDifferential& d) {
  j = json{{"case_id", d.case_id},
           {"responding_count", d.responding_count},
           {"breadth", d.breadth},
           {"entries", d.entries}};
}

void from_json(const json& j, StratifiedDifferential& d) {
  d.case_id = field<std::string>(j, "case_id");
  d.responding_count = field<int>(j, "responding_count");
  d.breadth = field<int>(j, "breadth");
  d.entries = field<std::vector<DiagnosisStats>>(j, "entries");
}

void to_json(json& j, const ModelParticipation& p) {
  j = json{{"model_id", p.model_id},
           {"cases_counted", p.cases_counted},
           {"primary_tier_hits", p.primary_tier_hits},
           {"participation_rate", p.participation_rate},
           {"category", to_string(p.category)}};
}

void to_json(json& j, const MarkerCounts& m) {
  j = json{{"uncertainty", m.uncertainty}, {"confidence", m.confidence}};
}

void from_json(const json& j, MarkerCounts& m) {
  m.uncertainty = field<int>(j, "uncertainty");
  m.confidence = field<int>(j, "confidence");
}

void to_json(json& j, const TreatmentSplit& t) {
  j = json{{"aggressive", t.aggressive}, {"conservative", t.conservative}, {"unclassified", t.unclassified}};
}

void from_json(const json& j, TreatmentSplit& t) {
  t.aggressive = field<int>(j, "aggressive");
  t.conservative = field<int>(j, "conservative");
  t.unclassified = field<int>(j, "unclassified");
}

void to_json(json& j, const BiasFindings& f) {
  json regional = json::object();
  for (const auto& [k, rate] : f.mentions_per_model_by_region) {
    regional[k.first][std::string(to_string(k.second))] = rate;
  }
  j = json{{"case_id", f.case_id},
           {"uncertainty_count", f.uncertainty_count},
           {"confidence_count", f.confidence_count},
           {"per_model_counts", f.per_model_counts},
           {"mentions_per_model_by_region", std::move(regional)},
           {"demographic_anchoring", f.demographic_anchoring},
           {"treatment_split", f.treatment_split}};
}

void from_json(const json& j, BiasFindings& f) {
  f = BiasFindings{};
  f.case_id = field<std::string>(j, "case_id");
  f.uncertainty_count = field<int>(j, "uncertainty_count");
  f.confidence_count = field<int>(j, "confidence_count");
  f.per_model_counts = field_or<std::map<std::string, MarkerCounts>>(j, "per_model_counts", {});
  const json mentions = j.value("mentions_per_model_by_region", json::object());
  for (const auto& [term, regions] : mentions.items()) {
    for (const auto& [region, rate] : regions.items()) {
      const auto r = parse_region(region);
      if (!r) bad("unknown region \"" + region + "\"");
      if (!rate.is_number()) bad("mention rate for " + term + " must be a number");
      f.mentions_per_model_by_region[{term, *r}] = rate.get<double>();
    }
  }
  f.demographic_anchoring = field_or<std::map<std::string, double>>(j, "demographic_anchoring", {});
  f.treatment_split = field_or<TreatmentSplit>(j, "treatment_split", {});
}

void to_json(json& j, const ChainEntry& e) {
  j = json{{"synthesizer_ref", e.synthesizer_ref}, {"timeout_ms", e.timeout.count()}};
}

void from_json(const json& j, ChainEntry& e) {
  e.synthesizer_ref = field<std::string>(j, "synthesizer_ref");
  e.timeout = Millis{field_or<std::int64_t>(j, "timeout_ms", 60000)};
}

void to_json(json& j, const SynthesisAttempt& a) {
  j = json{{"synthesizer_ref", a.synthesizer_ref}, {"outcome", a.outcome}};
}

void from_json(const json& j, SynthesisAttempt& a) {
  a.synthesizer_ref = field<std::string>(j, "synthesizer_ref");
  a.outcome = field<std::string>(j, "outcome");
}

void to_json(json& j, const ProvenanceEntry& p) {
  j = json{{"model_id", p.model_id},
           {"origin_region", to_string(p.origin_region)},
           {"confidence", p.confidence},
           {"rank", p.rank}};
}

void from_json(const json& j, ProvenanceEntry& p) {
  p.model_id = field<std::string>(j, "model_id");
  p.origin_region = enum_field<Region>(j, "origin_region", parse_region);
  p.confidence = field<double>(j, "confidence");
  p.rank = field<int>(j, "rank");
}

void to_json(json& j, const EnsembleReport& r) {
  json statuses = json::object();
  for (const auto& [m, s] : r.response_statuses) statuses[m] = to_string(s);
  j = json{{"case_id", r.case_id},
           {"run_id", r.run_id},
           {"generated_at", r.generated_at},
           {"differential", r.differential},
           {"bias_findings", r.bias_findings},
           {"narrative", r.narrative},
           {"narrative_source", r.narrative_source},
           {"provenance", r.provenance},
           {"response_statuses", std::move(statuses)},
           {"registry_snapshot_ref", r.registry_snapshot_ref},
           {"attempts", r.attempts}};
}

void from_json(const json& j, EnsembleReport& r) {
  r = EnsembleReport{};
  r.case_id = field<std::string>(j, "case_id");
  r.run_id = field<std::string>(j, "run_id");
  r.generated_at = field<std::string>(j, "generated_at");
  r.differential = field<StratifiedDifferential>(j, "differential");
  r.bias_findings = field<BiasFindings>(j, "bias_findings");
  r.narrative = field<std::string>(j, "narrative");
  r.narrative_source = field<std::string>(j, "narrative_source");
  r.provenance = field<std::map<std::string, std::vector<ProvenanceEntry>>>(j, "provenance");
  const json statuses = j.value("response_statuses", json::object());
  for (const auto& [m, s] : statuses.items()) {
    const auto st = parse_response_status(s.get<std::string>());
    if (!st) bad("unknown response status for " + m);
    r.response_statuses[m] = *st;
  }
  r.registry_snapshot_ref = field<std::string>(j, "registry_snapshot_ref");
  r.attempts = field_or<std::vector<SynthesisAttempt>>(j, "attempts", {});
}

json chain_to_json(const SynthesizerChain& chain) { return json(chain.entries()); }

SynthesizerChain chain_from_json(const json& j) {
  if (!j.is_array()) bad("synthesizer chain must be an array");
  return SynthesizerChain(j.get<std::vector<ChainEntry>>());
}

json parse_json_document(std::string_view text, std::string_view source_name) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    bad(std::string(source_name) + ": " + e.what());
  }
}

std::string serialize_fanout(const FanoutResult& result) {
  return json{{"case_id", result.case_id}, {"plan", result.plan_echo}, {"responses", result.responses}}.dump(2);
}

}  // namespace dxe
