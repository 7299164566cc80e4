#include "dxe/simharness.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>

#include "dxe/consensus.hpp"
#include "dxe/error.hpp"
#include "dxe/hash.hpp"
#include "dxe/text.hpp"

namespace dxe {

namespace {

[[noreturn]] void bad_profile(const std::string& id, const std::string& why) {
  throw Error(ErrorCode::ProfileInvalid, id + ": " + why);
}

[[noreturn]] void bad_spec(const std::string& why) { throw Error(ErrorCode::SpecInvalid, why); }

// "dx:<key>=<weight>" tags. Malformed weights make the tag unusable.
std::map<std::string, double> case_weights(const ClinicalCase& c) {
  std::map<std::string, double> out;
  for (const auto& tag : c.tags) {
    if (tag.rfind("dx:", 0) != 0) continue;
    const auto eq = tag.find('=', 3);
    const std::string key = tag.substr(3, eq == std::string::npos ? std::string::npos : eq - 3);
    double w = 1.0;
    if (eq != std::string::npos) {
      try {
        std::size_t used = 0;
        w = std::stod(tag.substr(eq + 1), &used);
        if (used != tag.size() - eq - 1) continue;
      } catch (const std::exception&) {
        continue;
      }
    }
    if (!key.empty() && w > 0.0 && std::isfinite(w)) out[key] = w;
  }
  return out;
}

bool has_region_tag(const ClinicalCase& c) {
  return std::any_of(c.tags.begin(), c.tags.end(), [](const std::string& t) { return t.rfind("region:", 0) == 0; });
}

// Number of events for an expected rate: Bernoulli trials over
// ceil(2 * rate) slots.
int draw_count(SplitMix64& rng, double rate) {
  if (rate <= 0.0) return 0;
  const int slots = static_cast<int>(std::ceil(2.0 * rate));
  const double p = rate / slots;
  int n = 0;
  for (int i = 0; i < slots; ++i) n += rng.uniform() < p ? 1 : 0;
  return n;
}

const std::string& pick(SplitMix64& rng, const std::vector<std::string>& pool) {
  return pool[rng.below(pool.size())];
}

double get_double(const YAML::Node& n, const char* key, double fallback, const std::string& where) {
  if (!n[key]) return fallback;
  try {
    return n[key].as<double>();
  } catch (const YAML::Exception&) {
    bad_spec(where + ": \"" + key + "\" must be a number");
  }
}

std::vector<std::string> get_strings(const YAML::Node& n, const char* key, std::vector<std::string> fallback,
                                     const std::string& where) {
  if (!n[key]) return fallback;
  try {
    return n[key].as<std::vector<std::string>>();
  } catch (const YAML::Exception&) {
    bad_spec(where + ": \"" + key + "\" must be a list of strings");
  }
}

std::map<std::string, double> get_weights(const YAML::Node& n, const char* key, const std::string& where) {
  std::map<std::string, double> out;
  if (!n[key]) return out;
  if (!n[key].IsMap()) bad_spec(where + ": \"" + key + "\" must be a mapping");
  for (const auto& kv : n[key]) {
    const auto k = kv.first.as<std::string>();
    try {
      out[k] = kv.second.as<double>();
    } catch (const YAML::Exception&) {
      bad_spec(where + ": " + key + "." + k + " must be a number");
    }
  }
  return out;
}

std::string region_slug(Region r) {
  switch (r) {
    case Region::US: return "us";
    case Region::Europe: return "eu";
    case Region::China: return "cn";
    case Region::Other: return "other";
  }
  return "other";
}

struct Archetype {
  double default_weight = 1.0;
  std::map<std::string, double> priors;
  std::map<std::string, double> regional_boost;
  std::map<std::string, double> temporal_boost;
  std::set<BiasAnnotation> bias_annotations;
};

void wait_for_stop(const std::stop_token& stop, std::chrono::milliseconds limit) {
  std::mutex m;
  std::condition_variable_any cv;
  std::unique_lock lock(m);
  cv.wait_for(lock, stop, limit, [] { return false; });
}

}  // namespace

SimWorld SimWorld::defaults() {
  SimWorld w;
  w.uncertainty_phrases = {"possibly", "might be", "unclear", "cannot rule out"};
  w.confidence_phrases = {"definitely", "certainly", "pathognomonic", "highly suggestive"};
  w.aggressive_sentences = {"Recommend aggressive empirical treatment and extensive testing now."};
  w.conservative_sentences = {"Recommend conservative management with watchful waiting."};
  return w;
}

void validate_profile(const SimModelProfile& p) {
  if (p.model_id.empty()) bad_profile("<unnamed>", "model_id is empty");
  bool positive = false;
  for (const auto& [k, w] : p.disease_priors) {
    if (!(w >= 0.0) || !std::isfinite(w)) bad_profile(p.model_id, "prior for " + k + " must be >= 0");
    positive = positive || w > 0.0;
  }
  if (!positive) bad_profile(p.model_id, "disease_priors needs at least one positive weight");
  for (const auto* boosts : {&p.regional_boost, &p.temporal_boost}) {
    for (const auto& [k, m] : *boosts) {
      if (!(m >= 0.0) || !std::isfinite(m)) bad_profile(p.model_id, "boost for " + k + " must be >= 0");
    }
  }
  if (!(p.hallucination_rate >= 0.0 && p.hallucination_rate <= 1.0)) {
    bad_profile(p.model_id, "hallucination_rate must be in [0, 1]");
  }
  if (!(p.aggressive_rate >= 0.0 && p.aggressive_rate <= 1.0)) {
    bad_profile(p.model_id, "aggressive_rate must be in [0, 1]");
  }
  for (double r : {p.uncertainty_rate, p.confidence_rate, p.anchor_rate}) {
    if (!(r >= 0.0) || r > 100.0) bad_profile(p.model_id, "marker rates must be in [0, 100]");
  }
  if (p.top_k < 1) bad_profile(p.model_id, "top_k must be >= 1");
  if (!p.world) bad_profile(p.model_id, "profile has no world");
  if (p.hallucination_rate > 0.0 && p.world->fabricated_labels.empty()) {
    bad_profile(p.model_id, "hallucination_rate > 0 needs fabricated_labels");
  }
}

std::uint64_t sim_stream_seed(std::uint64_t seed, std::uint64_t seed_offset, std::string_view case_id) {
  return splitmix64(splitmix64(seed) ^ splitmix64(seed_offset + 0x5eed) ^ fnv1a64(case_id));
}

SimulatedOutput simulate_response_detailed(const SimModelProfile& profile, const ClinicalCase& c,
                                           std::uint64_t seed) {
  validate_profile(profile);
  const auto& world = *profile.world;
  const auto weights = case_weights(c);
  const bool regional = has_region_tag(c);

  std::map<std::string, double> support;
  for (const auto& [key, prior] : profile.disease_priors) {
    if (prior <= 0.0) continue;
    double w = 0.0;
    if (const auto it = weights.find(key); it != weights.end()) {
      w = it->second;
    } else if (profile.temporal_boost.count(key) != 0) {
      w = 1.0;
    } else {
      continue;
    }
    w *= prior;
    if (regional) {
      if (const auto it = profile.regional_boost.find(key); it != profile.regional_boost.end()) w *= it->second;
    }
    if (const auto it = profile.temporal_boost.find(key); it != profile.temporal_boost.end()) w *= it->second;
    if (w > 0.0) support[key] = w;
  }
  if (support.empty()) bad_profile(profile.model_id, "case " + c.case_id + " has no support under the priors");

  SplitMix64 rng(sim_stream_seed(seed, profile.seed_offset, c.case_id));

  std::vector<std::string> keys;
  while (static_cast<int>(keys.size()) < profile.top_k && !support.empty()) {
    double total = 0.0;
    for (const auto& [k, w] : support) total += w;
    const double r = rng.uniform() * total;
    double cum = 0.0;
    auto chosen = std::prev(support.end());
    for (auto it = support.begin(); it != support.end(); ++it) {
      cum += it->second;
      if (r < cum) {
        chosen = it;
        break;
      }
    }
    keys.push_back(chosen->first);
    support.erase(chosen);
  }

  struct Item {
    std::string label;
    std::vector<std::string> codes;
  };
  std::vector<Item> items;
  for (const auto& k : keys) {
    if (const auto it = world.catalog.find(k); it != world.catalog.end()) {
      items.push_back({it->second.label, it->second.icd10_codes});
    } else {
      items.push_back({k, {}});
    }
  }

  SimulatedOutput out;
  const double hallucination_draw = rng.uniform();
  if (hallucination_draw < profile.hallucination_rate) {
    const auto& label = pick(rng, world.fabricated_labels);
    const auto pos = rng.below(items.size() + 1);
    items.insert(items.begin() + static_cast<std::ptrdiff_t>(pos), Item{label, {}});
    if (static_cast<int>(items.size()) > profile.top_k) items.pop_back();
    if (std::any_of(items.begin(), items.end(), [&](const Item& i) { return i.label == label; })) {
      out.fabricated_label = label;
    }
  }

  // Percent-scale integer confidences, non-increasing by rank.
  std::vector<int> conf;
  int prev = 40 + static_cast<int>(rng.below(56));
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) prev = std::max(1, static_cast<int>(prev * (0.55 + 0.4 * rng.uniform())));
    conf.push_back(prev);
  }

  std::string body = "Simulated assessment by " + profile.model_id + " for case " + c.case_id + ".\n";
  const int n_uncertain = draw_count(rng, profile.uncertainty_rate);
  for (int i = 0; i < n_uncertain && !world.uncertainty_phrases.empty(); ++i) {
    body += "Assessment note: " + pick(rng, world.uncertainty_phrases) + ".\n";
  }
  const int n_confident = draw_count(rng, profile.confidence_rate);
  for (int i = 0; i < n_confident && !world.confidence_phrases.empty(); ++i) {
    body += "Assessment note: " + pick(rng, world.confidence_phrases) + ".\n";
  }
  for (const auto& tag : c.tags) {
    if (tag.rfind("anchor:", 0) != 0) continue;
    const auto it = world.anchor_sentences.find(tag.substr(7));
    if (it == world.anchor_sentences.end() || it->second.empty()) continue;
    const int n = draw_count(rng, profile.anchor_rate);
    for (int i = 0; i < n; ++i) body += pick(rng, it->second) + "\n";
  }
  const bool aggressive = rng.uniform() < profile.aggressive_rate;
  const auto& stance = aggressive ? world.aggressive_sentences : world.conservative_sentences;
  if (!stance.empty()) body += pick(rng, stance) + "\n";
  out.latency_ms = 150 + static_cast<std::int64_t>(rng.below(900));

  nlohmann::json diagnoses = nlohmann::json::array();
  for (std::size_t i = 0; i < items.size(); ++i) {
    diagnoses.push_back({{"rank", i + 1},
                         {"label", items[i].label},
                         {"icd10", items[i].codes},
                         {"confidence", conf[i]},
                         {"rationale", "Schematic rationale for rank " + std::to_string(i + 1) + "."}});
  }
  body += "\n```json\n" + nlohmann::json{{"diagnoses", diagnoses}}.dump(2) + "\n```\n";
  out.text = std::move(body);
  return out;
}

std::string simulate_response(const SimModelProfile& profile, const ClinicalCase& c, std::uint64_t seed) {
  return simulate_response_detailed(profile, c, seed).text;
}

std::vector<ModelDescriptor> SimPopulation::descriptors() const {
  std::vector<ModelDescriptor> out;
  for (const auto& m : members) out.push_back(m.descriptor);
  return out;
}

std::vector<SimModelProfile> SimPopulation::profiles() const {
  std::vector<SimModelProfile> out;
  for (const auto& m : members) out.push_back(m.profile);
  return out;
}

SimPopulation build_population(std::string_view spec_text) {
  YAML::Node doc;
  try {
    doc = YAML::Load(std::string(spec_text));
  } catch (const YAML::Exception& e) {
    bad_spec(std::string("population: ") + e.what());
  }
  if (!doc.IsMap()) bad_spec("population: expected a mapping");
  if (!doc["schema_version"] || doc["schema_version"].as<std::string>() != "1") {
    bad_spec("population: schema_version must be 1");
  }

  auto world = std::make_shared<SimWorld>(SimWorld::defaults());
  const auto w = doc["world"];
  if (w) {
    if (w["diseases"]) {
      if (!w["diseases"].IsMap()) bad_spec("world.diseases must be a mapping");
      for (const auto& kv : w["diseases"]) {
        const auto key = kv.first.as<std::string>();
        const std::string where = "world.diseases." + key;
        DiseaseEntry e;
        if (!kv.second["label"]) bad_spec(where + ": label is required");
        e.label = kv.second["label"].as<std::string>();
        e.icd10_codes = get_strings(kv.second, "icd10", {}, where);
        for (const auto& code : e.icd10_codes) {
          if (!validate_icd10(code)) bad_spec(where + ": invalid ICD-10 code " + code);
        }
        DiagnosisCandidate probe{e.label, e.icd10_codes, 0.5, 1, ""};
        if (canonical_key(probe, SynonymTable{}) != key) {
          bad_spec(where + ": key does not match the entry's canonical key " + canonical_key(probe, SynonymTable{}));
        }
        world->catalog[key] = std::move(e);
      }
    }
    world->fabricated_labels = get_strings(w, "fabricated_labels", {}, "world");
    for (const auto& label : world->fabricated_labels) {
      if (world->catalog.count(normalize_label(label)) != 0) {
        bad_spec("world.fabricated_labels: \"" + label + "\" is a catalog disease");
      }
    }
    world->uncertainty_phrases = get_strings(w, "uncertainty_phrases", world->uncertainty_phrases, "world");
    world->confidence_phrases = get_strings(w, "confidence_phrases", world->confidence_phrases, "world");
    world->aggressive_sentences = get_strings(w, "aggressive_sentences", world->aggressive_sentences, "world");
    world->conservative_sentences = get_strings(w, "conservative_sentences", world->conservative_sentences, "world");
    if (w["anchor_sentences"]) {
      for (const auto& kv : w["anchor_sentences"]) {
        const auto name = kv.first.as<std::string>();
        world->anchor_sentences[name] = get_strings(w["anchor_sentences"], name.c_str(), {}, "world.anchor_sentences");
      }
    }
  }
  if (world->catalog.empty()) bad_spec("world.diseases must list at least one disease");

  std::map<std::string, Archetype> archetypes;
  if (!doc["archetypes"] || !doc["archetypes"].IsMap()) bad_spec("archetypes must be a mapping");
  for (const auto& kv : doc["archetypes"]) {
    const auto name = kv.first.as<std::string>();
    const std::string where = "archetypes." + name;
    Archetype a;
    a.default_weight = get_double(kv.second, "default_weight", 1.0, where);
    a.priors = get_weights(kv.second, "priors", where);
    a.regional_boost = get_weights(kv.second, "regional_boost", where);
    a.temporal_boost = get_weights(kv.second, "temporal_boost", where);
    for (const auto* m : {&a.priors, &a.regional_boost, &a.temporal_boost}) {
      for (const auto& [k, v] : *m) {
        if (world->catalog.count(k) == 0) bad_spec(where + ": unknown disease key " + k);
      }
    }
    if (kv.second["bias_annotations"]) {
      for (const auto& b : kv.second["bias_annotations"]) {
        BiasAnnotation ann;
        const auto cat = parse_bias_category(b["category"] ? b["category"].as<std::string>() : "");
        if (!cat) bad_spec(where + ": bad bias category");
        ann.category = *cat;
        ann.note = b["note"] ? b["note"].as<std::string>() : "";
        if (b["evidence_ref"]) ann.evidence_ref = b["evidence_ref"].as<std::string>();
        a.bias_annotations.insert(std::move(ann));
      }
    }
    archetypes[name] = std::move(a);
  }

  if (!doc["groups"] || !doc["groups"].IsSequence()) bad_spec("groups must be a list");
  SimPopulation pop;
  pop.world = world;
  std::map<Region, int> per_region;
  std::uint64_t index = 0;
  for (std::size_t g = 0; g < doc["groups"].size(); ++g) {
    const auto grp = doc["groups"][g];
    const std::string where = "groups[" + std::to_string(g) + "]";
    const auto count = static_cast<int>(get_double(grp, "count", -1, where));
    if (count < 0) bad_spec(where + ": count must be >= 0");
    const auto region = parse_region(grp["region"] ? grp["region"].as<std::string>() : "");
    if (!region) bad_spec(where + ": region must be one of US, Europe, China, Other");
    const auto tier = parse_cost_tier(grp["cost_tier"] ? grp["cost_tier"].as<std::string>() : "Free");
    if (!tier) bad_spec(where + ": bad cost_tier");
    const auto size = parse_size_class(grp["size_class"] ? grp["size_class"].as<std::string>() : "Unknown");
    if (!size) bad_spec(where + ": bad size_class");
    const auto arch_name = grp["archetype"] ? grp["archetype"].as<std::string>() : "";
    const auto arch = archetypes.find(arch_name);
    if (arch == archetypes.end()) bad_spec(where + ": unknown archetype \"" + arch_name + "\"");
    std::optional<Date> release;
    if (grp["release_date"]) {
      release = parse_date(grp["release_date"].as<std::string>());
      if (!release) bad_spec(where + ": bad release_date");
    }

    for (int i = 0; i < count; ++i) {
      SimMember m;
      char id[64];
      std::snprintf(id, sizeof id, "sim-%s-%02d", region_slug(*region).c_str(), ++per_region[*region]);
      m.descriptor.model_id = id;
      m.descriptor.display_name = "Simulated " + std::string(to_string(*region)) + " model " + (id + 4);
      m.descriptor.endpoint_ref = std::string("sim/") + id;
      m.descriptor.origin_region = *region;
      m.descriptor.release_date = release;
      m.descriptor.cost_tier = *tier;
      m.descriptor.size_class = *size;
      m.descriptor.intended_scope = "simulated diagnostic model (" + arch_name + ")";
      m.descriptor.bias_annotations = arch->second.bias_annotations;

      auto& p = m.profile;
      p.model_id = id;
      p.origin_region = *region;
      for (const auto& [key, entry] : world->catalog) {
        const auto it = arch->second.priors.find(key);
        p.disease_priors[key] = it == arch->second.priors.end() ? arch->second.default_weight : it->second;
      }
      p.regional_boost = arch->second.regional_boost;
      p.temporal_boost = arch->second.temporal_boost;
      p.hallucination_rate = get_double(grp, "hallucination_rate", 0.0, where);
      p.uncertainty_rate = get_double(grp, "uncertainty_rate", 1.0, where);
      p.confidence_rate = get_double(grp, "confidence_rate", 0.5, where);
      p.aggressive_rate = get_double(grp, "aggressive_rate", 0.5, where);
      p.anchor_rate = get_double(grp, "anchor_rate", 1.0, where);
      p.top_k = static_cast<int>(get_double(grp, "top_k", 5, where));
      p.seed_offset = ++index;
      p.world = world;
      try {
        validate_profile(p);
      } catch (const Error& e) {
        bad_spec(where + ": " + e.what());
      }
      pop.members.push_back(std::move(m));
    }
  }
  if (pop.members.empty()) bad_spec("population declares zero models");
  std::sort(pop.members.begin(), pop.members.end(), [](const SimMember& a, const SimMember& b) {
    return a.descriptor.model_id < b.descriptor.model_id;
  });
  return pop;
}

SimPopulation load_population(const std::string& path) { return build_population(text::read_file(path)); }

SimulatedProvider::SimulatedProvider(std::vector<SimModelProfile> profiles) {
  for (auto& p : profiles) {
    validate_profile(p);
    const auto id = p.model_id;
    profiles_.emplace(id, std::move(p));
  }
}

ProviderReply SimulatedProvider::query(const ModelDescriptor& model, const ClinicalCase& c, const QueryContext& ctx) {
  std::optional<TransportFailure> fault;
  {
    std::lock_guard lock(mutex_);
    ++calls_[model.model_id];
    if (auto it = faults_.find(model.model_id); it != faults_.end() && it->second.remaining != 0) {
      fault = it->second.kind;
      if (it->second.remaining > 0) --it->second.remaining;
    }
  }
  if (fault) {
    if (*fault == TransportFailure::Timeout) {
      wait_for_stop(ctx.stop, std::chrono::seconds(30));
      return ProviderReply::fail(TransportFailure::Timeout, "injected timeout");
    }
    return ProviderReply::fail(*fault, "injected " + std::string(to_string(*fault)));
  }

  const auto it = profiles_.find(model.model_id);
  if (it == profiles_.end()) return ProviderReply::fail(TransportFailure::Refusal, "no simulated profile");
  try {
    auto out = simulate_response_detailed(it->second, c, ctx.seed);
    {
      std::lock_guard lock(mutex_);
      fabrications_[{model.model_id, c.case_id, ctx.seed}] = out.fabricated_label;
    }
    return ProviderReply::success(std::move(out.text), out.latency_ms);
  } catch (const Error& e) {
    return ProviderReply::fail(TransportFailure::Refusal, e.what());
  }
}

void SimulatedProvider::inject_fault(const std::string& model_id, Fault fault) {
  std::lock_guard lock(mutex_);
  faults_[model_id] = fault;
}

void SimulatedProvider::clear_faults() {
  std::lock_guard lock(mutex_);
  faults_.clear();
}

std::optional<std::string> SimulatedProvider::fabricated(const std::string& model_id, const std::string& case_id,
                                                         std::uint64_t seed) const {
  std::lock_guard lock(mutex_);
  const auto it = fabrications_.find({model_id, case_id, seed});
  return it == fabrications_.end() ? std::nullopt : it->second;
}

int SimulatedProvider::calls(const std::string& model_id) const {
  std::lock_guard lock(mutex_);
  const auto it = calls_.find(model_id);
  return it == calls_.end() ? 0 : it->second;
}

void ScriptedSynthesizer::script(const std::string& ref, Behavior b) {
  std::lock_guard lock(mutex_);
  script_[ref] = b;
}

ProviderReply ScriptedSynthesizer::synthesize(std::string_view synthesizer_ref, std::string_view prompt,
                                              const QueryContext& ctx) {
  Behavior b = Behavior::Succeed;
  {
    std::lock_guard lock(mutex_);
    calls_.emplace_back(synthesizer_ref);
    if (const auto it = script_.find(std::string(synthesizer_ref)); it != script_.end()) b = it->second;
  }
  switch (b) {
    case Behavior::Succeed: {
      char digest[17];
      std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(fnv1a64(prompt)));
      return ProviderReply::success("Narrative synthesized by " + std::string(synthesizer_ref) +
                                    " from the structured differential (prompt " + digest + ").\n");
    }
    case Behavior::Empty: return ProviderReply::success("  \n");
    case Behavior::Timeout:
      wait_for_stop(ctx.stop, std::chrono::seconds(30));
      return ProviderReply::fail(TransportFailure::Timeout, "scripted timeout");
    case Behavior::Overflow: return ProviderReply::fail(TransportFailure::Overflow, "scripted overflow");
    case Behavior::Refusal: return ProviderReply::fail(TransportFailure::Refusal, "scripted refusal");
    case Behavior::Network: return ProviderReply::fail(TransportFailure::Network, "scripted network failure");
  }
  return ProviderReply::fail(TransportFailure::Refusal, "unknown behaviour");
}

std::vector<std::string> ScriptedSynthesizer::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

}  // namespace dxe
