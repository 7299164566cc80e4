#include "dxe/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "dxe/error.hpp"
#include "dxe/text.hpp"

namespace dxe {

namespace {

bool is_ascii_punct(unsigned char c) {
  return (c >= 0x21 && c <= 0x2f) || (c >= 0x3a && c <= 0x40) || (c >= 0x5b && c <= 0x60) ||
         (c >= 0x7b && c <= 0x7e);
}

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_code_category(std::string_view key) {
  return key.size() == 3 && key[0] >= 'a' && key[0] <= 'z' && key[1] >= '0' && key[1] <= '9' &&
         key[2] >= '0' && key[2] <= '9';
}

std::string to_upper_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  }
  return out;
}

struct KeyAccumulator {
  std::map<std::string, int> label_counts;
  bool code_backed = false;
  int top1 = 0;
  std::set<std::string> top1_models;
  std::set<std::string> supporters;
  double confidence_sum = 0.0;
};

}  // namespace

SynonymTable SynonymTable::parse(std::string_view content, std::string_view source_name) {
  SynonymTable table;
  for (const auto& [alias, canonical] : text::parse_arrow_pairs(content, source_name)) {
    table.add(alias, canonical);
  }
  return table;
}

SynonymTable SynonymTable::load(const std::string& path) { return parse(text::read_file(path), path); }

void SynonymTable::add(std::string_view alias, std::string_view canonical) {
  auto a = normalize_label(alias);
  auto c = normalize_label(canonical);
  if (a.empty() || c.empty()) throw Error(ErrorCode::InvalidDocument, "synonym with empty side");
  entries_[std::move(a)] = std::move(c);
}

std::optional<std::string> SynonymTable::lookup(std::string_view normalized_label) const {
  const auto it = entries_.find(std::string(normalized_label));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string SynonymTable::to_text() const {
  std::string out;
  for (const auto& [alias, canonical] : entries_) out += alias + " => " + canonical + "\n";
  return out;
}

std::string normalize_label(std::string_view label) {
  std::string out;
  out.reserve(label.size());
  bool pending_space = false;
  for (const char ch : label) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == '\'') continue;
    if (is_space(c) || is_ascii_punct(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
  }
  return out;
}

std::string canonical_key(const DiagnosisCandidate& candidate, const SynonymTable& synonyms) {
  if (!candidate.icd10_codes.empty() && candidate.icd10_codes.front().size() >= 3) {
    return text::to_lower(std::string_view(candidate.icd10_codes.front()).substr(0, 3));
  }
  auto normalized = normalize_label(candidate.label);
  if (auto synonym = synonyms.lookup(normalized)) return *synonym;
  return normalized;
}

std::string_view to_string(Tier t) {
  switch (t) {
    case Tier::Primary: return "Primary";
    case Tier::Alternative: return "Alternative";
    case Tier::Minority: return "Minority";
  }
  return "Minority";
}

std::optional<Tier> tier_for(int top1_votes, int responders) {
  if (top1_votes <= 0 || responders <= 0) return std::nullopt;
  const long long votes = top1_votes;
  const long long n = responders;
  if (10 * votes >= 3 * n) return Tier::Primary;
  if (10 * votes >= n) return Tier::Alternative;
  return Tier::Minority;
}

const DiagnosisStats* StratifiedDifferential::find(std::string_view key) const {
  for (const auto& e : entries) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

std::vector<const DiagnosisStats*> StratifiedDifferential::in_tier(Tier t) const {
  std::vector<const DiagnosisStats*> out;
  for (const auto& e : entries) {
    if (e.tier == t) out.push_back(&e);
  }
  return out;
}

std::set<std::string> StratifiedDifferential::keys() const {
  std::set<std::string> out;
  for (const auto& e : entries) out.insert(e.key);
  return out;
}

std::optional<std::string> StratifiedDifferential::leading_key() const {
  if (entries.empty() || entries.front().top1_count == 0) return std::nullopt;
  return entries.front().key;
}

int StratifiedDifferential::tiered_count() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(),
                                        [](const DiagnosisStats& e) { return e.tier.has_value(); }));
}

int StratifiedDifferential::alternative_tier_count() const {
  return static_cast<int>(in_tier(Tier::Alternative).size());
}

int StratifiedDifferential::non_primary_count() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(),
                                        [](const DiagnosisStats& e) { return e.tier != Tier::Primary; }));
}

StratifiedDifferential stratify(std::span<const ModelResponse> responses, const SynonymTable& synonyms) {
  std::vector<const ModelResponse*> ok;
  for (const auto& r : responses) {
    if (r.ok() && !r.candidates.empty()) ok.push_back(&r);
  }
  if (ok.empty()) throw Error(ErrorCode::NoResponders, "no Ok responses to stratify");
  for (const auto* r : ok) {
    if (r->case_id != ok.front()->case_id) {
      throw Error(ErrorCode::InvalidCase, "responses span cases " + ok.front()->case_id + " and " + r->case_id);
    }
  }
  // Fixed accumulation order keeps floating sums identical under any input
  // permutation.
  std::sort(ok.begin(), ok.end(), [](const ModelResponse* a, const ModelResponse* b) {
    return std::tie(a->model_id, a->raw_text) < std::tie(b->model_id, b->raw_text);
  });

  std::map<std::string, KeyAccumulator> acc;
  for (const auto* r : ok) {
    std::set<std::string> seen_here;
    for (std::size_t i = 0; i < r->candidates.size(); ++i) {
      const auto& cand = r->candidates[i];
      auto key = canonical_key(cand, synonyms);
      auto& a = acc[key];
      ++a.label_counts[cand.label];
      if (!cand.icd10_codes.empty()) a.code_backed = true;
      if (i == 0) {
        ++a.top1;
        a.top1_models.insert(r->model_id);
      }
      if (seen_here.insert(key).second) {
        a.supporters.insert(r->model_id);
        a.confidence_sum += cand.confidence;
      }
    }
  }

  StratifiedDifferential diff;
  diff.case_id = ok.front()->case_id;
  diff.responding_count = static_cast<int>(ok.size());
  for (auto& [key, a] : acc) {
    DiagnosisStats s;
    s.key = key;
    int best = -1;
    for (const auto& [label, n] : a.label_counts) {
      s.member_labels.insert(label);
      if (n > best) {
        best = n;
        s.display_label = label;
      }
    }
    if (a.code_backed && is_code_category(key)) s.icd10_category = to_upper_ascii(key);
    s.top1_count = a.top1;
    s.share = static_cast<double>(a.top1) / static_cast<double>(diff.responding_count);
    s.tier = tier_for(a.top1, diff.responding_count);
    s.any_mention_count = static_cast<int>(a.supporters.size());
    s.supporting_models = std::move(a.supporters);
    s.top1_models = std::move(a.top1_models);
    s.mean_confidence = a.confidence_sum / static_cast<double>(s.any_mention_count);
    diff.entries.push_back(std::move(s));
  }
  std::sort(diff.entries.begin(), diff.entries.end(), [](const DiagnosisStats& a, const DiagnosisStats& b) {
    if (a.top1_count != b.top1_count) return a.top1_count > b.top1_count;
    if (a.mean_confidence != b.mean_confidence) return a.mean_confidence > b.mean_confidence;
    return a.key < b.key;
  });
  diff.breadth = static_cast<int>(diff.entries.size());
  return diff;
}

double consensus_rate(const StratifiedDifferential& diff) {
  double best = -1.0;
  for (const auto& e : diff.entries) {
    if (e.tier) best = std::max(best, e.share);
  }
  if (best < 0.0) throw Error(ErrorCode::EmptyInput, "differential has no tiered diagnosis");
  return best;
}

int display_percent(double fraction) { return static_cast<int>(std::floor(fraction * 100.0 + 0.5)); }

double display_percent_1dp(double fraction) { return std::floor(fraction * 1000.0 + 0.5) / 10.0; }

int diagnostic_breadth(const StratifiedDifferential& diff) { return static_cast<int>(diff.entries.size()); }

BreadthStats breadth_stats(std::span<const StratifiedDifferential> runs) {
  if (runs.empty()) throw Error(ErrorCode::EmptyInput, "breadth_stats needs at least one run");
  BreadthStats s;
  s.min = diagnostic_breadth(runs.front());
  s.max = s.min;
  long long total = 0;
  for (const auto& d : runs) {
    const int b = diagnostic_breadth(d);
    total += b;
    s.min = std::min(s.min, b);
    s.max = std::max(s.max, b);
  }
  s.mean = static_cast<double>(total) / static_cast<double>(runs.size());
  return s;
}

std::string_view to_string(ParticipationCategory c) {
  switch (c) {
    case ParticipationCategory::High: return "High";
    case ParticipationCategory::Moderate: return "Moderate";
    case ParticipationCategory::Low: return "Low";
  }
  return "Low";
}

ParticipationCategory participation_category(int primary_hits, int cases_counted) {
  const long long hits = primary_hits;
  const long long n = cases_counted;
  if (10 * hits >= 6 * n) return ParticipationCategory::High;
  if (10 * hits >= 3 * n) return ParticipationCategory::Moderate;
  return ParticipationCategory::Low;
}

std::vector<ModelParticipation> model_participation(std::span<const RunOutcome> runs,
                                                    const SynonymTable& synonyms) {
  std::map<std::string, std::pair<int, int>> tally;  // model -> (cases, hits)
  for (const auto& run : runs) {
    for (const auto& r : run.responses) {
      if (!r.ok() || r.candidates.empty()) continue;
      auto& [cases, hits] = tally[r.model_id];
      ++cases;
      const auto* entry = run.differential.find(canonical_key(r.candidates.front(), synonyms));
      if (entry != nullptr && entry->tier == Tier::Primary) ++hits;
    }
  }
  std::vector<ModelParticipation> out;
  for (const auto& [model, counts] : tally) {
    ModelParticipation p;
    p.model_id = model;
    p.cases_counted = counts.first;
    p.primary_tier_hits = counts.second;
    p.participation_rate = static_cast<double>(counts.second) / static_cast<double>(counts.first);
    p.category = participation_category(counts.second, counts.first);
    out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(), [](const ModelParticipation& a, const ModelParticipation& b) {
    if (a.participation_rate != b.participation_rate) return a.participation_rate > b.participation_rate;
    return a.model_id < b.model_id;
  });
  return out;
}

CohortComparison cohort_comparison(std::span<const ModelParticipation> participations,
                                   const RegistrySnapshot& registry) {
  std::map<CostTier, std::vector<double>> tiers;
  std::map<Region, std::vector<double>> regions;
  std::vector<const ModelParticipation*> ordered;
  for (const auto& p : participations) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->model_id < b->model_id; });
  for (const auto* p : ordered) {
    const auto* d = registry.find(p->model_id);
    if (d == nullptr) throw Error(ErrorCode::NotFound, "model " + p->model_id + " not in registry snapshot");
    tiers[d->cost_tier].push_back(p->participation_rate);
    regions[d->origin_region].push_back(p->participation_rate);
  }
  const auto mean = [](const std::vector<double>& v) {
    double sum = 0.0;
    for (const double x : v) sum += x;
    return sum / static_cast<double>(v.size());
  };
  CohortComparison out;
  for (const auto& [tier, rates] : tiers) out.by_cost_tier[tier] = mean(rates);
  for (const auto& [region, rates] : regions) out.by_region[region] = mean(rates);
  return out;
}

}  // namespace dxe
