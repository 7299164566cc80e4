#include "dxe/biaslens.hpp"

#include <algorithm>
#include <set>

#include "dxe/error.hpp"
#include "dxe/text.hpp"

namespace dxe {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string normalize_phrase(std::string_view phrase) {
  std::string out;
  bool pending_space = false;
  for (const char c : phrase) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += lower(c);
  }
  return out;
}

bool is_sub_phrase(const std::string& inner, const std::string& outer) {
  if (inner.size() >= outer.size()) return inner == outer;
  if (outer.starts_with(inner + " ")) return true;
  if (outer.ends_with(" " + inner)) return true;
  return outer.find(" " + inner + " ") != std::string::npos;
}

// Length of the text span matched by `phrase` at `pos`, or 0.
std::size_t match_at(std::string_view text, std::size_t pos, std::string_view phrase) {
  std::size_t t = pos;
  for (std::size_t p = 0; p < phrase.size(); ++p) {
    if (phrase[p] == ' ') {
      if (t >= text.size() || !is_space(text[t])) return 0;
      while (t < text.size() && is_space(text[t])) ++t;
      continue;
    }
    if (t >= text.size() || lower(text[t]) != phrase[p]) return 0;
    ++t;
  }
  if (t < text.size() && text::is_word_byte(text[t])) return 0;
  return t - pos;
}

// Word-aligned, case-insensitive search for a literal label.
std::size_t find_label(std::string_view lowered_text, std::string_view lowered_label, std::size_t from) {
  while (true) {
    const auto pos = lowered_text.find(lowered_label, from);
    if (pos == std::string_view::npos) return pos;
    const auto end = pos + lowered_label.size();
    const bool left_ok = pos == 0 || !text::is_word_byte(lowered_text[pos - 1]) ||
                         !text::is_word_byte(lowered_label.front());
    const bool right_ok = end >= lowered_text.size() || !text::is_word_byte(lowered_text[end]) ||
                          !text::is_word_byte(lowered_label.back());
    if (left_ok && right_ok) return pos;
    from = pos + 1;
  }
}

bool has_text(const ModelResponse& r) {
  return r.status == ResponseStatus::Ok || r.status == ResponseStatus::MalformedOutput;
}

}  // namespace

MarkerLexicon::MarkerLexicon(std::string name, std::vector<std::string> phrases) : name_(std::move(name)) {
  if (phrases.empty()) throw Error(ErrorCode::InvalidLexicon, "lexicon '" + name_ + "' has no phrases");
  for (const auto& raw : phrases) {
    auto p = normalize_phrase(raw);
    if (p.empty() || !text::is_word_byte(p.front()) || !text::is_word_byte(p.back())) {
      throw Error(ErrorCode::InvalidLexicon,
                  "lexicon '" + name_ + "': phrase '" + raw + "' must start and end with a word character");
    }
    for (std::size_t i = 0; i < phrases_.size(); ++i) {
      if (phrases_[i] == p) throw Error(ErrorCode::InvalidLexicon, "lexicon '" + name_ + "': duplicate '" + p + "'");
      if (is_sub_phrase(phrases_[i], p)) {
        throw Error(ErrorCode::InvalidLexicon, "lexicon '" + name_ + "': '" + p +
                                                   "' must be listed before its sub-phrase '" + phrases_[i] + "'");
      }
    }
    phrases_.push_back(std::move(p));
  }
}

std::vector<MarkerHit> find_markers(std::string_view text, const MarkerLexicon& lexicon) {
  std::vector<MarkerHit> hits;
  const auto& phrases = lexicon.phrases();
  std::size_t i = 0;
  while (i < text.size()) {
    const bool word_start = text::is_word_byte(text[i]) && (i == 0 || !text::is_word_byte(text[i - 1]));
    if (!word_start) {
      ++i;
      continue;
    }
    std::size_t best_len = 0;
    std::size_t best_phrase = 0;
    for (std::size_t p = 0; p < phrases.size(); ++p) {
      const auto len = match_at(text, i, phrases[p]);
      if (len > best_len) {
        best_len = len;
        best_phrase = p;
      }
    }
    if (best_len > 0) {
      hits.push_back({i, i + best_len, best_phrase});
      i += best_len;
    } else {
      ++i;
    }
  }
  return hits;
}

int count_markers(std::string_view text, const MarkerLexicon& lexicon) {
  return static_cast<int>(find_markers(text, lexicon).size());
}

std::map<std::string, MarkerLexicon> parse_lexicon_asset(std::string_view content, std::string_view source_name) {
  std::map<std::string, std::vector<std::string>> grouped;
  for (auto& [phrase, name] : text::parse_arrow_pairs(content, source_name)) grouped[name].push_back(std::move(phrase));
  std::map<std::string, MarkerLexicon> out;
  for (auto& [name, phrases] : grouped) out.emplace(name, MarkerLexicon(name, std::move(phrases)));
  return out;
}

MarkerLexicon default_uncertainty_lexicon() {
  return MarkerLexicon("uncertainty", {"possibly", "might be", "unclear", "cannot rule out"});
}

MarkerLexicon default_confidence_lexicon() {
  return MarkerLexicon("confidence", {"definitely", "certainly", "pathognomonic", "highly suggestive"});
}

MentionCounter::MentionCounter(SynonymTable synonyms, std::map<std::string, MarkerLexicon> term_lexicons)
    : synonyms_(std::move(synonyms)), term_lexicons_(std::move(term_lexicons)) {}

int MentionCounter::count(const ModelResponse& response, std::string_view term_key) const {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  if (const auto it = term_lexicons_.find(std::string(term_key)); it != term_lexicons_.end()) {
    for (const auto& h : find_markers(response.raw_text, it->second)) spans.emplace_back(h.begin, h.end);
  }
  int unlocated = 0;
  const auto lowered = text::to_lower(response.raw_text);
  std::map<std::string, std::size_t> next_search;
  for (const auto& cand : response.candidates) {
    if (canonical_key(cand, synonyms_) != term_key) continue;
    const auto label = text::to_lower(text::trim(cand.label));
    auto& from = next_search[label];
    const auto pos = label.empty() ? std::string::npos : find_label(lowered, label, from);
    if (pos == std::string::npos) {
      ++unlocated;
      continue;
    }
    from = pos + label.size();
    const auto end = pos + label.size();
    const bool overlaps = std::any_of(spans.begin(), spans.end(), [&](const auto& s) {
      return pos < s.second && s.first < end;
    });
    if (!overlaps) spans.emplace_back(pos, end);
  }
  return static_cast<int>(spans.size()) + unlocated;
}

std::map<Region, double> regional_mention_rate(std::span<const ModelResponse> responses,
                                               const RegistrySnapshot& registry, std::string_view term_key,
                                               const MentionCounter& counter) {
  std::map<Region, std::pair<long long, long long>> tally;  // mentions, responders
  for (const auto& r : responses) {
    if (!r.ok()) continue;
    const auto* d = registry.find(r.model_id);
    if (d == nullptr) throw Error(ErrorCode::NotFound, "model " + r.model_id + " not in registry snapshot");
    auto& [mentions, responders] = tally[d->origin_region];
    mentions += counter.count(r, term_key);
    ++responders;
  }
  std::map<Region, double> out;
  for (const auto& [region, t] : tally) {
    out[region] = static_cast<double>(t.first) / static_cast<double>(t.second);
  }
  return out;
}

std::map<std::string, double> demographic_anchoring(std::span<const ModelResponse> responses,
                                                    const ClinicalCase& /*c*/,
                                                    const std::map<std::string, MarkerLexicon>& anchors) {
  std::map<std::string, long long> hits;
  long long responders = 0;
  for (const auto& [term, lexicon] : anchors) hits[term] = 0;
  for (const auto& r : responses) {
    if (!r.ok()) continue;
    ++responders;
    for (const auto& [term, lexicon] : anchors) hits[term] += count_markers(r.raw_text, lexicon);
  }
  std::map<std::string, double> out;
  for (const auto& [term, n] : hits) {
    out[term] = responders == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(responders);
  }
  return out;
}

TreatmentSplit treatment_split(std::span<const ModelResponse> responses, const MarkerLexicon& aggressive,
                               const MarkerLexicon& conservative) {
  TreatmentSplit split;
  for (const auto& r : responses) {
    if (!r.ok()) continue;
    const int a = aggressive.empty() ? 0 : count_markers(r.raw_text, aggressive);
    const int c = conservative.empty() ? 0 : count_markers(r.raw_text, conservative);
    if (a > c) {
      ++split.aggressive;
    } else if (a < c) {
      ++split.conservative;
    } else {
      ++split.unclassified;
    }
  }
  return split;
}

TemporalFlags temporal_flags(std::span<const std::vector<ModelResponse>> runs,
                             std::span<const std::string> watchlist, const MentionCounter& counter) {
  if (watchlist.empty()) throw Error(ErrorCode::EmptyInput, "temporal watchlist is empty");
  TemporalFlags flags;
  for (const auto& term : watchlist) {
    flags.total_mentions[term] = 0;
    flags.cases_present[term] = 0;
  }
  for (const auto& run : runs) {
    for (const auto& term : watchlist) {
      int in_run = 0;
      for (const auto& r : run) {
        if (r.ok()) in_run += counter.count(r, term);
      }
      flags.total_mentions[term] += in_run;
      if (in_run > 0) ++flags.cases_present[term];
    }
  }
  return flags;
}

BiasConfig BiasConfig::defaults() {
  BiasConfig c;
  c.uncertainty = default_uncertainty_lexicon();
  c.confidence = default_confidence_lexicon();
  return c;
}

BiasConfig BiasConfig::from_asset(std::string_view content, std::string_view source_name) {
  BiasConfig c = defaults();
  for (auto& [name, lexicon] : parse_lexicon_asset(content, source_name)) {
    if (name == "uncertainty") {
      c.uncertainty = std::move(lexicon);
    } else if (name == "confidence") {
      c.confidence = std::move(lexicon);
    } else if (name == "aggressive") {
      c.aggressive = std::move(lexicon);
    } else if (name == "conservative") {
      c.conservative = std::move(lexicon);
    } else if (name.starts_with("term:")) {
      const auto key = name.substr(5);
      c.regional_terms.push_back(key);
      c.term_lexicons.emplace(key, MarkerLexicon(key, lexicon.phrases()));
    } else if (name.starts_with("anchor:")) {
      const auto key = name.substr(7);
      c.anchors.emplace(key, MarkerLexicon(key, lexicon.phrases()));
    } else if (name.starts_with("watch:")) {
      c.temporal_watchlist.push_back(name.substr(6));
    } else {
      throw Error(ErrorCode::InvalidLexicon, std::string(source_name) + ": unknown lexicon role '" + name + "'");
    }
  }
  return c;
}

std::string BiasConfig::to_asset() const {
  std::string out;
  const auto emit = [&out](const MarkerLexicon& lex, const std::string& role) {
    for (const auto& p : lex.phrases()) out += p + " => " + role + "\n";
  };
  emit(uncertainty, "uncertainty");
  emit(confidence, "confidence");
  if (!aggressive.empty()) emit(aggressive, "aggressive");
  if (!conservative.empty()) emit(conservative, "conservative");
  for (const auto& [key, lex] : term_lexicons) emit(lex, "term:" + key);
  for (const auto& [key, lex] : anchors) emit(lex, "anchor:" + key);
  for (const auto& key : temporal_watchlist) out += key + " => watch:" + key + "\n";
  return out;
}

BiasFindings analyze_bias(const ClinicalCase& c, std::span<const ModelResponse> responses,
                          const RegistrySnapshot& registry, const BiasConfig& config,
                          const MentionCounter& counter) {
  BiasFindings f;
  f.case_id = c.case_id;
  for (const auto& r : responses) {
    if (!has_text(r)) continue;
    MarkerCounts m;
    m.uncertainty = config.uncertainty.empty() ? 0 : count_markers(r.raw_text, config.uncertainty);
    m.confidence = config.confidence.empty() ? 0 : count_markers(r.raw_text, config.confidence);
    f.uncertainty_count += m.uncertainty;
    f.confidence_count += m.confidence;
    f.per_model_counts[r.model_id] = m;
  }
  for (const auto& term : config.regional_terms) {
    for (const auto& [region, rate] : regional_mention_rate(responses, registry, term, counter)) {
      f.mentions_per_model_by_region[{term, region}] = rate;
    }
  }
  f.demographic_anchoring = demographic_anchoring(responses, c, config.anchors);
  f.treatment_split = treatment_split(responses, config.aggressive, config.conservative);
  return f;
}

}  // namespace dxe
