#include "oracle.hpp"

#include <cctype>

namespace dxe::oracle {

namespace {

const std::string kPunct = "!\"#$%&()*+,-./:;<=>?@[\\]^_`{|}~";

std::string norm(std::string_view s) {
  // Pass 1: map every byte; pass 2: squeeze spaces.
  std::string mapped;
  for (char ch : s) {
    if (ch == '\'') continue;
    if (kPunct.find(ch) != std::string::npos || ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' ||
        ch == '\f' || ch == '\v') {
      mapped.push_back(' ');
    } else if (ch >= 'A' && ch <= 'Z') {
      mapped.push_back(static_cast<char>(ch + 32));
    } else {
      mapped.push_back(ch);
    }
  }
  std::string out;
  for (std::size_t i = 0; i < mapped.size(); ++i) {
    if (mapped[i] == ' ' && (out.empty() || out.back() == ' ')) continue;
    out.push_back(mapped[i]);
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

bool word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || u >= 0x80;
}

struct Token {
  std::string word;
  std::size_t begin;
  std::size_t end;
};

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!word_byte(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    std::string w;
    while (j < text.size() && word_byte(text[j])) {
      const char c = text[j];
      w.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c + 32) : c);
      ++j;
    }
    out.push_back({w, i, j});
    i = j;
  }
  return out;
}

bool only_whitespace(std::string_view s) {
  for (char c : s) {
    if (!(c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v')) return false;
  }
  return !s.empty();
}

}  // namespace

std::map<std::string, std::string> parse_synonyms(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto arrow = line.find("=>");
    if (arrow == std::string::npos) continue;
    out[norm(line.substr(0, arrow))] = norm(line.substr(arrow + 2));
  }
  return out;
}

std::string key_of(const DiagnosisCandidate& c, const std::map<std::string, std::string>& synonyms) {
  if (!c.icd10_codes.empty()) {
    std::string k;
    for (std::size_t i = 0; i < 3 && i < c.icd10_codes[0].size(); ++i) {
      const char ch = c.icd10_codes[0][i];
      k.push_back(ch >= 'A' && ch <= 'Z' ? static_cast<char>(ch + 32) : ch);
    }
    return k;
  }
  const auto n = norm(c.label);
  for (const auto& [alias, canonical] : synonyms) {
    if (alias == n) return canonical;
  }
  return n;
}

Stratification stratify(const std::vector<ModelResponse>& responses,
                        const std::map<std::string, std::string>& synonyms) {
  Stratification out;
  for (const auto& r : responses) {
    if (r.status == ResponseStatus::Ok && !r.candidates.empty()) ++out.responders;
  }
  if (out.responders == 0) {
    out.no_responders = true;
    return out;
  }
  for (const auto& r : responses) {
    if (r.status != ResponseStatus::Ok || r.candidates.empty()) continue;
    for (const auto& c : r.candidates) {
      auto& e = out.entries[key_of(c, synonyms)];
      e.supporters.insert(r.model_id);
      if (c.rank == 1) ++e.top1;
    }
  }
  for (auto& [key, e] : out.entries) {
    e.any = static_cast<int>(e.supporters.size());
    e.share = static_cast<double>(e.top1) / static_cast<double>(out.responders);
    // Thresholds on percentages in integer arithmetic.
    if (e.top1 * 100 >= 30 * out.responders) {
      e.tier = "Primary";
    } else if (e.top1 * 100 >= 10 * out.responders) {
      e.tier = "Alternative";
    } else if (e.top1 > 0) {
      e.tier = "Minority";
    }
  }
  return out;
}

int count_phrases(std::string_view text, const std::vector<std::string>& phrases) {
  const auto tokens = tokenize(text);
  std::vector<std::vector<std::string>> split;
  for (const auto& p : phrases) {
    std::vector<std::string> words;
    for (const auto& t : tokenize(p)) words.push_back(t.word);
    split.push_back(words);
  }
  int count = 0;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t best = 0;
    for (const auto& words : split) {
      if (words.empty() || words.size() <= best || i + words.size() > tokens.size()) continue;
      bool match = true;
      for (std::size_t w = 0; w < words.size() && match; ++w) {
        if (tokens[i + w].word != words[w]) match = false;
        if (match && w > 0) {
          const auto gap = text.substr(tokens[i + w - 1].end, tokens[i + w].begin - tokens[i + w - 1].end);
          if (!only_whitespace(gap)) match = false;
        }
      }
      if (match) best = words.size();
    }
    if (best > 0) {
      ++count;
      i += best;
    } else {
      ++i;
    }
  }
  return count;
}

MarkerTotals marker_totals(const std::vector<ModelResponse>& responses, const std::vector<std::string>& uncertainty,
                           const std::vector<std::string>& confidence) {
  MarkerTotals t;
  for (const auto& r : responses) {
    if (r.status != ResponseStatus::Ok && r.status != ResponseStatus::MalformedOutput) continue;
    t.uncertainty += count_phrases(r.raw_text, uncertainty);
    t.confidence += count_phrases(r.raw_text, confidence);
  }
  return t;
}

}  // namespace dxe::oracle
