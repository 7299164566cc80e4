#include "dxe/text.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dxe/error.hpp"

namespace dxe {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InvalidDescriptor: return "InvalidDescriptor";
    case ErrorCode::InvalidCase: return "InvalidCase";
    case ErrorCode::InvalidDocument: return "InvalidDocument";
    case ErrorCode::InvalidLexicon: return "InvalidLexicon";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::PlanInvalid: return "PlanInvalid";
    case ErrorCode::ChainInvalid: return "ChainInvalid";
    case ErrorCode::NoResponders: return "NoResponders";
    case ErrorCode::ProfileInvalid: return "ProfileInvalid";
    case ErrorCode::SpecInvalid: return "SpecInvalid";
    case ErrorCode::CaseNotFound: return "CaseNotFound";
    case ErrorCode::NoModelsSelected: return "NoModelsSelected";
    case ErrorCode::SubsetNotInRun: return "SubsetNotInRun";
    case ErrorCode::StoreConflict: return "StoreConflict";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

namespace text {

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(s.substr(start));
      break;
    }
    parts.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

std::vector<std::pair<std::string, std::string>> parse_arrow_pairs(std::string_view content,
                                                                   std::string_view source_name) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::size_t line_no = 0;
  for (const auto& raw : split(content, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto arrow = line.find("=>");
    if (arrow == std::string_view::npos) {
      throw Error(ErrorCode::InvalidDocument, std::string(source_name) + ":" + std::to_string(line_no) +
                                                  ": expected 'left => right'");
    }
    const auto left = trim(line.substr(0, arrow));
    const auto right = trim(line.substr(arrow + 2));
    if (left.empty() || right.empty()) {
      throw Error(ErrorCode::InvalidDocument,
                  std::string(source_name) + ":" + std::to_string(line_no) + ": empty side of mapping");
    }
    pairs.emplace_back(std::string(left), std::string(right));
  }
  return pairs;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot rename " + tmp + ": " + ec.message());
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

}  // namespace text
}  // namespace dxe
