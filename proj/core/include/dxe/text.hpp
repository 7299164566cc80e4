#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Small string helpers shared by the parsers and renderers.
namespace dxe::text {

// ASCII-only lowering; bytes >= 0x80 pass through untouched.
std::string to_lower(std::string_view s);

std::string_view trim(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

// Alphanumeric ASCII or any non-ASCII byte (UTF-8 continuation-safe).
inline bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || u >= 0x80;
}

// Parses "left => right" mapping assets. Blank lines and lines whose first
// non-space character is '#' are skipped. Pairs are returned in file order.
// Throws Error(InvalidDocument) on a line without the separator.
std::vector<std::pair<std::string, std::string>> parse_arrow_pairs(std::string_view content,
                                                                   std::string_view source_name);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view content);

// Fixed-point rendering used in reports: format_fixed(0.63333, 2) == "0.63".
std::string format_fixed(double value, int decimals);

}  // namespace dxe::text
