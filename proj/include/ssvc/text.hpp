#pragma once

// Exact number <-> text conversion and strict "key = value" parsing.

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

namespace ssvc {

class config_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buf, end);
}

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw config_error(std::string(what) + ": expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

inline std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw config_error(std::string(what) + ": expected a non-negative integer, got '" +
                       std::string(text) + "'");
  }
  return v;
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// One "key = value" per line, '#' starts a comment, blank lines ignored.
// Repeated keys are rejected. Order of appearance is preserved.
inline KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw config_error("line " + std::to_string(line_no) + ": expected key = value, got '" +
                         trim(line) + "'");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw config_error("line " + std::to_string(line_no) + ": empty key");
    for (const auto& [k, _] : out) {
      if (k == key) {
        throw config_error("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
      }
    }
    out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return out;
}

inline const std::string* find_value(const KeyValues& kv, std::string_view key) {
  for (const auto& [k, v] : kv) {
    if (k == key) return &v;
  }
  return nullptr;
}

}  // namespace ssvc
