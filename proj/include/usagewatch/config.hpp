#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <string>

#include "usagewatch/csv.hpp"
#include "usagewatch/errors.hpp"

namespace usagewatch {

using KeyValues = std::map<std::string, std::string>;

// Plain key = value configuration text: one pair per line, '#' comments and
// blank lines ignored. Values keep internal whitespace.
inline KeyValues parse_key_values(std::istream& in) {
  KeyValues out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ParseError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty key");
    }
    out[key] = value;
  }
  return out;
}

inline KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  return parse_key_values(in);
}

}  // namespace usagewatch
