#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pnp/error.hpp"

namespace pnp {

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace detail

/// Flat `key = value` lines; `#` starts a comment, blank lines are skipped.
/// Keys may not repeat. Order is preserved.
inline ConfigEntries parse_config(const std::string& text) {
  ConfigEntries out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty())
      throw InvalidArgument("config line " + std::to_string(lineno) + ": empty key");
    for (const auto& [k, v] : out)
      if (k == key)
        throw InvalidArgument("config line " + std::to_string(lineno) + ": duplicate key " + key);
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

inline ConfigEntries read_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream body;
  body << in.rdbuf();
  return parse_config(body.str());
}

}  // namespace pnp
