// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cctype>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "geneo/error.hpp"
#include "geneo/pointcloud.hpp"

namespace geneo {

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

namespace detail {
inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace detail

/// Flat `key = value` text. `#` starts a comment; blank lines are skipped.
/// Keys are the long CLI flag names without the leading dashes.
inline ConfigEntries parse_config(std::string_view text, std::string_view source = "<config>") {
  ConfigEntries out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = std::string(source) + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (key.front() == '-') throw ConfigError(where + ": write key '" + std::string(key) + "' without leading dashes");
    for (char c : key) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) {
        throw ConfigError(where + ": invalid key '" + std::string(key) + "'");
      }
    }
    out.emplace_back(std::string(key), std::string(value));
  }
  return out;
}

inline ConfigEntries load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.string());
}

}  // namespace geneo
