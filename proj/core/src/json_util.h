// Copyright 2026 The hdatrain Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Helpers shared by the JSON readers. Not installed.
#pragma once

#include <set>
#include <string>
#include <vector>

#include "hdatrain/error.h"
#include "json.hpp"

namespace hdatrain::json_util {

using nlohmann::json;

[[noreturn]] inline void Schema(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::kSchemaViolation, where + ": " + what);
}

inline void CheckKeys(const json& obj, const std::string& where,
                      const std::set<std::string>& required,
                      const std::set<std::string>& optional = {}) {
  if (!obj.is_object()) Schema(where, "expected an object");
  for (const auto& key : required) {
    if (!obj.contains(key)) Schema(where, "missing field \"" + key + "\"");
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!required.count(it.key()) && !optional.count(it.key())) {
      Schema(where, "unknown field \"" + it.key() + "\"");
    }
  }
}

inline std::string GetString(const json& obj, const std::string& key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_string()) Schema(where, "\"" + key + "\" must be a string");
  return v.get<std::string>();
}

inline std::vector<std::string> GetStrings(const json& obj, const std::string& key,
                                           const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_array()) Schema(where, "\"" + key + "\" must be a list of strings");
  std::vector<std::string> out;
  for (const auto& item : v) {
    if (!item.is_string()) Schema(where, "\"" + key + "\" must be a list of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

inline int64_t AsInt(const json& v, const std::string& where, const std::string& key) {
  if (!v.is_number_integer()) Schema(where, "\"" + key + "\" must be an integer");
  return v.get<int64_t>();
}

inline double AsDouble(const json& v, const std::string& where, const std::string& key) {
  if (!v.is_number()) Schema(where, "\"" + key + "\" must be a number");
  return v.get<double>();
}

// Parses `text`, reporting syntax errors as kParseError with a line number.
inline json Parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    size_t line = 1;
    const size_t limit = std::min(static_cast<size_t>(e.byte), text.size());
    for (size_t i = 0; i < limit; ++i) line += text[i] == '\n';
    throw Error(ErrorCode::kParseError, "line " + std::to_string(line) + ": " + e.what());
  }
}

std::string ReadFile(const std::string& path);
void WriteFile(const std::string& path, const std::string& content);

}  // namespace hdatrain::json_util
