// Copyright 2026 The mbias Authors. All Rights Reserved.
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

// JSON mapping of the core types, JSON-lines helpers, atomic file writes
// and content hashing.

#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mbias/core.hpp"
#include "mbias/error.hpp"

namespace mbias {

using json = nlohmann::json;
// Keys keep insertion order so emitted files are stable and readable.
using ordered_json = nlohmann::ordered_json;

inline void to_json(json& j, Label l) { j = std::string(to_string(l)); }
inline void from_json(const json& j, Label& l) {
  l = parse_label_or_throw(j.get<std::string>());
}
inline void to_json(ordered_json& j, Label l) {
  j = std::string(to_string(l));
}

inline void to_json(json& j, const ScoreVector& v) {
  j = json::array({v[0], v[1], v[2]});
}
inline void to_json(ordered_json& j, const ScoreVector& v) {
  j = ordered_json::array({v[0], v[1], v[2]});
}
inline void from_json(const json& j, ScoreVector& v) {
  if (!j.is_array() || j.size() != kNumLabels) {
    throw ValidationError("score vector must be an array of 3 numbers");
  }
  v = ScoreVector(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline void to_json(json& j, const ProbDist& d) { j = d.scores(); }
inline void to_json(ordered_json& j, const ProbDist& d) { j = d.scores(); }
inline ProbDist prob_dist_from_json(const json& j) {
  return ProbDist(j.get<ScoreVector>().values());
}

/// Feature ids in lexicographic order.
inline std::vector<std::string> sorted_feature_ids(const FeatureSet& s) {
  std::vector<std::string> ids;
  for (BiasFeature f : s.items()) ids.emplace_back(to_string(f));
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline json feature_ids_json(const FeatureSet& s) { return sorted_feature_ids(s); }

inline FeatureSet feature_set_from_json(const json& j) {
  FeatureSet s;
  for (const auto& item : j) s.insert(parse_feature_or_throw(item.get<std::string>()));
  return s;
}

/// Sample fields in a fixed order; absent optionals are omitted.
inline ordered_json sample_to_json(const NLISample& s) {
  ordered_json j;
  j["id"] = s.id;
  j["premise"] = s.premise;
  j["hypothesis"] = s.hypothesis;
  if (s.gold) j["gold"] = std::string(to_string(*s.gold));
  if (s.features) j["features"] = sorted_feature_ids(*s.features);
  return j;
}

inline NLISample sample_from_json(const json& j) {
  NLISample s;
  s.id = j.at("id").get<std::string>();
  s.premise = j.at("premise").get<std::string>();
  s.hypothesis = j.at("hypothesis").get<std::string>();
  if (auto it = j.find("gold"); it != j.end() && !it->is_null()) {
    s.gold = it->get<Label>();
  }
  if (auto it = j.find("features"); it != j.end() && !it->is_null()) {
    s.features = feature_set_from_json(*it);
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a sibling temp file and renames it into place, so
/// readers never observe a partially written file.
inline void write_file_atomic(const std::filesystem::path& path,
                              std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path() && !fs::exists(path.parent_path())) {
    throw IoError("output directory does not exist: '" +
                  path.parent_path().string() + "'");
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename into '" + path.string() + "': " + ec.message());
}

/// Calls fn(line_number, object) for each non-blank line.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(std::size_t, const json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed JSON: " + e.what());
    }
    try {
      fn(lineno, j);
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": " + e.what());
    }
  }
}

inline std::vector<NLISample> read_samples_jsonl(const std::filesystem::path& path) {
  std::vector<NLISample> out;
  for_each_jsonl(path, [&](std::size_t, const json& j) {
    out.push_back(sample_from_json(j));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Hashing

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw ValidationError("sha256 digest failed");
  }
  std::ostringstream ss;
  ss << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) ss << std::setw(2) << static_cast<int>(digest[i]);
  return ss.str();
}

}  // namespace mbias
