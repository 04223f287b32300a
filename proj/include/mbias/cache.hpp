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

// Append-only prediction cache. Entries live in a JSON-lines data file;
// a sidecar "<file>.idx" maps keys to byte offsets and records the data
// size it covers. A stale or missing sidecar is rebuilt by scanning.

#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "mbias/core.hpp"
#include "mbias/error.hpp"
#include "mbias/io.hpp"

namespace mbias {

struct CacheEntry {
  ProbDist dist = uniform_dist();
  std::string model;
  std::string strategy;
  int unparsed = 0;
};

class ReplayCache {
 public:
  explicit ReplayCache(std::filesystem::path path, std::size_t index_flush_every = 256)
      : path_(std::move(path)), flush_every_(std::max<std::size_t>(1, index_flush_every)) {
    load_index();
  }

  ReplayCache(const ReplayCache&) = delete;
  ReplayCache& operator=(const ReplayCache&) = delete;

  ~ReplayCache() {
    try {
      flush_index();
    } catch (...) {
      // A stale sidecar is detected and rebuilt on next open.
    }
  }

  static std::filesystem::path index_path(const std::filesystem::path& data) {
    auto p = data;
    p += ".idx";
    return p;
  }

  const std::filesystem::path& path() const { return path_; }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return offsets_.size();
  }

  std::optional<CacheEntry> get(const std::string& key) const {
    std::uint64_t offset;
    {
      std::shared_lock lock(mu_);
      auto it = offsets_.find(key);
      if (it == offsets_.end()) return std::nullopt;
      offset = it->second;
    }
    std::ifstream in(path_, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(offset));
    std::string line;
    if (!in || !std::getline(in, line)) {
      throw IoError("cache '" + path_.string() + "' is truncated at offset " +
                    std::to_string(offset));
    }
    return entry_from_json(json::parse(line));
  }

  /// First write wins; a second put for an existing key is ignored.
  void put(const std::string& key, const CacheEntry& entry) {
    std::unique_lock lock(mu_);
    if (offsets_.count(key)) return;
    ordered_json j;
    j["key"] = key;
    j["model"] = entry.model;
    j["strategy"] = entry.strategy;
    j["dist"] = entry.dist;
    j["unparsed"] = entry.unparsed;
    std::string line = j.dump();
    line += '\n';
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to cache '" + path_.string() + "'");
    if (needs_newline_) {
      out.put('\n');
      ++data_size_;
      needs_newline_ = false;
    }
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.flush();
    if (!out) throw IoError("short write to cache '" + path_.string() + "'");
    offsets_.emplace(key, data_size_);
    data_size_ += line.size();
    if (++dirty_ >= flush_every_) write_index_locked();
  }

  void flush_index() {
    std::unique_lock lock(mu_);
    if (dirty_ > 0) write_index_locked();
  }

 private:
  static CacheEntry entry_from_json(const json& j) {
    CacheEntry e;
    e.dist = prob_dist_from_json(j.at("dist"));
    e.model = j.value("model", "");
    e.strategy = j.value("strategy", "");
    e.unparsed = j.value("unparsed", 0);
    return e;
  }

  void load_index() {
    namespace fs = std::filesystem;
    if (!fs::exists(path_)) {
      data_size_ = 0;
      return;
    }
    data_size_ = fs::file_size(path_);
    const auto idx = index_path(path_);
    if (fs::exists(idx)) {
      try {
        const json j = json::parse(read_text_file(idx));
        if (j.at("data_size").get<std::uint64_t>() == data_size_) {
          for (const auto& [k, v] : j.at("entries").items()) offsets_[k] = v.get<std::uint64_t>();
          return;
        }
      } catch (const json::exception&) {
        // fall through to a rebuild
      }
    }
    rebuild_index();
  }

  void rebuild_index() {
    offsets_.clear();
    std::ifstream in(path_, std::ios::binary);
    std::string line;
    std::uint64_t offset = 0;
    while (std::getline(in, line)) {
      const bool complete = !in.eof();
      if (complete) {
        try {
          const json j = json::parse(line);
          offsets_.emplace(j.at("key").get<std::string>(), offset);
        } catch (const json::exception&) {
          // torn or foreign line; leave it unindexed
        }
      }
      offset += line.size() + (complete ? 1 : 0);
    }
    needs_newline_ = data_size_ > 0 && offset == data_size_ && !ends_with_newline();
    dirty_ = 1;
    write_index_locked();
  }

  bool ends_with_newline() const {
    std::ifstream in(path_, std::ios::binary);
    in.seekg(-1, std::ios::end);
    char c = 0;
    in.get(c);
    return c == '\n';
  }

  void write_index_locked() {
    json entries = json::object();
    for (const auto& [k, v] : offsets_) entries[k] = v;
    json j = {{"version", 1}, {"data_size", data_size_}, {"entries", std::move(entries)}};
    write_file_atomic(index_path(path_), j.dump());
    dirty_ = 0;
  }

  std::filesystem::path path_;
  std::size_t flush_every_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::uint64_t> offsets_;
  std::uint64_t data_size_ = 0;
  std::size_t dirty_ = 0;
  bool needs_newline_ = false;
};

}  // namespace mbias
