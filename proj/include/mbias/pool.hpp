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


// Feature-annotated placeholder pools for calibration and probing against
// models that read annotations rather than text (the synthetic oracle).

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "mbias/core.hpp"
#include "mbias/error.hpp"
#include "mbias/random.hpp"

namespace mbias {

struct SyntheticPoolConfig {
  TypeSet types = {BiasType::kSentenceLength, BiasType::kLexicalOverlap,
                   BiasType::kSemanticSimilarity, BiasType::kSpeculativeWord};
  /// Label-balanced samples carrying exactly one feature, per feature.
  std::size_t pure_per_feature = 30;
  /// Label-balanced triplets per multi-feature combination.
  std::size_t triplets_per_combination = 3;
  /// Label-balanced samples carrying no feature.
  std::size_t featureless = 30;
  std::uint64_t seed = 0;
  std::string id_prefix = "pool-";

  void validate() const {
    if (types.empty()) throw ValidationError("pool needs at least one bias type");
    if (pure_per_feature % kNumLabels || featureless % kNumLabels) {
      throw ValidationError("pool per-feature and featureless counts must be multiples of 3");
    }
  }
};

/// Every feature set over `types` holding at least `min_size` features, in
/// set order.
inline std::vector<FeatureSet> feature_combinations(const TypeSet& types, std::size_t min_size) {
  std::vector<FeatureSet> sets = {FeatureSet{}};
  for (BiasType t : types.items()) {
    std::vector<FeatureSet> next;
    for (const auto& s : sets) {
      next.push_back(s);
      for (const auto& fi : kBiasFeatures) {
        if (fi.type != t) continue;
        FeatureSet e = s;
        e.insert(fi.feature);
        next.push_back(e);
      }
    }
    sets = std::move(next);
  }
  std::vector<FeatureSet> out;
  for (const auto& s : sets) {
    if (s.size() >= min_size) out.push_back(s);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Samples are emitted in shuffled order with sequential ids; labels cycle
/// within every block so each block is exactly balanced.
inline std::vector<NLISample> synthetic_pool(const SyntheticPoolConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<FeatureSet, Label>> rows;
  auto add_block = [&](const FeatureSet& fs, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) rows.emplace_back(fs, label_at(i % kNumLabels));
  };
  add_block(FeatureSet{}, cfg.featureless);
  for (const auto& fi : kBiasFeatures) {
    if (cfg.types.contains(fi.type)) add_block(FeatureSet{fi.feature}, cfg.pure_per_feature);
  }
  for (const auto& fs : feature_combinations(cfg.types, 2)) {
    add_block(fs, kNumLabels * cfg.triplets_per_combination);
  }
  Rng rng(cfg.seed);
  rng.shuffle(rows);

  std::vector<NLISample> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    NLISample s;
    s.id = cfg.id_prefix + std::to_string(i + 1);
    s.premise = "Placeholder premise " + std::to_string(i + 1) + ".";
    s.hypothesis = "Placeholder hypothesis " + std::to_string(i + 1) + ".";
    s.gold = rows[i].second;
    s.features = rows[i].first;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mbias
