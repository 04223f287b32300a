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


#pragma once

#include <filesystem>
#include <memory>

#include "mbias/detect.hpp"
#include "mbias/lexicon.hpp"
#include "mbias/similarity.hpp"

namespace mbias::testing {

inline std::filesystem::path data_dir() { return MBIAS_TEST_DATA_DIR; }

inline const Lexicons& shipped_lexicons() {
  static const Lexicons lex = load_lexicons(LexiconPaths::in_directory(data_dir()));
  return lex;
}

/// Scorer returning a constant, on the BERTScore scale.
class FixedScorer final : public SimilarityScorer {
 public:
  explicit FixedScorer(double value) : value_(value) {}
  double score(std::string_view, std::string_view) const override { return value_; }
  std::string scorer_id() const override { return "fixed"; }
  bool bertscore_compatible() const override { return true; }

 private:
  double value_;
};

inline Detector token_f1_detector() {
  DetectorConfig cfg;
  cfg.semsim = TokenF1Scorer::kThresholds;
  return Detector(shipped_lexicons(), std::make_shared<TokenF1Scorer>(), cfg);
}

}  // namespace mbias::testing
