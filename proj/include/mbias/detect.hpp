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

// Deterministic detectors for the nine bias features.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "mbias/core.hpp"
#include "mbias/error.hpp"
#include "mbias/lexicon.hpp"
#include "mbias/similarity.hpp"
#include "mbias/text.hpp"

namespace mbias {

struct DetectorConfig {
  int length_gap_words = 5;
  double overlap_high = 0.8;
  double overlap_low = 0.2;
  /// Unset means "use kBertScoreThresholds", which is only allowed for
  /// BERTScore-compatible scorers.
  std::optional<SemsimThresholds> semsim;

  void validate() const {
    if (length_gap_words < 1) throw ValidationError("length_gap_words must be >= 1");
    if (!(overlap_low < overlap_high)) {
      throw ValidationError("overlap_low must be below overlap_high");
    }
    if (semsim && !(semsim->low < semsim->high)) {
      throw ValidationError("semsim low threshold must be below the high threshold");
    }
  }
};

inline SemsimThresholds resolve_semsim_thresholds(const DetectorConfig& cfg,
                                                  const SimilarityScorer& scorer) {
  if (cfg.semsim) return *cfg.semsim;
  if (scorer.bertscore_compatible()) return kBertScoreThresholds;
  throw ValidationError("scorer '" + scorer.scorer_id() +
                        "' is not BERTScore-compatible; set semsim thresholds explicitly");
}

/// Share of the hypothesis's unique tokens that also occur in the premise.
inline double lexical_overlap(std::string_view premise, std::string_view hypothesis) {
  const auto h = unique_tokens(tokenize(hypothesis));
  if (h.empty()) throw ValidationError("lexical overlap needs a non-empty hypothesis");
  const auto p = unique_tokens(tokenize(premise));
  std::size_t common = 0;
  for (const auto& t : h) common += p.count(t);
  return static_cast<double>(common) / static_cast<double>(h.size());
}

inline std::optional<BiasFeature> length_feature(std::string_view premise,
                                                 std::string_view hypothesis,
                                                 const DetectorConfig& cfg) {
  const auto p = static_cast<long>(tokenize(premise).size());
  const auto h = static_cast<long>(tokenize(hypothesis).size());
  if (p - h > cfg.length_gap_words) return BiasFeature::kHypShorter;
  if (h - p > cfg.length_gap_words) return BiasFeature::kHypLonger;
  return std::nullopt;
}

inline std::optional<BiasFeature> overlap_feature(std::string_view premise,
                                                  std::string_view hypothesis,
                                                  const DetectorConfig& cfg) {
  if (tokenize(hypothesis).empty()) return std::nullopt;
  const double rate = lexical_overlap(premise, hypothesis);
  if (rate > cfg.overlap_high) return BiasFeature::kOverlapHigh;
  if (rate < cfg.overlap_low) return BiasFeature::kOverlapLow;
  return std::nullopt;
}

inline std::optional<BiasFeature> speculative_feature(std::string_view premise,
                                                      std::string_view hypothesis,
                                                      const Lexicons& lex) {
  for (std::string_view text : {premise, hypothesis}) {
    for (const auto& t : tokenize(text)) {
      if (lex.speculative_words.count(t)) return BiasFeature::kSpeculative;
    }
  }
  return std::nullopt;
}

namespace detail {

inline bool mentions_any(const Tokens& tokens, const std::set<std::string>& phrases) {
  for (const auto& phrase : phrases) {
    if (contains_phrase(tokens, tokenize(phrase))) return true;
  }
  return false;
}

}  // namespace detail

/// Male pronoun in the hypothesis combined with a gender-associated
/// occupation in the premise. Male-biased occupations win if both occur.
inline std::optional<BiasFeature> gender_occupation_feature(std::string_view premise,
                                                            std::string_view hypothesis,
                                                            const Lexicons& lex) {
  const auto hyp = tokenize(hypothesis);
  bool male_ref = false;
  for (const auto& t : hyp) male_ref = male_ref || lex.male_pronouns.count(t) > 0;
  if (!male_ref) return std::nullopt;
  const auto prem = tokenize(premise);
  if (detail::mentions_any(prem, lex.male_biased_occupations)) {
    return BiasFeature::kMaleWithMaleOccupation;
  }
  if (detail::mentions_any(prem, lex.female_biased_occupations)) {
    return BiasFeature::kMaleWithFemaleOccupation;
  }
  return std::nullopt;
}

inline std::optional<BiasFeature> semsim_feature(std::string_view premise,
                                                 std::string_view hypothesis,
                                                 const SimilarityScorer& scorer,
                                                 const DetectorConfig& cfg) {
  const SemsimThresholds th = resolve_semsim_thresholds(cfg, scorer);
  const double s = scorer.score(premise, hypothesis);
  if (s > th.high) return BiasFeature::kSemsimHigh;
  if (s < th.low) return BiasFeature::kSemsimLow;
  return std::nullopt;
}

/// Union of all five detectors.
inline FeatureSet detect_all(const NLISample& sample, const Lexicons& lex,
                             const SimilarityScorer& scorer, const DetectorConfig& cfg) {
  FeatureSet out;
  const std::string_view p = sample.premise, h = sample.hypothesis;
  for (auto f : {length_feature(p, h, cfg), overlap_feature(p, h, cfg),
                 semsim_feature(p, h, scorer, cfg), speculative_feature(p, h, lex),
                 gender_occupation_feature(p, h, lex)}) {
    if (f) out.insert(*f);
  }
  return out;
}

/// Lexicons, scorer and thresholds bundled for repeated detection.
class Detector {
 public:
  Detector(Lexicons lex, std::shared_ptr<const SimilarityScorer> scorer, DetectorConfig cfg)
      : lex_(std::move(lex)), scorer_(std::move(scorer)), cfg_(std::move(cfg)) {
    if (!scorer_) throw ValidationError("detector needs a similarity scorer");
    cfg_.validate();
    resolve_semsim_thresholds(cfg_, *scorer_);
  }

  FeatureSet detect(const NLISample& sample) const {
    return detect_all(sample, lex_, *scorer_, cfg_);
  }

  const Lexicons& lexicons() const { return lex_; }
  const SimilarityScorer& scorer() const { return *scorer_; }
  const DetectorConfig& config() const { return cfg_; }

 private:
  Lexicons lex_;
  std::shared_ptr<const SimilarityScorer> scorer_;
  DetectorConfig cfg_;
};

}  // namespace mbias
