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

// Shared domain types: NLI labels, probability vectors and the bias feature
// taxonomy. Every vector in the library uses the label order
// entailment = 0, neutral = 1, contradiction = 2.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mbias/error.hpp"

namespace mbias {

// ---------------------------------------------------------------------------
// Labels

enum class Label : std::uint8_t {
  kEntailment = 0,
  kNeutral = 1,
  kContradiction = 2,
};

inline constexpr std::size_t kNumLabels = 3;

inline constexpr std::array<Label, kNumLabels> kAllLabels = {
    Label::kEntailment, Label::kNeutral, Label::kContradiction};

constexpr std::size_t index_of(Label label) {
  return static_cast<std::size_t>(label);
}

constexpr Label label_at(std::size_t index) {
  return kAllLabels.at(index);
}

constexpr std::string_view to_string(Label label) {
  switch (label) {
    case Label::kEntailment:
      return "entailment";
    case Label::kNeutral:
      return "neutral";
    case Label::kContradiction:
      return "contradiction";
  }
  return "?";
}

inline std::optional<Label> parse_label(std::string_view text) {
  for (Label label : kAllLabels) {
    if (to_string(label) == text) return label;
  }
  return std::nullopt;
}

inline Label parse_label_or_throw(std::string_view text) {
  if (auto label = parse_label(text)) return *label;
  throw ValidationError("unknown label '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Score and probability vectors

/// Unnormalized real vector over the three labels. Differences of
/// distributions (causal effects) live here; components may be negative.
class ScoreVector {
 public:
  constexpr ScoreVector() = default;
  constexpr ScoreVector(double e, double n, double c) : values_{e, n, c} {}
  constexpr explicit ScoreVector(const std::array<double, kNumLabels>& v)
      : values_(v) {}

  constexpr double operator[](std::size_t i) const { return values_[i]; }
  constexpr double& operator[](std::size_t i) { return values_[i]; }
  constexpr double operator[](Label l) const { return values_[index_of(l)]; }

  constexpr const std::array<double, kNumLabels>& values() const {
    return values_;
  }

  double sum() const { return values_[0] + values_[1] + values_[2]; }

  bool is_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  ScoreVector& operator+=(const ScoreVector& o) {
    for (std::size_t i = 0; i < kNumLabels; ++i) values_[i] += o.values_[i];
    return *this;
  }
  ScoreVector& operator-=(const ScoreVector& o) {
    for (std::size_t i = 0; i < kNumLabels; ++i) values_[i] -= o.values_[i];
    return *this;
  }
  ScoreVector& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }

  friend ScoreVector operator+(ScoreVector a, const ScoreVector& b) {
    return a += b;
  }
  friend ScoreVector operator-(ScoreVector a, const ScoreVector& b) {
    return a -= b;
  }
  friend ScoreVector operator*(double s, ScoreVector a) { return a *= s; }
  friend ScoreVector operator*(ScoreVector a, double s) { return a *= s; }

  friend bool operator==(const ScoreVector&, const ScoreVector&) = default;

 private:
  std::array<double, kNumLabels> values_{};
};

inline constexpr double kDistTolerance = 1e-9;

/// A probability distribution over the three labels. Construction checks
/// that components are in [0,1] and sum to 1 within kDistTolerance.
class ProbDist {
 public:
  ProbDist(double e, double n, double c) : ProbDist(std::array{e, n, c}) {}

  explicit ProbDist(const std::array<double, kNumLabels>& values)
      : values_(values) {
    double total = 0.0;
    for (double v : values_) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0 + kDistTolerance) {
        throw ValidationError("probability component out of [0,1]: " +
                              std::to_string(v));
      }
      total += v;
    }
    if (std::abs(total - 1.0) > kDistTolerance) {
      throw ValidationError("probability vector sums to " +
                            std::to_string(total) + ", expected 1");
    }
  }

  /// Clips negatives to zero and rescales; all-nonpositive input yields
  /// the uniform distribution.
  static ProbDist normalized(const ScoreVector& raw);

  double operator[](std::size_t i) const { return values_[i]; }
  double operator[](Label l) const { return values_[index_of(l)]; }
  const std::array<double, kNumLabels>& values() const { return values_; }

  ScoreVector scores() const { return ScoreVector(values_); }

  friend bool operator==(const ProbDist&, const ProbDist&) = default;

 private:
  std::array<double, kNumLabels> values_;
};

inline ProbDist uniform_dist() {
  constexpr double third = 1.0 / 3.0;
  return ProbDist(third, third, third);
}

inline ProbDist ProbDist::normalized(const ScoreVector& raw) {
  if (!raw.is_finite()) throw ValidationError("non-finite score vector");
  std::array<double, kNumLabels> clipped{};
  double total = 0.0;
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    clipped[i] = std::max(raw[i], 0.0);
    total += clipped[i];
  }
  if (total <= 0.0) return uniform_dist();
  for (double& v : clipped) v /= total;
  return ProbDist(clipped);
}

inline ScoreVector operator-(const ProbDist& a, const ProbDist& b) {
  return a.scores() - b.scores();
}

/// Componentwise arithmetic mean of a non-empty list of distributions.
inline ProbDist dist_mean(std::span<const ProbDist> dists) {
  if (dists.empty()) throw ValidationError("dist_mean of an empty list");
  std::array<double, kNumLabels> acc{};
  for (const ProbDist& d : dists) {
    for (std::size_t i = 0; i < kNumLabels; ++i) acc[i] += d[i];
  }
  const auto n = static_cast<double>(dists.size());
  for (double& v : acc) v /= n;
  return ProbDist(acc);
}

/// Highest-scoring label; ties go to the lowest label index.
inline Label argmax_label(const ScoreVector& scores) {
  for (double v : scores.values()) {
    if (std::isnan(v)) throw ValidationError("argmax over NaN score");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumLabels; ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return label_at(best);
}

inline Label argmax_label(const ProbDist& dist) {
  return argmax_label(dist.scores());
}

// ---------------------------------------------------------------------------
// Bias taxonomy

enum class BiasType : std::uint8_t {
  kSentenceLength = 0,
  kLexicalOverlap,
  kSemanticSimilarity,
  kSpeculativeWord,
  kGenderOccupation,
};

inline constexpr std::size_t kNumBiasTypes = 5;

enum class BiasFeature : std::uint8_t {
  kHypShorter = 0,
  kHypLonger,
  kOverlapHigh,
  kOverlapLow,
  kSemsimHigh,
  kSemsimLow,
  kSpeculative,
  kMaleWithMaleOccupation,
  kMaleWithFemaleOccupation,
};

inline constexpr std::size_t kNumBiasFeatures = 9;

struct BiasTypeInfo {
  BiasType type;
  std::string_view id;
  std::string_view long_id;
};

inline constexpr std::array<BiasTypeInfo, kNumBiasTypes> kBiasTypes = {{
    {BiasType::kSentenceLength, "length", "sentence-length"},
    {BiasType::kLexicalOverlap, "overlap", "lexical-overlap"},
    {BiasType::kSemanticSimilarity, "semsim", "semantic-similarity"},
    {BiasType::kSpeculativeWord, "speculative", "speculative-word"},
    {BiasType::kGenderOccupation, "gender-occupation", "gender-occupation"},
}};

struct BiasFeatureInfo {
  BiasFeature feature;
  std::string_view id;
  BiasType type;
  Label polarity;
};

/// The nine bias features with the label each one pushes models towards.
inline constexpr std::array<BiasFeatureInfo, kNumBiasFeatures> kBiasFeatures =
    {{
        {BiasFeature::kHypShorter, "hyp-shorter", BiasType::kSentenceLength,
         Label::kEntailment},
        {BiasFeature::kHypLonger, "hyp-longer", BiasType::kSentenceLength,
         Label::kNeutral},
        {BiasFeature::kOverlapHigh, "overlap-high", BiasType::kLexicalOverlap,
         Label::kEntailment},
        {BiasFeature::kOverlapLow, "overlap-low", BiasType::kLexicalOverlap,
         Label::kNeutral},
        {BiasFeature::kSemsimHigh, "semsim-high",
         BiasType::kSemanticSimilarity, Label::kEntailment},
        {BiasFeature::kSemsimLow, "semsim-low", BiasType::kSemanticSimilarity,
         Label::kNeutral},
        {BiasFeature::kSpeculative, "speculative", BiasType::kSpeculativeWord,
         Label::kEntailment},
        {BiasFeature::kMaleWithMaleOccupation, "male-male-occupation",
         BiasType::kGenderOccupation, Label::kEntailment},
        {BiasFeature::kMaleWithFemaleOccupation, "male-female-occupation",
         BiasType::kGenderOccupation, Label::kContradiction},
    }};

constexpr const BiasFeatureInfo& info(BiasFeature f) {
  return kBiasFeatures[static_cast<std::size_t>(f)];
}
constexpr const BiasTypeInfo& info(BiasType t) {
  return kBiasTypes[static_cast<std::size_t>(t)];
}
constexpr BiasType type_of(BiasFeature f) { return info(f).type; }
constexpr Label polarity_of(BiasFeature f) { return info(f).polarity; }
constexpr std::string_view to_string(BiasFeature f) { return info(f).id; }
constexpr std::string_view to_string(BiasType t) { return info(t).id; }

inline std::optional<BiasFeature> parse_feature(std::string_view text) {
  for (const auto& fi : kBiasFeatures) {
    if (fi.id == text) return fi.feature;
  }
  return std::nullopt;
}

inline std::optional<BiasType> parse_bias_type(std::string_view text) {
  for (const auto& ti : kBiasTypes) {
    if (ti.id == text || ti.long_id == text) return ti.type;
  }
  return std::nullopt;
}

inline BiasFeature parse_feature_or_throw(std::string_view text) {
  if (auto f = parse_feature(text)) return *f;
  throw ValidationError("unknown bias feature '" + std::string(text) + "'");
}

inline BiasType parse_bias_type_or_throw(std::string_view text) {
  if (auto t = parse_bias_type(text)) return *t;
  throw ValidationError("unknown bias type '" + std::string(text) + "'");
}

/// Small ordered set over a dense enumeration, iterated in enum order.
template <typename Enum, std::size_t N>
class EnumSet {
  static_assert(N <= 32);

 public:
  constexpr EnumSet() = default;
  constexpr EnumSet(std::initializer_list<Enum> items) {
    for (Enum e : items) bits_ |= bit(e);
  }

  constexpr bool contains(Enum e) const { return (bits_ & bit(e)) != 0; }
  constexpr void insert(Enum e) { bits_ |= bit(e); }
  constexpr void erase(Enum e) { bits_ &= ~bit(e); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::size_t size() const {
    std::size_t n = 0;
    for (std::uint32_t b = bits_; b != 0; b &= b - 1) ++n;
    return n;
  }
  constexpr std::uint32_t bits() const { return bits_; }

  std::vector<Enum> items() const {
    std::vector<Enum> out;
    for (std::size_t i = 0; i < N; ++i) {
      if (bits_ & (1u << i)) out.push_back(static_cast<Enum>(i));
    }
    return out;
  }

  constexpr bool is_subset_of(const EnumSet& other) const {
    return (bits_ & ~other.bits_) == 0;
  }

  friend constexpr bool operator==(EnumSet, EnumSet) = default;
  friend constexpr auto operator<=>(EnumSet a, EnumSet b) {
    return a.bits_ <=> b.bits_;
  }

 private:
  static constexpr std::uint32_t bit(Enum e) {
    return 1u << static_cast<std::uint32_t>(e);
  }
  std::uint32_t bits_ = 0;
};

using TypeSet = EnumSet<BiasType, kNumBiasTypes>;

inline TypeSet all_bias_types() {
  TypeSet s;
  for (const auto& ti : kBiasTypes) s.insert(ti.type);
  return s;
}

/// Feature set holding at most one feature per bias type.
class FeatureSet {
 public:
  FeatureSet() = default;
  FeatureSet(std::initializer_list<BiasFeature> items) {
    for (BiasFeature f : items) insert(f);
  }

  /// Throws ValidationError if another feature of the same type is present.
  void insert(BiasFeature f) {
    if (set_.contains(f)) return;
    if (auto existing = feature_of(type_of(f))) {
      throw ValidationError("feature set already holds '" +
                            std::string(to_string(*existing)) +
                            "' for bias type '" +
                            std::string(to_string(type_of(f))) + "'");
    }
    set_.insert(f);
  }

  bool contains(BiasFeature f) const { return set_.contains(f); }
  bool empty() const { return set_.empty(); }
  std::size_t size() const { return set_.size(); }
  std::vector<BiasFeature> items() const { return set_.items(); }
  std::uint32_t bits() const { return set_.bits(); }

  std::optional<BiasFeature> feature_of(BiasType t) const {
    for (BiasFeature f : set_.items()) {
      if (type_of(f) == t) return f;
    }
    return std::nullopt;
  }

  TypeSet types() const {
    TypeSet out;
    for (BiasFeature f : set_.items()) out.insert(type_of(f));
    return out;
  }

  /// Subset whose features belong to the given types.
  FeatureSet restricted_to(const TypeSet& types) const {
    FeatureSet out;
    for (BiasFeature f : set_.items()) {
      if (types.contains(type_of(f))) out.set_.insert(f);
    }
    return out;
  }

  bool is_subset_of(const FeatureSet& other) const {
    return set_.is_subset_of(other.set_);
  }

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
  friend auto operator<=>(const FeatureSet& a, const FeatureSet& b) {
    return a.set_ <=> b.set_;
  }

 private:
  EnumSet<BiasFeature, kNumBiasFeatures> set_;
};

inline std::string join_ids(const FeatureSet& s, std::string_view sep = ",") {
  std::string out;
  for (BiasFeature f : s.items()) {
    if (!out.empty()) out += sep;
    out += to_string(f);
  }
  return out;
}

inline std::string join_ids(const TypeSet& s, std::string_view sep = ",") {
  std::string out;
  for (BiasType t : s.items()) {
    if (!out.empty()) out += sep;
    out += to_string(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Samples

struct NLISample {
  std::string id;
  std::string premise;
  std::string hypothesis;
  std::optional<Label> gold;
  /// Filled by detection, or carried as an annotation on synthetic pools.
  std::optional<FeatureSet> features;

  void validate() const {
    if (premise.empty() || hypothesis.empty()) {
      throw ValidationError("sample '" + id +
                            "' has an empty premise or hypothesis");
    }
  }

  friend bool operator==(const NLISample&, const NLISample&) = default;
};

}  // namespace mbias
