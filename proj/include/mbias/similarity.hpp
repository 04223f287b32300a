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

// Premise/hypothesis similarity scorers used by the semantic-similarity
// detector.

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "mbias/error.hpp"
#include "mbias/http.hpp"
#include "mbias/text.hpp"

namespace mbias {

struct SemsimThresholds {
  double high = 0.88;
  double low = 0.83;
};

/// Thresholds that hold for BERTScore-calibrated scorers.
inline constexpr SemsimThresholds kBertScoreThresholds{0.88, 0.83};

/// Implementations must be safe to call from several threads.
class SimilarityScorer {
 public:
  virtual ~SimilarityScorer() = default;

  /// Score in [0,1]; deterministic for fixed inputs and scorer_id().
  virtual double score(std::string_view premise, std::string_view hypothesis) const = 0;
  virtual std::string scorer_id() const = 0;

  /// Scorers whose scale matches BERTScore may use kBertScoreThresholds.
  virtual bool bertscore_compatible() const { return false; }

  /// Thresholds the scorer was calibrated for, if it ships any.
  virtual std::optional<SemsimThresholds> recommended_thresholds() const {
    if (bertscore_compatible()) return kBertScoreThresholds;
    return std::nullopt;
  }
};

/// Offline proxy: F1 between the unique token sets of the two sentences.
class TokenF1Scorer final : public SimilarityScorer {
 public:
  static constexpr SemsimThresholds kThresholds{0.5, 0.25};

  double score(std::string_view premise, std::string_view hypothesis) const override {
    const auto p = unique_tokens(tokenize(premise));
    const auto h = unique_tokens(tokenize(hypothesis));
    if (p.empty() || h.empty()) return 0.0;
    std::size_t common = 0;
    for (const auto& t : h) common += p.count(t);
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / static_cast<double>(h.size());
    const double recall = static_cast<double>(common) / static_cast<double>(p.size());
    return 2.0 * precision * recall / (precision + recall);
  }

  std::string scorer_id() const override { return "token-f1"; }

  std::optional<SemsimThresholds> recommended_thresholds() const override {
    return kThresholds;
  }
};

struct EmbeddingScorerConfig {
  std::string base_url;            // e.g. http://localhost:8000
  std::string path = "/embed";
  std::string api_key_env;         // env var holding a bearer token
  std::string model;               // forwarded as "model" when non-empty
  std::string scorer_id = "embedding-cosine";
  bool bertscore_compatible = false;
  std::chrono::milliseconds timeout{30000};
  RetryPolicy retry;
};

/// Client for an embedding service. Request body:
///   {"texts": [premise, hypothesis], "model": ...}
/// Response body:
///   {"embeddings": [[...], [...]]}  (two vectors of equal length)
/// The score is the cosine similarity mapped from [-1,1] onto [0,1].
class EmbeddingScorer final : public SimilarityScorer {
 public:
  explicit EmbeddingScorer(EmbeddingScorerConfig cfg)
      : cfg_(std::move(cfg)), target_(HttpTarget::parse(cfg_.base_url)) {}

  double score(std::string_view premise, std::string_view hypothesis) const override {
    json body = {{"texts", {std::string(premise), std::string(hypothesis)}}};
    if (!cfg_.model.empty()) body["model"] = cfg_.model;
    const json reply = post_json(target_, cfg_.path, body, token_from_env(cfg_.api_key_env),
                                 cfg_.timeout, cfg_.retry);
    return cosine_score(reply);
  }

  std::string scorer_id() const override { return cfg_.scorer_id; }
  bool bertscore_compatible() const override { return cfg_.bertscore_compatible; }

  static double cosine_score(const json& reply) {
    const auto it = reply.find("embeddings");
    if (it == reply.end() || !it->is_array() || it->size() != 2) {
      throw ValidationError("embedding response must carry two vectors");
    }
    const auto a = (*it)[0].get<std::vector<double>>();
    const auto b = (*it)[1].get<std::vector<double>>();
    if (a.empty() || a.size() != b.size()) {
      throw ValidationError("embedding vectors must be non-empty and equal length");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.5;
    const double cosine = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
    return (cosine + 1.0) / 2.0;
  }

 private:
  EmbeddingScorerConfig cfg_;
  HttpTarget target_;
};

}  // namespace mbias
