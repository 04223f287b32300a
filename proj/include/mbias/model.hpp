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

// Sources of label distributions: an OpenAI-compatible chat-completions
// client backed by a replay cache, and a synthetic biased oracle.

#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "mbias/cache.hpp"
#include "mbias/core.hpp"
#include "mbias/error.hpp"
#include "mbias/http.hpp"
#include "mbias/io.hpp"
#include "mbias/random.hpp"
#include "mbias/text.hpp"

namespace mbias {

// ---------------------------------------------------------------------------
// Prompts

struct Demonstration {
  std::string premise;
  std::string hypothesis;
  Label label = Label::kEntailment;
};

class PromptMode {
 public:
  enum class Kind { kZeroShot, kFewShot };

  static PromptMode zero_shot() { return PromptMode(Kind::kZeroShot, {}); }

  /// Exactly three demonstrations, one per label.
  static PromptMode few_shot(std::vector<Demonstration> demos) {
    if (demos.size() != kNumLabels) {
      throw ValidationError("few-shot prompts need exactly 3 demonstrations");
    }
    std::array<int, kNumLabels> seen{};
    for (const auto& d : demos) ++seen[index_of(d.label)];
    for (int c : seen) {
      if (c != 1) throw ValidationError("few-shot demonstrations must cover each label once");
    }
    return PromptMode(Kind::kFewShot, std::move(demos));
  }

  Kind kind() const { return kind_; }
  const std::vector<Demonstration>& demos() const { return demos_; }
  std::string name() const { return kind_ == Kind::kZeroShot ? "zero-shot" : "few-shot"; }

 private:
  PromptMode(Kind k, std::vector<Demonstration> d) : kind_(k), demos_(std::move(d)) {}
  Kind kind_;
  std::vector<Demonstration> demos_;
};

/// Draws one labeled demonstration per label from `pool`, in shuffled order.
inline PromptMode select_few_shot(const std::vector<NLISample>& pool, std::uint64_t seed) {
  std::array<std::vector<const NLISample*>, kNumLabels> by_label;
  for (const auto& s : pool) {
    if (s.gold) by_label[index_of(*s.gold)].push_back(&s);
  }
  Rng rng(seed);
  std::vector<Demonstration> demos;
  for (Label l : kAllLabels) {
    const auto& cands = by_label[index_of(l)];
    if (cands.empty()) {
      throw ValidationError("demonstration pool has no '" + std::string(to_string(l)) +
                            "' example");
    }
    const NLISample* pick = cands[rng.index(cands.size())];
    demos.push_back({pick->premise, pick->hypothesis, l});
  }
  rng.shuffle(demos);
  return PromptMode::few_shot(std::move(demos));
}

inline constexpr std::string_view kDefaultInstruction =
    "Given the premise and hypothesis, answer exactly one of: entailment, neutral, "
    "contradiction.";

inline std::string build_prompt(const NLISample& sample, const PromptMode& mode,
                                std::string_view instruction = kDefaultInstruction) {
  std::string out(instruction);
  out += "\n\n";
  for (const auto& d : mode.demos()) {
    out += "Premise: " + d.premise + "\nHypothesis: " + d.hypothesis + "\nAnswer: ";
    out += to_string(d.label);
    out += "\n\n";
  }
  out += "Premise: " + sample.premise + "\nHypothesis: " + sample.hypothesis + "\nAnswer:";
  return out;
}

// ---------------------------------------------------------------------------
// Response parsing

/// Case-insensitive prefix match of the first word of `text` against the
/// label names, in either direction ("Ent" and "Entailment." both match).
inline std::optional<Label> match_verbalizer(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size() && !std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
  std::string word;
  while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) {
    word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
    ++i;
  }
  if (word.empty()) return std::nullopt;
  for (Label l : kAllLabels) {
    const std::string_view name = to_string(l);
    if (name.starts_with(word) || std::string_view(word).starts_with(name)) return l;
  }
  return std::nullopt;
}

struct ParsedDist {
  ProbDist dist = uniform_dist();
  int unparsed = 0;  // responses (or samples) with no recognizable label
};

/// Add-one smoothed label frequencies.
inline ProbDist smoothed_frequencies(const std::array<int, kNumLabels>& counts) {
  const double total = counts[0] + counts[1] + counts[2] + 3.0;
  return ProbDist((counts[0] + 1.0) / total, (counts[1] + 1.0) / total,
                  (counts[2] + 1.0) / total);
}

/// Sample-k strategy: one label per returned choice.
inline ParsedDist dist_from_samples(const json& response) {
  std::array<int, kNumLabels> counts{};
  ParsedDist out;
  for (const auto& choice : response.value("choices", json::array())) {
    std::string content;
    if (auto m = choice.find("message"); m != choice.end() && m->contains("content") &&
                                         (*m)["content"].is_string()) {
      content = (*m)["content"].get<std::string>();
    }
    if (auto l = match_verbalizer(content)) {
      ++counts[index_of(*l)];
    } else {
      ++out.unparsed;
    }
  }
  out.dist = smoothed_frequencies(counts);
  return out;
}

/// Logprob strategy: softmax over the log-mass of tokens matching each
/// label among the first answer token's alternatives.
inline ParsedDist dist_from_logprobs(const json& response) {
  ParsedDist out;
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::array<double, kNumLabels> logmass{kNegInf, kNegInf, kNegInf};
  auto add = [&](const std::string& token, double lp) {
    if (auto l = match_verbalizer(token)) {
      double& m = logmass[index_of(*l)];
      const double hi = std::max(m, lp);
      m = hi + std::log(std::exp(m - hi) + std::exp(lp - hi));
    }
  };
  try {
    const auto& content = response.at("choices").at(0).at("logprobs").at("content");
    // Skip leading whitespace-only tokens to reach the first answer token.
    for (const auto& tok : content) {
      const std::string text = tok.at("token").get<std::string>();
      if (trim(text).empty()) continue;
      std::set<std::string> counted;
      for (const auto& alt : tok.value("top_logprobs", json::array())) {
        const auto t = alt.at("token").get<std::string>();
        if (counted.insert(t).second) add(t, alt.at("logprob").get<double>());
      }
      if (counted.insert(text).second) add(text, tok.at("logprob").get<double>());
      break;
    }
  } catch (const json::exception&) {
    // missing logprobs: treated as unparseable below
  }
  const double hi = std::max({logmass[0], logmass[1], logmass[2]});
  if (!std::isfinite(hi)) {
    out.unparsed = 1;
    return out;
  }
  std::array<double, kNumLabels> p{};
  double total = 0.0;
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    p[i] = std::isfinite(logmass[i]) ? std::exp(logmass[i] - hi) : 0.0;
    total += p[i];
  }
  for (double& v : p) v /= total;
  out.dist = ProbDist(p);
  return out;
}

// ---------------------------------------------------------------------------
// Models

class ProbabilityModel {
 public:
  virtual ~ProbabilityModel() = default;
  /// Must be safe to call concurrently.
  virtual ProbDist predict(const NLISample& sample, const PromptMode& mode) const = 0;
  virtual std::string model_id() const = 0;
  virtual int max_parallel() const { return 1; }
};

/// Runs predict over all samples with up to `parallelism` calls in flight.
/// Output order matches input order.
inline std::vector<ProbDist> predict_all(const ProbabilityModel& model,
                                         const std::vector<NLISample>& samples,
                                         const PromptMode& mode, int parallelism = 0) {
  std::vector<std::optional<ProbDist>> slots(samples.size());
  if (parallelism <= 0) parallelism = model.max_parallel();
  const auto workers_n =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(parallelism),
                                                     samples.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < workers_n; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < samples.size(); i = next++) {
          try {
            slots[i] = model.predict(samples[i], mode);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
            next = samples.size();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<ProbDist> out;
  out.reserve(samples.size());
  for (auto& s : slots) out.push_back(*s);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic oracle

/// A model whose bias is known exactly. The bias-free distribution puts
/// `base_confidence` on the gold label and splits the rest evenly. A sample
/// with a single bias feature b is shifted by shift(b); a sample with two or
/// more features is shifted by sum_b weight(type(b)) * shift(b). Zero-sum
/// noise is added, then the vector is clipped at zero and renormalized.
struct SyntheticOracleConfig {
  double base_confidence = 0.45;
  std::map<BiasFeature, ScoreVector> shifts;
  std::map<BiasType, double> combination_weights;  // absent types weigh 1
  std::uint64_t noise_seed = 0;
  double noise_scale = 0.0;

  double weight(BiasType t) const {
    auto it = combination_weights.find(t);
    return it == combination_weights.end() ? 1.0 : it->second;
  }

  ScoreVector shift(BiasFeature f) const {
    auto it = shifts.find(f);
    return it == shifts.end() ? ScoreVector{} : it->second;
  }

  void validate() const {
    if (!(base_confidence > 1.0 / 3.0 && base_confidence <= 1.0)) {
      throw ValidationError("oracle base confidence must lie in (1/3, 1]");
    }
    for (const auto& [f, s] : shifts) {
      if (!s.is_finite() || std::abs(s.sum()) > 1e-9) {
        throw ValidationError("oracle shift for '" + std::string(to_string(f)) +
                              "' must be finite and sum to zero");
      }
    }
    if (noise_scale < 0.0) throw ValidationError("oracle noise scale must be >= 0");
  }

  /// Shifts that reproduce the reference polarity-probe label distributions
  /// (percentages, label order) on label-balanced single-feature probes.
  static const std::map<BiasFeature, std::array<double, kNumLabels>>& reference_probe_rows() {
    static const std::map<BiasFeature, std::array<double, kNumLabels>> rows = {
        {BiasFeature::kHypShorter, {43.7, 21.7, 34.4}},
        {BiasFeature::kHypLonger, {31.4, 40.1, 28.5}},
        {BiasFeature::kOverlapLow, {30.3, 37.5, 32.2}},
        {BiasFeature::kOverlapHigh, {40.9, 24.6, 34.5}},
        {BiasFeature::kSpeculative, {40.1, 27.7, 32.2}},
        {BiasFeature::kSemsimHigh, {40.3, 27.2, 32.5}},
        {BiasFeature::kSemsimLow, {30.6, 37.6, 31.8}},
        {BiasFeature::kMaleWithMaleOccupation, {53.8, 11.5, 34.7}},
        {BiasFeature::kMaleWithFemaleOccupation, {33.7, 16.1, 51.2}},
    };
    return rows;
  }

  /// shift(b) = row_b / 100 - P_U, with any rounding surplus in the row
  /// removed equally from the three components so the shift sums to zero.
  static std::map<BiasFeature, ScoreVector> reference_shifts() {
    std::map<BiasFeature, ScoreVector> out;
    for (const auto& [f, row] : reference_probe_rows()) {
      const ScoreVector v = ScoreVector(row) * 0.01;
      const double excess = (v.sum() - 1.0) / 3.0;
      const double c = 1.0 / 3.0 + excess;
      out[f] = v - ScoreVector(c, c, c);
    }
    return out;
  }

  /// The profile used by the oracle experiments: reference shifts, moderate
  /// combination weights and a little noise.
  static SyntheticOracleConfig default_profile() {
    SyntheticOracleConfig c;
    c.base_confidence = 0.45;
    c.shifts = reference_shifts();
    c.combination_weights = {{BiasType::kSentenceLength, 0.5},
                             {BiasType::kLexicalOverlap, 0.5},
                             {BiasType::kSemanticSimilarity, 0.5},
                             {BiasType::kSpeculativeWord, 0.5},
                             {BiasType::kGenderOccupation, 0.3}};
    c.noise_seed = 7;
    c.noise_scale = 0.01;
    return c;
  }

  ordered_json to_json() const {
    ordered_json j;
    j["base_confidence"] = base_confidence;
    ordered_json s = ordered_json::object();
    for (const auto& [f, v] : shifts) s[std::string(to_string(f))] = v;
    j["shifts"] = s;
    ordered_json w = ordered_json::object();
    for (const auto& [t, v] : combination_weights) w[std::string(to_string(t))] = v;
    j["combination_weights"] = w;
    j["noise_seed"] = noise_seed;
    j["noise_scale"] = noise_scale;
    return j;
  }

  static SyntheticOracleConfig from_json(const json& j) {
    SyntheticOracleConfig c;
    c.base_confidence = j.value("base_confidence", c.base_confidence);
    if (auto it = j.find("shifts"); it != j.end()) {
      for (const auto& [k, v] : it->items()) c.shifts[parse_feature_or_throw(k)] = v.get<ScoreVector>();
    }
    if (auto it = j.find("combination_weights"); it != j.end()) {
      for (const auto& [k, v] : it->items()) {
        c.combination_weights[parse_bias_type_or_throw(k)] = v.get<double>();
      }
    }
    c.noise_seed = j.value("noise_seed", c.noise_seed);
    c.noise_scale = j.value("noise_scale", c.noise_scale);
    c.validate();
    return c;
  }
};

/// Pure function of (sample, cfg); noise is derived from cfg.noise_seed and
/// the sample id.
inline ProbDist oracle_predict(const NLISample& sample, const SyntheticOracleConfig& cfg) {
  if (!sample.gold) throw ValidationError("oracle needs a gold label for '" + sample.id + "'");
  if (!sample.features) {
    throw ValidationError("oracle needs the feature set of '" + sample.id + "'");
  }
  const double q = cfg.base_confidence;
  ScoreVector v((1.0 - q) / 2.0, (1.0 - q) / 2.0, (1.0 - q) / 2.0);
  v[index_of(*sample.gold)] = q;

  const auto feats = sample.features->items();
  for (BiasFeature f : feats) {
    const double w = feats.size() >= 2 ? cfg.weight(type_of(f)) : 1.0;
    v += w * cfg.shift(f);
  }
  if (cfg.noise_scale > 0.0) {
    Rng rng(splitmix64(cfg.noise_seed ^ fnv1a64(sample.id)));
    ScoreVector z(rng.normal(), rng.normal(), rng.normal());
    const double mean = z.sum() / 3.0;
    z -= ScoreVector(mean, mean, mean);
    v += cfg.noise_scale * z;
  }
  return ProbDist::normalized(v);
}

class OracleModel final : public ProbabilityModel {
 public:
  explicit OracleModel(SyntheticOracleConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  ProbDist predict(const NLISample& sample, const PromptMode&) const override {
    return oracle_predict(sample, cfg_);
  }
  std::string model_id() const override { return "synthetic-oracle"; }
  int max_parallel() const override {
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
  const SyntheticOracleConfig& config() const { return cfg_; }

 private:
  SyntheticOracleConfig cfg_;
};

// ---------------------------------------------------------------------------
// Chat-completions client

enum class DistributionStrategy { kLogprob, kSampleK };

inline std::string_view to_string(DistributionStrategy s) {
  return s == DistributionStrategy::kLogprob ? "logprob" : "sample-k";
}

inline DistributionStrategy parse_strategy(std::string_view s) {
  if (s == "logprob") return DistributionStrategy::kLogprob;
  if (s == "sample-k") return DistributionStrategy::kSampleK;
  throw ValidationError("unknown distribution strategy '" + std::string(s) + "'");
}

struct EndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string model;
  DistributionStrategy strategy = DistributionStrategy::kLogprob;
  int k = 9;
  int top_logprobs = 20;
  std::chrono::milliseconds timeout{60000};
  int max_parallel = 4;
  std::chrono::milliseconds min_request_interval{0};
  RetryPolicy retry;
  std::string instruction{kDefaultInstruction};
  /// Varies sample-k decoding between repeated runs; part of the cache key
  /// for that strategy only.
  std::uint64_t run_seed = 0;
  /// Serve from the cache only; a miss is an error.
  bool offline = false;

  void validate() const {
    if (k < 1) throw ValidationError("k must be >= 1");
    if (max_parallel < 1) throw ValidationError("max_parallel must be >= 1");
    if (model.empty()) throw ValidationError("endpoint model name is empty");
  }
};

inline std::string cache_key(const NLISample& sample, const PromptMode& mode,
                             const EndpointConfig& ep) {
  std::string material = "mbias-cache-v1\n";
  material += ep.model + "\n";
  material += std::string(to_string(ep.strategy)) + "\n";
  material += std::to_string(ep.k) + "\n";
  if (ep.strategy == DistributionStrategy::kSampleK) {
    material += "seed=" + std::to_string(ep.run_seed) + "\n";
  }
  material += build_prompt(sample, mode, ep.instruction);
  return sha256_hex(material);
}

struct ClientStats {
  std::atomic<long> requests{0};
  std::atomic<long> cache_hits{0};
  std::atomic<long> unparsed{0};
  std::atomic<long> http_attempts{0};
};

class ChatCompletionModel final : public ProbabilityModel {
 public:
  ChatCompletionModel(EndpointConfig cfg, std::shared_ptr<ReplayCache> cache)
      : cfg_(std::move(cfg)), cache_(std::move(cache)) {
    cfg_.validate();
    if (cfg_.offline && !cache_) throw ValidationError("offline mode needs a replay cache");
    if (!cfg_.offline) target_ = HttpTarget::parse(cfg_.base_url);
  }

  ProbDist predict(const NLISample& sample, const PromptMode& mode) const override {
    const std::string key = cache_key(sample, mode, cfg_);
    if (cache_) {
      if (auto hit = cache_->get(key)) {
        ++stats_.cache_hits;
        return hit->dist;
      }
    }
    if (cfg_.offline) {
      throw IoError("replay cache has no entry for sample '" + sample.id +
                    "' and network access is disabled");
    }
    const json body = request_body(build_prompt(sample, mode, cfg_.instruction));
    throttle();
    ++stats_.requests;
    HttpStats hs;
    const json reply = post_json(*target_, "/chat/completions", body,
                                 token_from_env(cfg_.api_key_env), cfg_.timeout, cfg_.retry, &hs);
    stats_.http_attempts += hs.attempts;
    const ParsedDist parsed = cfg_.strategy == DistributionStrategy::kLogprob
                                  ? dist_from_logprobs(reply)
                                  : dist_from_samples(reply);
    stats_.unparsed += parsed.unparsed;
    if (cache_) {
      cache_->put(key, {parsed.dist, cfg_.model, std::string(to_string(cfg_.strategy)),
                        parsed.unparsed});
    }
    return parsed.dist;
  }

  json request_body(const std::string& prompt) const {
    json body = {{"model", cfg_.model},
                 {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
    if (cfg_.strategy == DistributionStrategy::kLogprob) {
      body["temperature"] = 0;
      body["max_tokens"] = 1;
      body["logprobs"] = true;
      body["top_logprobs"] = cfg_.top_logprobs;
    } else {
      body["temperature"] = 1;
      body["n"] = cfg_.k;
      body["max_tokens"] = 5;
      body["seed"] = cfg_.run_seed;
    }
    return body;
  }

  std::string model_id() const override { return cfg_.model; }
  int max_parallel() const override { return cfg_.max_parallel; }
  const ClientStats& stats() const { return stats_; }

 private:
  void throttle() const {
    if (cfg_.min_request_interval.count() <= 0) return;
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(rate_mu_);
      const auto now = std::chrono::steady_clock::now();
      slot = std::max(now, next_slot_);
      next_slot_ = slot + cfg_.min_request_interval;
    }
    std::this_thread::sleep_until(slot);
  }

  EndpointConfig cfg_;
  std::shared_ptr<ReplayCache> cache_;
  std::optional<HttpTarget> target_;
  mutable ClientStats stats_;
  mutable std::mutex rate_mu_;
  mutable std::chrono::steady_clock::time_point next_slot_{};
};

}  // namespace mbias
