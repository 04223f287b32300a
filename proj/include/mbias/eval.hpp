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

// Polarity probes, accuracy reports and comparison tables.

#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mbias/core.hpp"
#include "mbias/error.hpp"
#include "mbias/io.hpp"
#include "mbias/model.hpp"
#include "mbias/random.hpp"

namespace mbias {

using Percentages = std::array<double, kNumLabels>;

inline std::string format_fixed(double v, int digits = 1) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Polarity

/// Minimum over-prediction, in percentage points, to declare a polarity.
inline constexpr double kPolarityMarginPct = 2.0;

struct PolarityReport {
  std::string name;  // feature id, or a control-pool name
  std::optional<BiasFeature> feature;
  Percentages predicted{};  // mean predicted probability, x100
  Percentages argmax{};     // share of argmax predictions, x100
  Percentages dataset{};    // gold label shares, x100
  std::optional<Label> polarity;
  int sample_count = 0;
  ordered_json provenance = ordered_json::object();

  ordered_json to_json() const {
    ordered_json j;
    j["name"] = name;
    j["feature"] = feature ? ordered_json(std::string(to_string(*feature))) : ordered_json();
    j["predicted_pct"] = predicted;
    j["argmax_pct"] = argmax;
    j["dataset_pct"] = dataset;
    j["polarity"] = polarity ? std::string(to_string(*polarity)) : std::string("none");
    j["sample_count"] = sample_count;
    j["provenance"] = provenance;
    return j;
  }

  static std::string csv_header() {
    return "name,pred_entailment,pred_neutral,pred_contradiction,argmax_entailment,"
           "argmax_neutral,argmax_contradiction,data_entailment,data_neutral,"
           "data_contradiction,polarity,samples\n";
  }

  std::string csv_row() const {
    std::string r = name;
    for (const auto* arr : {&predicted, &argmax, &dataset}) {
      for (double v : *arr) r += "," + format_fixed(v, 3);
    }
    r += "," + std::string(polarity ? to_string(*polarity) : "none");
    r += "," + std::to_string(sample_count) + "\n";
    return r;
  }
};

/// The label whose predicted share most exceeds its dataset share, if that
/// excess is at least `margin` points; ties go to the lower label index.
inline std::optional<Label> infer_polarity(const Percentages& predicted,
                                           const Percentages& dataset,
                                           double margin = kPolarityMarginPct) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumLabels; ++i) {
    if (predicted[i] - dataset[i] > predicted[best] - dataset[best]) best = i;
  }
  if (predicted[best] - dataset[best] < margin) return std::nullopt;
  return label_at(best);
}

inline PolarityReport polarity_report(std::string name, const std::vector<NLISample>& samples,
                                      std::span<const ProbDist> predictions) {
  if (samples.empty()) throw ValidationError("no eligible samples for probe '" + name + "'");
  if (samples.size() != predictions.size()) {
    throw ValidationError("probe samples and predictions differ in length");
  }
  PolarityReport r;
  r.name = std::move(name);
  r.feature = parse_feature(r.name);
  r.sample_count = static_cast<int>(samples.size());
  const ProbDist mean = dist_mean(predictions);
  std::array<int, kNumLabels> gold{}, top{};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].gold) {
      throw ValidationError("probe sample '" + samples[i].id + "' has no gold label");
    }
    ++gold[index_of(*samples[i].gold)];
    ++top[index_of(argmax_label(predictions[i]))];
  }
  const double n = static_cast<double>(samples.size());
  for (std::size_t j = 0; j < kNumLabels; ++j) {
    r.predicted[j] = 100.0 * mean[j];
    r.argmax[j] = 100.0 * top[j] / n;
    r.dataset[j] = 100.0 * gold[j] / n;
  }
  r.polarity = infer_polarity(r.predicted, r.dataset);
  return r;
}

/// Label-balanced probe set: up to `count` samples carrying `feature`, and
/// (when `pure`) no other feature. `count` is rounded down to a multiple of 3.
inline std::vector<NLISample> select_probe_samples(const std::vector<NLISample>& pool,
                                                   BiasFeature feature, std::size_t count,
                                                   bool pure, std::uint64_t seed) {
  std::array<std::vector<const NLISample*>, kNumLabels> by_label;
  for (const auto& s : pool) {
    if (!s.gold || !s.features || !s.features->contains(feature)) continue;
    if (pure && s.features->size() != 1) continue;
    by_label[index_of(*s.gold)].push_back(&s);
  }
  std::size_t per_label = count / kNumLabels;
  for (const auto& v : by_label) per_label = std::min(per_label, v.size());
  Rng rng(splitmix64(seed ^ fnv1a64(to_string(feature))));
  std::vector<NLISample> out;
  for (auto& v : by_label) {
    rng.shuffle(v);
    for (std::size_t i = 0; i < per_label; ++i) out.push_back(*v[i]);
  }
  return out;
}

inline PolarityReport probe_polarity(BiasFeature feature, const std::vector<NLISample>& samples,
                                     const ProbabilityModel& model, const PromptMode& mode) {
  if (samples.empty()) {
    throw ValidationError("no eligible samples for feature '" + std::string(to_string(feature)) +
                          "'");
  }
  for (const auto& s : samples) {
    if (s.features && !s.features->contains(feature)) {
      throw ValidationError("probe sample '" + s.id + "' does not carry '" +
                            std::string(to_string(feature)) + "'");
    }
  }
  const auto preds = predict_all(model, samples, mode);
  PolarityReport r = polarity_report(std::string(to_string(feature)), samples, preds);
  r.provenance["model"] = model.model_id();
  r.provenance["prompt_mode"] = mode.name();
  return r;
}

// ---------------------------------------------------------------------------
// Accuracy

struct EvalReport {
  int total = 0;
  int correct = 0;
  double accuracy = 0.0;  // percent
  std::array<int, kNumLabels> label_total{};
  std::array<int, kNumLabels> label_wrong{};
  Percentages error_rate{};  // percent wrong within each gold label
  /// Number of detected features -> (correct, total).
  std::map<int, std::pair<int, int>> by_feature_count;
  int runs = 1;
  ordered_json metadata = ordered_json::object();

  std::string meta(const char* key) const {
    auto it = metadata.find(key);
    return it != metadata.end() && it->is_string() ? it->get<std::string>() : std::string();
  }

  ordered_json to_json() const {
    ordered_json j;
    j["accuracy"] = accuracy;
    j["total"] = total;
    j["correct"] = correct;
    ordered_json er = ordered_json::object();
    for (Label l : kAllLabels) {
      er[std::string(to_string(l))] = {{"error_rate", error_rate[index_of(l)]},
                                       {"wrong", label_wrong[index_of(l)]},
                                       {"total", label_total[index_of(l)]}};
    }
    j["per_label"] = er;
    ordered_json fc = ordered_json::object();
    for (const auto& [k, v] : by_feature_count) {
      fc[std::to_string(k)] = {{"correct", v.first}, {"total", v.second}};
    }
    j["by_feature_count"] = fc;
    j["runs"] = runs;
    j["metadata"] = metadata;
    return j;
  }

  std::string to_csv() const {
    std::string out =
        "method,model,mode,accuracy,err_entailment,err_neutral,err_contradiction,total,runs\n";
    out += meta("method") + "," + meta("model") + "," + meta("mode") + "," +
           format_fixed(accuracy, 3);
    for (double e : error_rate) out += "," + format_fixed(e, 3);
    out += "," + std::to_string(total) + "," + std::to_string(runs) + "\n";
    return out;
  }
};

/// Accuracy and per-gold-label error rates. `predictions` must hold exactly
/// the dataset ids.
inline EvalReport evaluate(const std::vector<NLISample>& dataset,
                           const std::map<std::string, Label>& predictions,
                           ordered_json metadata = ordered_json::object()) {
  EvalReport r;
  r.metadata = std::move(metadata);
  std::set<std::string> seen;
  for (const auto& s : dataset) {
    if (!s.gold) throw ValidationError("dataset sample '" + s.id + "' has no gold label");
    auto it = predictions.find(s.id);
    if (it == predictions.end()) throw ValidationError("no prediction for id '" + s.id + "'");
    if (!seen.insert(s.id).second) throw ValidationError("duplicate dataset id '" + s.id + "'");
    const std::size_t g = index_of(*s.gold);
    const bool ok = it->second == *s.gold;
    ++r.total;
    ++r.label_total[g];
    if (ok) {
      ++r.correct;
    } else {
      ++r.label_wrong[g];
    }
    if (s.features) {
      auto& [c, t] = r.by_feature_count[static_cast<int>(s.features->size())];
      c += ok ? 1 : 0;
      ++t;
    }
  }
  if (predictions.size() != seen.size()) {
    for (const auto& [id, l] : predictions) {
      if (!seen.count(id)) throw ValidationError("prediction for unknown id '" + id + "'");
    }
  }
  if (r.total == 0) throw ValidationError("cannot evaluate an empty dataset");
  r.accuracy = 100.0 * r.correct / r.total;
  for (std::size_t j = 0; j < kNumLabels; ++j) {
    r.error_rate[j] = r.label_total[j] ? 100.0 * r.label_wrong[j] / r.label_total[j] : 0.0;
  }
  return r;
}

/// Mean accuracy and error rates over repeated runs; counts are summed.
inline EvalReport average_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ValidationError("nothing to average");
  EvalReport out;
  out.metadata = reports.front().metadata;
  out.runs = 0;
  for (const auto& r : reports) {
    out.total += r.total;
    out.correct += r.correct;
    out.accuracy += r.accuracy;
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      out.label_total[j] += r.label_total[j];
      out.label_wrong[j] += r.label_wrong[j];
      out.error_rate[j] += r.error_rate[j];
    }
    for (const auto& [k, v] : r.by_feature_count) {
      out.by_feature_count[k].first += v.first;
      out.by_feature_count[k].second += v.second;
    }
    out.runs += r.runs;
  }
  const double n = static_cast<double>(reports.size());
  out.accuracy /= n;
  for (double& e : out.error_rate) e /= n;
  return out;
}

// ---------------------------------------------------------------------------
// Comparison tables

enum class Rank { kNone, kBest, kSecond };

struct ComparisonTable {
  std::vector<std::string> methods;   // rows
  std::vector<std::string> datasets;  // columns
  std::map<std::pair<std::string, std::string>, double> accuracy;
  std::map<std::pair<std::string, std::string>, Rank> rank;

  std::optional<double> cell(const std::string& method, const std::string& dataset) const {
    auto it = accuracy.find({method, dataset});
    if (it == accuracy.end()) return std::nullopt;
    return it->second;
  }

  Rank rank_of(const std::string& method, const std::string& dataset) const {
    auto it = rank.find({method, dataset});
    return it == rank.end() ? Rank::kNone : it->second;
  }

  /// Best values carry '*', second-best '+'.
  std::string to_text() const {
    std::vector<std::vector<std::string>> grid;
    grid.push_back({"method"});
    for (const auto& d : datasets) grid.back().push_back(d);
    for (const auto& m : methods) {
      grid.push_back({m});
      for (const auto& d : datasets) {
        std::string c = "-";
        if (auto v = cell(m, d)) {
          c = format_fixed(*v, 1);
          const Rank r = rank_of(m, d);
          c += r == Rank::kBest ? "*" : r == Rank::kSecond ? "+" : " ";
        }
        grid.back().push_back(c);
      }
    }
    std::vector<std::size_t> width(datasets.size() + 1, 0);
    for (const auto& row : grid) {
      for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::string out;
    for (const auto& row : grid) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        std::string cellv = row[c];
        const std::size_t pad = width[c] - cellv.size();
        out += c == 0 ? cellv + std::string(pad, ' ') : std::string(pad, ' ') + cellv;
        out += c + 1 < row.size() ? "  " : "\n";
      }
    }
    return out;
  }

  std::string to_csv() const {
    std::string out = "method,dataset,accuracy,rank\n";
    for (const auto& m : methods) {
      for (const auto& d : datasets) {
        auto v = cell(m, d);
        if (!v) continue;
        const Rank r = rank_of(m, d);
        out += m + "," + d + "," + format_fixed(*v, 3) + "," +
               (r == Rank::kBest ? "best" : r == Rank::kSecond ? "second" : "") + "\n";
      }
    }
    return out;
  }
};

/// Rows come from metadata "method" (falling back to "run<i>"), columns from
/// metadata "dataset". Equal accuracies share a marker.
inline ComparisonTable compare_runs(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ValidationError("no reports to compare");
  ComparisonTable t;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    std::string m = reports[i].meta("method");
    if (m.empty()) m = "run" + std::to_string(i + 1);
    std::string d = reports[i].meta("dataset");
    if (d.empty()) d = "dataset";
    if (std::find(t.methods.begin(), t.methods.end(), m) == t.methods.end()) t.methods.push_back(m);
    if (std::find(t.datasets.begin(), t.datasets.end(), d) == t.datasets.end()) {
      t.datasets.push_back(d);
    }
    if (!t.accuracy.emplace(std::make_pair(m, d), reports[i].accuracy).second) {
      throw ValidationError("two reports for method '" + m + "' on dataset '" + d + "'");
    }
  }
  for (const auto& d : t.datasets) {
    std::set<double, std::greater<>> values;
    for (const auto& m : t.methods) {
      if (auto v = t.cell(m, d)) values.insert(*v);
    }
    const std::vector<double> ordered(values.begin(), values.end());
    for (const auto& m : t.methods) {
      auto v = t.cell(m, d);
      if (!v) continue;
      if (*v == ordered[0]) {
        t.rank[{m, d}] = Rank::kBest;
      } else if (ordered.size() > 1 && *v == ordered[1]) {
        t.rank[{m, d}] = Rank::kSecond;
      }
    }
  }
  return t;
}

}  // namespace mbias
