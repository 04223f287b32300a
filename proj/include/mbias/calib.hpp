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

// Two-stage multi-bias calibration.
//
// Stage 1 estimates, per bias feature b, the indirect effect
//   NIE_b = mean(P over label-balanced samples carrying only b) - P_U.
// Stage 2 models the effect of a feature combination S as
//   NIE_S = sum_{b in S} lambda_{type(b)} * NIE_b
// and fits the lambdas from label-balanced multi-feature samples: samples
// are grouped by their known-feature set, each group contributes the three
// component equations  mean_g(P) - P_U = sum lambda_t NIE_b,  and the
// stacked system is solved by least squares. Inference subtracts NIE_S.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mbias/core.hpp"
#include "mbias/detect.hpp"
#include "mbias/error.hpp"
#include "mbias/io.hpp"
#include "mbias/model.hpp"
#include "mbias/random.hpp"

namespace mbias {

struct FeatureNIE {
  BiasFeature feature = BiasFeature::kHypShorter;
  ScoreVector nie;
  int n_used = 0;
};

/// NIE of a mean prediction: mean - P_U, taken componentwise without
/// renormalizing the input.
inline ScoreVector nie_from_mean(const ScoreVector& mean) {
  constexpr double third = 1.0 / 3.0;
  return mean - ScoreVector(third, third, third);
}

inline FeatureNIE estimate_feature_nie(BiasFeature feature,
                                       std::span<const ProbDist> predictions) {
  if (predictions.empty()) {
    throw ValidationError("no predictions for feature '" + std::string(to_string(feature)) + "'");
  }
  return {feature, dist_mean(predictions) - uniform_dist(),
          static_cast<int>(predictions.size())};
}

// ---------------------------------------------------------------------------
// Sample selection

struct CalibSampleSet {
  TypeSet known_types;
  std::map<BiasFeature, std::vector<NLISample>> stage1;
  std::vector<NLISample> stage2;
  std::string pool_provenance;
};

/// Fills missing feature sets with the detector's output.
inline void annotate_features(std::vector<NLISample>& pool, const Detector& detector) {
  for (auto& s : pool) {
    if (!s.features) s.features = detector.detect(s);
  }
}

/// Features each stage-2 sample must carry: two, or one when only a single
/// type is known (stage 2 then has one unknown).
inline std::size_t stage2_min_features(const TypeSet& known) {
  return known.size() == 1 ? 1 : 2;
}

namespace detail {

inline const FeatureSet& features_or_throw(const NLISample& s) {
  if (!s.features) throw ValidationError("sample '" + s.id + "' has no feature annotation");
  return *s.features;
}

}  // namespace detail

/// Deterministic under `seed`. Stage 1 draws n/3 samples per label for each
/// feature of a known type among samples whose known-feature set is exactly
/// that feature. Stage 2 draws m/3 label-balanced triplets, each from a
/// single known-feature group, allocated round-robin over groups.
inline CalibSampleSet select_calibration_samples(const std::vector<NLISample>& pool,
                                                 const TypeSet& known, int n, int m,
                                                 std::uint64_t seed) {
  if (known.empty()) throw ValidationError("at least one known bias type is required");
  if (n <= 0 || n % 3 != 0) throw ValidationError("n must be a positive multiple of 3");
  if (m <= 0 || m % 3 != 0) throw ValidationError("m must be a positive multiple of 3");

  using Bucket = std::array<std::vector<const NLISample*>, kNumLabels>;
  std::map<BiasFeature, Bucket> pure;
  std::map<FeatureSet, Bucket> groups;
  const std::size_t min_feats = stage2_min_features(known);
  for (const auto& s : pool) {
    if (!s.gold) throw ValidationError("calibration pool sample '" + s.id + "' has no gold label");
    const FeatureSet k = detail::features_or_throw(s).restricted_to(known);
    const std::size_t li = index_of(*s.gold);
    if (k.size() == 1) pure[k.items().front()][li].push_back(&s);
    if (k.size() >= min_feats) groups[k][li].push_back(&s);
  }

  CalibSampleSet out;
  out.known_types = known;
  const std::size_t per_label = static_cast<std::size_t>(n / 3);

  std::string shortfalls;
  for (BiasType t : known.items()) {
    for (const auto& fi : kBiasFeatures) {
      if (fi.type != t) continue;
      Bucket& b = pure[fi.feature];
      std::string missing;
      for (Label l : kAllLabels) {
        const auto have = b[index_of(l)].size();
        if (have < per_label) {
          missing += (missing.empty() ? "" : ", ") + std::string(to_string(l)) + " " +
                     std::to_string(have) + "/" + std::to_string(per_label);
        }
      }
      if (!missing.empty()) {
        shortfalls += "\n  " + std::string(fi.id) + ": " + missing;
        continue;
      }
      auto& dst = out.stage1[fi.feature];
      Rng rng(splitmix64(seed ^ fnv1a64(fi.id)));
      for (Label l : kAllLabels) {
        auto cands = b[index_of(l)];
        rng.shuffle(cands);
        for (std::size_t i = 0; i < per_label; ++i) dst.push_back(*cands[i]);
      }
    }
  }
  if (!shortfalls.empty()) {
    throw ValidationError("insufficient stage-1 samples (have/need per label):" + shortfalls);
  }

  // Stage 2: shuffle each group's label lists, then take triplets in rounds.
  Rng rng2(splitmix64(seed ^ 0x5f3a2c1dULL));
  std::vector<std::pair<FeatureSet, Bucket>> usable;
  std::size_t capacity = 0;
  for (auto& [fs, bucket] : groups) {
    std::size_t triplets = SIZE_MAX;
    for (auto& v : bucket) triplets = std::min(triplets, v.size());
    if (triplets == 0) continue;
    for (auto& v : bucket) rng2.shuffle(v);
    capacity += triplets;
    usable.emplace_back(fs, bucket);
  }
  const auto need = static_cast<std::size_t>(m / 3);
  if (capacity < need) {
    throw ValidationError("insufficient stage-2 samples: need " + std::to_string(need) +
                          " label-balanced triplets with >= " + std::to_string(min_feats) +
                          " known features, found " + std::to_string(capacity));
  }
  std::vector<std::size_t> taken(usable.size(), 0);
  std::size_t drawn = 0;
  while (drawn < need) {
    for (std::size_t g = 0; g < usable.size() && drawn < need; ++g) {
      const Bucket& b = usable[g].second;
      const std::size_t i = taken[g];
      if (i >= b[0].size() || i >= b[1].size() || i >= b[2].size()) continue;
      ++taken[g];
      ++drawn;
    }
  }
  for (std::size_t g = 0; g < usable.size(); ++g) {
    for (std::size_t i = 0; i < taken[g]; ++i) {
      for (const auto& v : usable[g].second) out.stage2.push_back(*v[i]);
    }
  }
  return out;
}

/// Distinct k-subsets of `from`, chosen uniformly under `seed`.
inline std::vector<TypeSet> random_type_subsets(const TypeSet& from, std::size_t k,
                                                std::size_t count, std::uint64_t seed) {
  const auto items = from.items();
  if (k == 0 || k > items.size()) throw ValidationError("subset size out of range");
  std::vector<TypeSet> all;
  const std::uint32_t n = static_cast<std::uint32_t>(items.size());
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
    TypeSet s;
    for (std::uint32_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) s.insert(items[i]);
    }
    all.push_back(s);
  }
  if (count > all.size()) {
    throw ValidationError("only " + std::to_string(all.size()) + " distinct subsets exist");
  }
  Rng rng(seed);
  rng.shuffle(all);
  all.resize(count);
  return all;
}

// ---------------------------------------------------------------------------
// Lambda estimation

struct LambdaDiagnostics {
  double residual_norm = 0.0;
  int group_count = 0;
  int equations = 0;
  int rank = 0;
  double condition_number = 0.0;
  bool rank_deficient = false;
  double ridge = 0.0;
};

struct LambdaFit {
  std::map<BiasType, double> lambdas;
  LambdaDiagnostics diagnostics;
};

struct Stage2Group {
  FeatureSet features;  // restricted to the known types
  ScoreVector mean;
  int count = 0;
};

/// Groups stage-2 predictions by known-feature set, in set order.
inline std::vector<Stage2Group> group_stage2(const std::vector<NLISample>& samples,
                                             std::span<const ProbDist> predictions,
                                             const TypeSet& known) {
  if (samples.size() != predictions.size()) {
    throw ValidationError("stage-2 samples and predictions differ in length");
  }
  std::map<FeatureSet, std::pair<ScoreVector, int>> acc;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& [sum, cnt] = acc[detail::features_or_throw(samples[i]).restricted_to(known)];
    sum += predictions[i].scores();
    ++cnt;
  }
  std::vector<Stage2Group> out;
  for (const auto& [fs, sc] : acc) {
    out.push_back({fs, sc.first * (1.0 / sc.second), sc.second});
  }
  return out;
}

struct LambdaSystem {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  std::vector<BiasType> unknowns;
  int group_count = 0;
};

/// Rows 3g..3g+2 hold group g:  sum_t A[.,t] lambda_t = mean_g - P_U.
inline LambdaSystem build_lambda_system(const std::vector<Stage2Group>& groups,
                                        const std::map<BiasFeature, FeatureNIE>& nies,
                                        const TypeSet& known) {
  LambdaSystem sys;
  sys.unknowns = known.items();
  std::vector<const Stage2Group*> used;
  for (const auto& g : groups) {
    if (!g.features.empty()) used.push_back(&g);
  }
  sys.group_count = static_cast<int>(used.size());
  const auto rows = static_cast<Eigen::Index>(3 * used.size());
  const auto cols = static_cast<Eigen::Index>(sys.unknowns.size());
  sys.a = Eigen::MatrixXd::Zero(rows, cols);
  sys.b = Eigen::VectorXd::Zero(rows);
  for (std::size_t g = 0; g < used.size(); ++g) {
    const ScoreVector rhs = nie_from_mean(used[g]->mean);
    for (std::size_t c = 0; c < sys.unknowns.size(); ++c) {
      auto f = used[g]->features.feature_of(sys.unknowns[c]);
      if (!f) continue;
      auto it = nies.find(*f);
      if (it == nies.end()) {
        throw ValidationError("no stage-1 NIE for feature '" + std::string(to_string(*f)) + "'");
      }
      for (std::size_t j = 0; j < kNumLabels; ++j) {
        sys.a(static_cast<Eigen::Index>(3 * g + j), static_cast<Eigen::Index>(c)) =
            it->second.nie[j];
      }
    }
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      sys.b(static_cast<Eigen::Index>(3 * g + j)) = rhs[j];
    }
  }
  return sys;
}

struct SolverOptions {
  double ridge = 0.0;
  /// Singular values below rank_tolerance * largest count as zero.
  double rank_tolerance = 1e-10;
  /// Singular values at or below this count as zero regardless of scale.
  /// Entries are probability differences, so 1e-12 is rounding noise.
  double absolute_tolerance = 1e-12;
};

inline LambdaFit solve_lambda_system(const LambdaSystem& sys, const SolverOptions& opt = {}) {
  if (opt.ridge < 0.0) throw ValidationError("ridge must be >= 0");
  const Eigen::Index cols = sys.a.cols();
  Eigen::MatrixXd a = sys.a;
  Eigen::VectorXd b = sys.b;
  if (opt.ridge > 0.0) {
    a.conservativeResize(sys.a.rows() + cols, Eigen::NoChange);
    a.bottomRows(cols) = std::sqrt(opt.ridge) * Eigen::MatrixXd::Identity(cols, cols);
    b.conservativeResize(sys.b.rows() + cols);
    b.tail(cols).setZero();
  }

  LambdaFit fit;
  auto& d = fit.diagnostics;
  d.group_count = sys.group_count;
  d.equations = static_cast<int>(sys.a.rows());
  d.ridge = opt.ridge;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(cols);
  if (a.rows() > 0 && cols > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() ? sv(0) : 0.0;
    const double cutoff = std::max(opt.rank_tolerance * smax, opt.absolute_tolerance);
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) rank += (sv(i) > cutoff && sv(i) > 0.0) ? 1 : 0;
    d.rank = rank;
    d.rank_deficient = rank < cols;
    d.condition_number = d.rank_deficient ? std::numeric_limits<double>::infinity()
                                          : smax / sv(cols - 1);
    if (!d.rank_deficient) {
      x = a.colPivHouseholderQr().solve(b);
    } else {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
      if (rank > 0) {
        cod.setThreshold(cutoff / smax);
        cod.compute(a);
        x = cod.solve(b);
      }
    }
  } else {
    d.rank_deficient = cols > 0;
    d.condition_number = std::numeric_limits<double>::infinity();
  }
  d.residual_norm = sys.a.rows() ? (sys.a * x - sys.b).norm() : 0.0;
  for (Eigen::Index c = 0; c < cols; ++c) {
    fit.lambdas[sys.unknowns[static_cast<std::size_t>(c)]] = x(c);
  }
  return fit;
}

inline LambdaFit estimate_lambdas(const std::vector<NLISample>& stage2,
                                  std::span<const ProbDist> predictions,
                                  const std::map<BiasFeature, FeatureNIE>& nies,
                                  const TypeSet& known, const SolverOptions& opt = {}) {
  return solve_lambda_system(
      build_lambda_system(group_stage2(stage2, predictions, known), nies, known), opt);
}

// ---------------------------------------------------------------------------
// Profiles and inference

struct CalibrationProfile {
  TypeSet known_types;
  std::map<BiasFeature, FeatureNIE> feature_nies;
  std::map<BiasType, double> lambdas;
  LambdaDiagnostics diagnostics;
  ordered_json provenance = ordered_json::object();

  void validate() const {
    for (const auto& [f, n] : feature_nies) {
      if (!known_types.contains(type_of(f))) {
        throw ValidationError("profile has a NIE for '" + std::string(to_string(f)) +
                              "' whose type is not known");
      }
      if (!n.nie.is_finite()) throw ValidationError("profile NIE is not finite");
    }
    TypeSet covered;
    for (const auto& [t, l] : lambdas) {
      if (!std::isfinite(l)) throw ValidationError("profile lambda is not finite");
      covered.insert(t);
    }
    if (!(covered == known_types)) {
      throw ValidationError("profile lambdas must cover exactly the known types");
    }
  }

  /// Profile with all NIEs zero and unit lambdas; debiasing is a no-op.
  static CalibrationProfile zero(const TypeSet& known) {
    CalibrationProfile p;
    p.known_types = known;
    for (const auto& fi : kBiasFeatures) {
      if (known.contains(fi.type)) p.feature_nies[fi.feature] = {fi.feature, {}, 0};
    }
    for (BiasType t : known.items()) p.lambdas[t] = 1.0;
    return p;
  }

  ordered_json to_json() const {
    ordered_json j;
    ordered_json kt = ordered_json::array();
    for (BiasType t : known_types.items()) kt.push_back(std::string(to_string(t)));
    j["known_types"] = kt;
    ordered_json fn = ordered_json::object();
    for (const auto& [f, n] : feature_nies) {
      fn[std::string(to_string(f))] = {{"nie", n.nie}, {"n_used", n.n_used}};
    }
    j["feature_nies"] = fn;
    ordered_json lj = ordered_json::object();
    for (const auto& [t, l] : lambdas) lj[std::string(to_string(t))] = l;
    j["lambdas"] = lj;
    const auto& d = diagnostics;
    ordered_json dj;
    dj["residual_norm"] = d.residual_norm;
    dj["group_count"] = d.group_count;
    dj["equations"] = d.equations;
    dj["rank"] = d.rank;
    dj["condition_number"] = std::isfinite(d.condition_number)
                                 ? ordered_json(d.condition_number)
                                 : ordered_json("inf");
    dj["rank_deficient"] = d.rank_deficient;
    dj["ridge"] = d.ridge;
    dj["solver"] = "grouped-least-squares";
    j["diagnostics"] = dj;
    j["provenance"] = provenance;
    return j;
  }

  static CalibrationProfile from_json(const json& j) {
    CalibrationProfile p;
    for (const auto& t : j.at("known_types")) {
      p.known_types.insert(parse_bias_type_or_throw(t.get<std::string>()));
    }
    for (const auto& [k, v] : j.at("feature_nies").items()) {
      const BiasFeature f = parse_feature_or_throw(k);
      p.feature_nies[f] = {f, v.at("nie").get<ScoreVector>(), v.value("n_used", 0)};
    }
    for (const auto& [k, v] : j.at("lambdas").items()) {
      p.lambdas[parse_bias_type_or_throw(k)] = v.get<double>();
    }
    if (auto it = j.find("diagnostics"); it != j.end()) {
      auto& d = p.diagnostics;
      d.residual_norm = it->value("residual_norm", 0.0);
      d.group_count = it->value("group_count", 0);
      d.equations = it->value("equations", 0);
      d.rank = it->value("rank", 0);
      const auto& cn = it->value("condition_number", json(0.0));
      d.condition_number =
          cn.is_number() ? cn.get<double>() : std::numeric_limits<double>::infinity();
      d.rank_deficient = it->value("rank_deficient", false);
      d.ridge = it->value("ridge", 0.0);
    }
    if (auto it = j.find("provenance"); it != j.end()) p.provenance = ordered_json(*it);
    p.validate();
    return p;
  }
};

/// sum_{b in features} lambda_{type(b)} * NIE_b. Every feature must be known
/// to the profile.
inline ScoreVector combined_nie(const FeatureSet& features, const CalibrationProfile& profile) {
  ScoreVector out;
  for (BiasFeature f : features.items()) {
    auto nit = profile.feature_nies.find(f);
    auto lit = profile.lambdas.find(type_of(f));
    if (nit == profile.feature_nies.end() || lit == profile.lambdas.end()) {
      throw ValidationError("feature '" + std::string(to_string(f)) +
                            "' is not known to the calibration profile");
    }
    out += lit->second * nit->second.nie;
  }
  return out;
}

struct DebiasResult {
  ScoreVector score;
  Label label = Label::kEntailment;
  FeatureSet used;     // features of known types
  FeatureSet ignored;  // features of unknown types
};

inline DebiasResult debias(const ProbDist& dist, const FeatureSet& features,
                           const CalibrationProfile& profile) {
  DebiasResult r;
  r.used = features.restricted_to(profile.known_types);
  for (BiasFeature f : features.items()) {
    if (!r.used.contains(f)) r.ignored.insert(f);
  }
  r.score = dist.scores() - combined_nie(r.used, profile);
  r.label = argmax_label(r.score);
  return r;
}

/// Clip negatives, renormalize; uniform when nothing positive remains.
inline ProbDist report_probabilities(const ScoreVector& score) {
  return ProbDist::normalized(score);
}

// ---------------------------------------------------------------------------
// End-to-end calibration

struct CalibrationOptions {
  TypeSet known_types;
  int n = 15;
  int m = 90;
  std::uint64_t seed = 0;
  SolverOptions solver;
};

struct CalibrationRun {
  CalibSampleSet samples;
  CalibrationProfile profile;
};

inline std::string sample_set_hash(const std::vector<NLISample>& samples) {
  std::string ids;
  for (const auto& s : samples) ids += s.id + "\n";
  return sha256_hex(ids);
}

inline CalibrationRun calibrate(const std::vector<NLISample>& pool, const ProbabilityModel& model,
                                const PromptMode& mode, const CalibrationOptions& opt) {
  CalibrationRun run;
  run.samples = select_calibration_samples(pool, opt.known_types, opt.n, opt.m, opt.seed);
  auto& p = run.profile;
  p.known_types = opt.known_types;

  std::vector<NLISample> stage1_all;
  for (const auto& [f, samples] : run.samples.stage1) {
    const auto preds = predict_all(model, samples, mode);
    p.feature_nies[f] = estimate_feature_nie(f, preds);
    stage1_all.insert(stage1_all.end(), samples.begin(), samples.end());
  }
  const auto preds2 = predict_all(model, run.samples.stage2, mode);
  LambdaFit fit =
      estimate_lambdas(run.samples.stage2, preds2, p.feature_nies, opt.known_types, opt.solver);
  p.lambdas = std::move(fit.lambdas);
  p.diagnostics = fit.diagnostics;
  p.provenance["model"] = model.model_id();
  p.provenance["prompt_mode"] = mode.name();
  p.provenance["seed"] = opt.seed;
  p.provenance["n"] = opt.n;
  p.provenance["m"] = opt.m;
  p.provenance["stage1_hash"] = sample_set_hash(stage1_all);
  p.provenance["stage2_hash"] = sample_set_hash(run.samples.stage2);
  p.validate();
  return run;
}

}  // namespace mbias
