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


#include <gtest/gtest.h>

#include "mbias/benchgen.hpp"
#include "mbias/calib.hpp"
#include "mbias/eval.hpp"
#include "mbias/pool.hpp"
#include "support/fixtures.hpp"
#include "support/normal_equations.hpp"

namespace mbias {
namespace {

constexpr int kCases = 1000;

ScoreVector random_scores(Rng& rng, double lo, double hi) {
  auto u = [&] { return lo + (hi - lo) * rng.uniform(); };
  return {u(), u(), u()};
}

ProbDist random_dist(Rng& rng) {
  return ProbDist::normalized(random_scores(rng, 0.0, 1.0) + ScoreVector(1e-6, 1e-6, 1e-6));
}

FeatureSet random_features(Rng& rng, const TypeSet& types = all_bias_types()) {
  FeatureSet fs;
  for (BiasType t : types.items()) {
    std::vector<BiasFeature> options;
    for (const auto& fi : kBiasFeatures) {
      if (fi.type == t) options.push_back(fi.feature);
    }
    const std::size_t pick = rng.index(options.size() + 1);
    if (pick < options.size()) fs.insert(options[pick]);
  }
  return fs;
}

void expect_valid(const ProbDist& d) {
  double sum = 0;
  for (double v : d.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(Property, DistributionValidity) {
  Rng rng(101);
  for (int i = 0; i < kCases; ++i) {
    expect_valid(ProbDist::normalized(random_scores(rng, -1.0, 1.0)));
    SyntheticOracleConfig cfg = SyntheticOracleConfig::default_profile();
    cfg.base_confidence = 0.34 + 0.66 * rng.uniform();
    cfg.noise_scale = 0.2 * rng.uniform();
    cfg.noise_seed = rng.next();
    const NLISample s{"x" + std::to_string(i), "p", "h", label_at(rng.index(3)),
                      random_features(rng)};
    expect_valid(oracle_predict(s, cfg));
    std::vector<ProbDist> ds;
    for (std::size_t k = 0, n = 1 + rng.index(20); k < n; ++k) ds.push_back(random_dist(rng));
    expect_valid(dist_mean(ds));
    std::array<int, kNumLabels> counts{static_cast<int>(rng.index(50)),
                                       static_cast<int>(rng.index(50)),
                                       static_cast<int>(rng.index(50))};
    expect_valid(smoothed_frequencies(counts));
  }
}

TEST(Property, NieSumsToZero) {
  Rng rng(202);
  for (int i = 0; i < kCases; ++i) {
    std::vector<ProbDist> ds;
    for (std::size_t k = 0, n = 1 + rng.index(60); k < n; ++k) ds.push_back(random_dist(rng));
    const FeatureNIE nie = estimate_feature_nie(BiasFeature::kSemsimHigh, ds);
    EXPECT_NEAR(nie.nie.sum(), 0.0, 1e-9);
  }
}

CalibrationProfile random_profile(Rng& rng) {
  CalibrationProfile p = CalibrationProfile::zero(all_bias_types());
  for (auto& [f, n] : p.feature_nies) n.nie = random_scores(rng, -0.3, 0.3);
  for (auto& [t, l] : p.lambdas) l = 3.0 * rng.uniform() - 1.0;
  return p;
}

TEST(Property, ArgmaxInvariantToConstantNieShift) {
  Rng rng(303);
  for (int i = 0; i < kCases; ++i) {
    const CalibrationProfile p = random_profile(rng);
    CalibrationProfile shifted = p;
    const double c = 2.0 * rng.uniform() - 1.0;
    for (auto& [f, n] : shifted.feature_nies) n.nie += ScoreVector(c, c, c);
    const ProbDist d = random_dist(rng);
    const FeatureSet fs = random_features(rng);
    EXPECT_EQ(debias(d, fs, p).label, debias(d, fs, shifted).label);
  }
}

TEST(Property, ZeroProfileIsNoOp) {
  Rng rng(404);
  const auto zero = CalibrationProfile::zero(all_bias_types());
  for (int i = 0; i < kCases; ++i) {
    const ProbDist d = random_dist(rng);
    const DebiasResult r = debias(d, random_features(rng), zero);
    EXPECT_EQ(r.score, d.scores());
    EXPECT_EQ(r.label, argmax_label(d));
  }
}

TEST(Property, DeterminismUnderSeed) {
  Rng rng(505);
  const Vocab vocab = load_vocab(VocabPaths::in_directory(testing::data_dir()));
  const Detector det = testing::token_f1_detector();
  for (int i = 0; i < kCases; ++i) {
    const std::uint64_t seed = rng.next();
    GenConfig gen;
    gen.total = 3;
    gen.seed = seed;
    EXPECT_EQ(dataset_to_jsonl(generate(gen, vocab, det)),
              dataset_to_jsonl(generate(gen, vocab, det)));

    SyntheticPoolConfig pc;
    pc.seed = seed;
    pc.pure_per_feature = 6;
    pc.featureless = 3;
    pc.triplets_per_combination = 1;
    const auto pool = synthetic_pool(pc);
    EXPECT_EQ(sample_set_hash(pool), sample_set_hash(synthetic_pool(pc)));
    const TypeSet known = {BiasType::kLexicalOverlap, BiasType::kSpeculativeWord};
    const auto a = select_calibration_samples(pool, known, 6, 6, seed);
    const auto b = select_calibration_samples(pool, known, 6, 6, seed);
    EXPECT_EQ(sample_set_hash(a.stage2), sample_set_hash(b.stage2));
    EXPECT_EQ(sample_set_hash(a.stage1.at(BiasFeature::kOverlapLow)),
              sample_set_hash(b.stage1.at(BiasFeature::kOverlapLow)));
    EXPECT_EQ(random_type_subsets(all_bias_types(), 3, 2, seed),
              random_type_subsets(all_bias_types(), 3, 2, seed));
  }
}

std::string random_sentence(Rng& rng, const std::vector<std::string>& words) {
  std::string s;
  for (std::size_t k = 0, n = 1 + rng.index(20); k < n; ++k) {
    if (k) s += rng.index(6) == 0 ? ", " : " ";
    s += words[rng.index(words.size())];
  }
  return s + ".";
}

TEST(Property, DetectorsArePureFunctions) {
  const auto& lex = testing::shipped_lexicons();
  std::vector<std::string> words = {"He",  "Alex", "is",     "a",   "the",   "works",
                                    "as",  "home", "builds", "him", "quiet", "nurse"};
  for (const auto& w : lex.speculative_words) words.push_back(w);
  for (const auto& w : lex.male_biased_occupations) words.push_back(w);
  Rng rng(606);
  const Detector det = testing::token_f1_detector();
  for (int i = 0; i < kCases; ++i) {
    NLISample s{"a", random_sentence(rng, words), random_sentence(rng, words), Label::kNeutral,
                std::nullopt};
    const FeatureSet first = det.detect(s);
    NLISample other = s;
    other.id = "b";
    other.gold = Label::kContradiction;
    other.features = FeatureSet{BiasFeature::kSpeculative};
    EXPECT_EQ(det.detect(other), first);
    EXPECT_EQ(det.detect(s), first);

    const double overlap = lexical_overlap(s.premise, s.hypothesis);
    EXPECT_GE(overlap, 0.0);
    EXPECT_LE(overlap, 1.0);
    EXPECT_EQ(first.contains(BiasFeature::kOverlapHigh), overlap > 0.8);
    EXPECT_EQ(first.contains(BiasFeature::kOverlapLow), overlap < 0.2);
    const long gap = static_cast<long>(tokenize(s.premise).size()) -
                     static_cast<long>(tokenize(s.hypothesis).size());
    EXPECT_EQ(first.contains(BiasFeature::kHypShorter), gap > 5);
    EXPECT_EQ(first.contains(BiasFeature::kHypLonger), gap < -5);
  }
}

TEST(Property, LeastSquaresMatchesNormalEquations) {
  Rng rng(707);
  for (int i = 0; i < kCases; ++i) {
    const auto cols = static_cast<Eigen::Index>(1 + rng.index(4));
    const auto rows = static_cast<Eigen::Index>(3 * (cols + rng.index(4)));
    LambdaSystem sys;
    sys.a = Eigen::MatrixXd(rows, cols);
    sys.b = Eigen::VectorXd(rows);
    testing::Matrix a(static_cast<std::size_t>(rows));
    std::vector<double> b;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        sys.a(r, c) = 0.4 * rng.uniform() - 0.2;
        a[static_cast<std::size_t>(r)].push_back(sys.a(r, c));
      }
      sys.b(r) = 0.4 * rng.uniform() - 0.2;
      b.push_back(sys.b(r));
    }
    for (Eigen::Index c = 0; c < cols; ++c) sys.unknowns.push_back(static_cast<BiasType>(c));
    const LambdaFit fit = solve_lambda_system(sys);
    ASSERT_FALSE(fit.diagnostics.rank_deficient);
    if (fit.diagnostics.condition_number > 1e4) continue;
    const auto ref = testing::normal_equations_solve(a, b);
    for (Eigen::Index c = 0; c < cols; ++c) {
      EXPECT_NEAR(fit.lambdas.at(static_cast<BiasType>(c)), ref[static_cast<std::size_t>(c)],
                  1e-9);
    }
  }
}

TEST(Property, AccuracyMatchesErrorRates) {
  Rng rng(808);
  for (int i = 0; i < kCases; ++i) {
    std::vector<NLISample> d;
    std::map<std::string, Label> p;
    for (std::size_t k = 0, n = 1 + rng.index(40); k < n; ++k) {
      const std::string id = "s" + std::to_string(k);
      d.push_back({id, "p", "h", label_at(rng.index(3)), std::nullopt});
      p[id] = label_at(rng.index(3));
    }
    const EvalReport r = evaluate(d, p);
    double weighted = 0;
    for (std::size_t j = 0; j < kNumLabels; ++j) weighted += r.error_rate[j] * r.label_total[j];
    EXPECT_NEAR(r.accuracy, 100.0 - weighted / r.total, 1e-9);
  }
}

TEST(Property, DatasetMatchingModelHasNoPolarity) {
  Rng rng(909);
  for (int i = 0; i < kCases; ++i) {
    std::array<int, kNumLabels> counts{1 + static_cast<int>(rng.index(20)),
                                       1 + static_cast<int>(rng.index(20)),
                                       1 + static_cast<int>(rng.index(20))};
    std::vector<NLISample> samples;
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      for (int k = 0; k < counts[l]; ++k) samples.push_back({"s", "p", "h", label_at(l), {}});
    }
    const double n = static_cast<double>(samples.size());
    const ProbDist mix(counts[0] / n, counts[1] / n, 1.0 - counts[0] / n - counts[1] / n);
    const std::vector<ProbDist> preds(samples.size(), mix);
    EXPECT_EQ(polarity_report("control", samples, preds).polarity, std::nullopt);
  }
}

}  // namespace
}  // namespace mbias
