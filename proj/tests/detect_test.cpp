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

#include <memory>

#include "mbias/detect.hpp"
#include "support/fixtures.hpp"

namespace mbias {
namespace {

using testing::FixedScorer;
using testing::shipped_lexicons;

constexpr const char* kRowPremise =
    "Noah is a plumber. He builds furniture to decorate the home and save costs, using "
    "recycled wood.";
constexpr const char* kRowHypothesis = "He might build furniture to decorate the home and save costs.";

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("He might build furniture."),
            (Tokens{"he", "might", "build", "furniture"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize(kRowPremise).size(), 17u);
  EXPECT_EQ(tokenize(kRowHypothesis).size(), 11u);
}

TEST(Tokenize, DeletesPunctuationInsideWords) {
  EXPECT_EQ(tokenize("don't  stop\tnow"), (Tokens{"dont", "stop", "now"}));
  EXPECT_EQ(tokenize("café, NAÏVE"), (Tokens{"café", "naÏve"}));
}

TEST(LexicalOverlap, Examples) {
  EXPECT_DOUBLE_EQ(lexical_overlap("the cat sat", "the cat sat"), 1.0);
  EXPECT_DOUBLE_EQ(lexical_overlap("a b c", "x y z"), 0.0);
  EXPECT_DOUBLE_EQ(lexical_overlap("a b c d", "b c e"), 2.0 / 3.0);
  EXPECT_THROW(lexical_overlap("a b", "..."), ValidationError);
}

TEST(LengthFeature, Examples) {
  const DetectorConfig cfg;
  EXPECT_EQ(length_feature(kRowPremise, kRowHypothesis, cfg), BiasFeature::kHypShorter);
  EXPECT_EQ(length_feature("a b c", "d e f", cfg), std::nullopt);
  EXPECT_EQ(length_feature("a b c d e", "a b c d e f g h i j k l", cfg), BiasFeature::kHypLonger);
  // A gap of exactly five is not enough.
  EXPECT_EQ(length_feature("a b c d e f", "a", cfg), std::nullopt);
  EXPECT_EQ(length_feature("a b c d e f g", "a", cfg), BiasFeature::kHypShorter);
}

TEST(OverlapFeature, StrictThresholds) {
  const DetectorConfig cfg;
  EXPECT_EQ(overlap_feature("a b c d e", "a b c d e", cfg), BiasFeature::kOverlapHigh);
  // 4/5 = 0.8 sits on the threshold.
  EXPECT_EQ(overlap_feature("a b c d", "a b c d z", cfg), std::nullopt);
  EXPECT_EQ(overlap_feature("a", "a v w x y z", cfg), BiasFeature::kOverlapLow);
  EXPECT_EQ(overlap_feature("a", "a v w x y", cfg), std::nullopt);
  EXPECT_EQ(overlap_feature("a", "", cfg), std::nullopt);
}

TEST(SpeculativeFeature, Examples) {
  const auto& lex = shipped_lexicons();
  EXPECT_EQ(speculative_feature("Noah is a plumber.", "He might build furniture.", lex),
            BiasFeature::kSpeculative);
  EXPECT_EQ(speculative_feature("Noah is a plumber.", "He builds furniture.", lex),
            std::nullopt);
  EXPECT_EQ(speculative_feature("You must leave.", "Someone leaves.", lex),
            BiasFeature::kSpeculative);
  EXPECT_EQ(speculative_feature("Mayor Smith spoke.", "Smith spoke.", lex), std::nullopt);
}

TEST(GenderOccupationFeature, Examples) {
  const auto& lex = shipped_lexicons();
  EXPECT_EQ(gender_occupation_feature("Noah is a plumber.", "He might rest.", lex),
            BiasFeature::kMaleWithMaleOccupation);
  EXPECT_EQ(gender_occupation_feature("Noah is a plumber.", "Noah might rest.", lex),
            std::nullopt);
  EXPECT_EQ(gender_occupation_feature("Alex is a nurse.", "He might rest.", lex),
            BiasFeature::kMaleWithFemaleOccupation);
  EXPECT_EQ(gender_occupation_feature("Alex is a nurse and a plumber.", "He rests.", lex),
            BiasFeature::kMaleWithMaleOccupation);
  // The pronoun must be in the hypothesis, not the premise.
  EXPECT_EQ(gender_occupation_feature("He is a plumber.", "Alex rests.", lex), std::nullopt);
}

TEST(SemsimFeature, BertScoreThresholds) {
  const DetectorConfig cfg;
  EXPECT_EQ(semsim_feature("p", "h", FixedScorer(0.91), cfg), BiasFeature::kSemsimHigh);
  EXPECT_EQ(semsim_feature("p", "h", FixedScorer(0.85), cfg), std::nullopt);
  EXPECT_EQ(semsim_feature("p", "h", FixedScorer(0.80), cfg), BiasFeature::kSemsimLow);
  EXPECT_EQ(semsim_feature("p", "h", FixedScorer(0.88), cfg), std::nullopt);
  EXPECT_EQ(semsim_feature("p", "h", FixedScorer(0.83), cfg), std::nullopt);
}

TEST(SemsimFeature, NonBertScoreScorerNeedsExplicitThresholds) {
  const DetectorConfig cfg;
  EXPECT_THROW(semsim_feature("a", "a", TokenF1Scorer(), cfg), ValidationError);
  DetectorConfig with = cfg;
  with.semsim = TokenF1Scorer::kThresholds;
  EXPECT_EQ(semsim_feature("a b", "a b", TokenF1Scorer(), with), BiasFeature::kSemsimHigh);
}

TEST(TokenF1Scorer, Values) {
  const TokenF1Scorer s;
  EXPECT_DOUBLE_EQ(s.score("a b c d", "a b"), 2.0 * 1.0 * 0.5 / 1.5);
  EXPECT_DOUBLE_EQ(s.score("a b", "c d"), 0.0);
  EXPECT_DOUBLE_EQ(s.score("", "c d"), 0.0);
}

TEST(DetectAll, TableRowCarriesFiveFeatures) {
  const NLISample s{"r1", kRowPremise, kRowHypothesis, Label::kEntailment, {}};
  const FeatureSet found = detect_all(s, shipped_lexicons(), FixedScorer(0.9), DetectorConfig{});
  const FeatureSet want{BiasFeature::kHypShorter, BiasFeature::kOverlapHigh,
                        BiasFeature::kSemsimHigh, BiasFeature::kSpeculative,
                        BiasFeature::kMaleWithMaleOccupation};
  EXPECT_EQ(found, want);
}

TEST(DetectAll, ControlPairHasNoFeatures) {
  const NLISample s{"c", "The red train left the station early.",
                    "The train departed early today.", {}, {}};
  EXPECT_TRUE(detect_all(s, shipped_lexicons(), FixedScorer(0.85), DetectorConfig{}).empty());
}

TEST(DetectAll, OnlySpeculative) {
  const NLISample s{"c", "The red train left the station early.",
                    "The train might have departed early.", {}, {}};
  EXPECT_EQ(detect_all(s, shipped_lexicons(), FixedScorer(0.85), DetectorConfig{}),
            FeatureSet{BiasFeature::kSpeculative});
}

TEST(Detector, RejectsBadConfig) {
  DetectorConfig cfg;
  cfg.overlap_low = 0.9;
  EXPECT_THROW(Detector(shipped_lexicons(), std::make_shared<FixedScorer>(0.5), cfg),
               ValidationError);
  EXPECT_THROW(Detector(shipped_lexicons(), nullptr, DetectorConfig{}), ValidationError);
}

TEST(EmbeddingScorer, CosineMapping) {
  EXPECT_DOUBLE_EQ(EmbeddingScorer::cosine_score(json::parse(R"({"embeddings":[[1,0],[1,0]]})")),
                   1.0);
  EXPECT_DOUBLE_EQ(EmbeddingScorer::cosine_score(json::parse(R"({"embeddings":[[1,0],[-1,0]]})")),
                   0.0);
  EXPECT_DOUBLE_EQ(EmbeddingScorer::cosine_score(json::parse(R"({"embeddings":[[1,0],[0,2]]})")),
                   0.5);
  EXPECT_THROW(EmbeddingScorer::cosine_score(json::parse(R"({"embeddings":[[1,0]]})")),
               ValidationError);
}

TEST(Lexicons, ShippedFilesValidate) {
  const auto& lex = shipped_lexicons();
  EXPECT_EQ(lex.speculative_words, required_speculative_words());
  EXPECT_EQ(lex.male_biased_occupations.size(), 87u);
  EXPECT_TRUE(lex.male_pronouns.count("he"));
}

}  // namespace
}  // namespace mbias
