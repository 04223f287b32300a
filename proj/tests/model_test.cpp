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

#include <atomic>
#include <thread>

#include "mbias/model.hpp"
#include "mbias/similarity.hpp"
#include "support/temp_dir.hpp"

namespace mbias {
namespace {

using testing::TempDir;

NLISample sample(std::string id, Label gold, FeatureSet f = {}) {
  return {std::move(id), "A man sleeps.", "Someone rests.", gold, f};
}

void expect_dist(const ProbDist& d, double e, double n, double c, double tol = 1e-12) {
  EXPECT_NEAR(d[0], e, tol);
  EXPECT_NEAR(d[1], n, tol);
  EXPECT_NEAR(d[2], c, tol);
}

TEST(Verbalizer, PrefixMatching) {
  EXPECT_EQ(match_verbalizer("Entailment."), Label::kEntailment);
  EXPECT_EQ(match_verbalizer(" neutral"), Label::kNeutral);
  EXPECT_EQ(match_verbalizer("CONTRA"), Label::kContradiction);
  EXPECT_EQ(match_verbalizer("\"ent"), Label::kEntailment);
  EXPECT_EQ(match_verbalizer("contradictions"), Label::kContradiction);
  EXPECT_EQ(match_verbalizer("yes"), std::nullopt);
  EXPECT_EQ(match_verbalizer("  "), std::nullopt);
}

TEST(Smoothing, AddOneCounts) {
  expect_dist(smoothed_frequencies({5, 3, 1}), 6.0 / 12, 4.0 / 12, 2.0 / 12, 1e-15);
  expect_dist(smoothed_frequencies({0, 0, 0}), 1.0 / 3, 1.0 / 3, 1.0 / 3, 1e-15);
}

json choices(const std::vector<std::string>& answers) {
  json out = {{"choices", json::array()}};
  for (const auto& a : answers) out["choices"].push_back({{"message", {{"content", a}}}});
  return out;
}

TEST(SampleK, CountsAndUnparsed) {
  const ParsedDist p = dist_from_samples(choices({"Entailment", "entailment", "Neutral.",
                                                  "contradiction", "I am unsure", "entail",
                                                  "ent", "neutral", "Entailment"}));
  expect_dist(p.dist, 6.0 / 11, 3.0 / 11, 2.0 / 11);
  EXPECT_EQ(p.unparsed, 1);
}

json logprob_reply(const std::string& token, double lp, const json& alts) {
  json tok = {{"token", token}, {"logprob", lp}, {"top_logprobs", alts}};
  return {{"choices", {{{"logprobs", {{"content", {tok}}}}}}}};
}

TEST(Logprob, MergesVariantsAndRenormalizes) {
  const json alts = json::array({
      {{"token", "Ent"}, {"logprob", std::log(0.5)}},
      {{"token", " entailment"}, {"logprob", std::log(0.1)}},
      {{"token", "Neutral"}, {"logprob", std::log(0.2)}},
      {{"token", "Contr"}, {"logprob", std::log(0.1)}},
      {{"token", "The"}, {"logprob", std::log(0.1)}},
  });
  const ParsedDist p = dist_from_logprobs(logprob_reply("Ent", std::log(0.5), alts));
  expect_dist(p.dist, 0.6 / 0.9, 0.2 / 0.9, 0.1 / 0.9);
  EXPECT_EQ(p.unparsed, 0);
}

TEST(Logprob, SkipsLeadingWhitespaceToken) {
  json reply = logprob_reply("neutral", 0.0, json::array());
  auto& content = reply["choices"][0]["logprobs"]["content"];
  content.insert(content.begin(), json{{"token", " "}, {"logprob", -0.1}});
  expect_dist(dist_from_logprobs(reply).dist, 0, 1, 0);
}

TEST(Logprob, UnusableReplyIsUniformAndCounted) {
  const ParsedDist a = dist_from_logprobs(json::parse(R"({"choices":[{"message":{}}]})"));
  expect_dist(a.dist, 1.0 / 3, 1.0 / 3, 1.0 / 3);
  EXPECT_EQ(a.unparsed, 1);
  const ParsedDist b = dist_from_logprobs(logprob_reply("Yes", -0.1, json::array()));
  EXPECT_EQ(b.unparsed, 1);
}

TEST(Oracle, DegenerateConfidence) {
  SyntheticOracleConfig cfg;
  cfg.base_confidence = 1.0;
  expect_dist(oracle_predict(sample("a", Label::kNeutral), cfg), 0, 1, 0);
}

TEST(Oracle, BaseCase) {
  SyntheticOracleConfig cfg;
  cfg.base_confidence = 0.7;
  expect_dist(oracle_predict(sample("a", Label::kEntailment), cfg), 0.7, 0.15, 0.15);
}

TEST(Oracle, SingleFeatureShift) {
  SyntheticOracleConfig cfg;
  cfg.base_confidence = 0.7;
  cfg.shifts[BiasFeature::kSpeculative] = {0.2, -0.1, -0.1};
  cfg.combination_weights[BiasType::kSpeculativeWord] = 1.0;
  expect_dist(oracle_predict(sample("a", Label::kEntailment, {BiasFeature::kSpeculative}), cfg),
              0.9, 0.05, 0.05);
}

TEST(Oracle, WeightsApplyToCombinations) {
  SyntheticOracleConfig cfg;
  cfg.base_confidence = 0.4;
  cfg.shifts[BiasFeature::kSpeculative] = {0.2, -0.1, -0.1};
  cfg.shifts[BiasFeature::kOverlapHigh] = {0.1, 0.0, -0.1};
  cfg.combination_weights[BiasType::kSpeculativeWord] = 0.5;
  cfg.combination_weights[BiasType::kLexicalOverlap] = 2.0;
  const auto d = oracle_predict(
      sample("a", Label::kNeutral, {BiasFeature::kSpeculative, BiasFeature::kOverlapHigh}), cfg);
  expect_dist(d, 0.3 + 0.1 + 0.2, 0.4 - 0.05, 0.3 - 0.05 - 0.2);
}

TEST(Oracle, ClipsNegativeMass) {
  SyntheticOracleConfig cfg;
  cfg.base_confidence = 0.4;
  cfg.shifts[BiasFeature::kSpeculative] = {0.5, -0.1, -0.4};
  expect_dist(oracle_predict(sample("a", Label::kNeutral, {BiasFeature::kSpeculative}), cfg),
              0.8 / 1.1, 0.3 / 1.1, 0.0);
}

TEST(Oracle, NoiseIsZeroSumAndDeterministic) {
  SyntheticOracleConfig cfg;
  cfg.noise_scale = 0.02;
  cfg.noise_seed = 5;
  const auto a = oracle_predict(sample("x1", Label::kEntailment), cfg);
  EXPECT_EQ(a, oracle_predict(sample("x1", Label::kEntailment), cfg));
  EXPECT_NE(a, oracle_predict(sample("x2", Label::kEntailment), cfg));
  cfg.noise_seed = 6;
  EXPECT_NE(a, oracle_predict(sample("x1", Label::kEntailment), cfg));
}

TEST(Oracle, RequiresGoldAndFeatures) {
  const SyntheticOracleConfig cfg;
  NLISample s = sample("a", Label::kEntailment);
  s.features.reset();
  EXPECT_THROW(oracle_predict(s, cfg), ValidationError);
  s = sample("a", Label::kEntailment);
  s.gold.reset();
  EXPECT_THROW(oracle_predict(s, cfg), ValidationError);
}

TEST(Oracle, ReferenceShiftsSumToZero) {
  for (const auto& [f, s] : SyntheticOracleConfig::reference_shifts()) {
    EXPECT_NEAR(s.sum(), 0.0, 1e-15) << to_string(f);
  }
  const auto s = SyntheticOracleConfig::reference_shifts().at(BiasFeature::kHypShorter);
  const double c = (0.998 - 1.0) / 3.0;
  EXPECT_NEAR(s[0], 0.437 - 1.0 / 3 - c, 1e-15);
}

TEST(Oracle, ProfileJsonRoundTrip) {
  const auto cfg = SyntheticOracleConfig::default_profile();
  const auto back = SyntheticOracleConfig::from_json(json::parse(cfg.to_json().dump()));
  EXPECT_EQ(back.to_json().dump(), cfg.to_json().dump());
  EXPECT_THROW(SyntheticOracleConfig::from_json(json::parse(R"({"base_confidence":0.2})")),
               ValidationError);
  EXPECT_THROW(
      SyntheticOracleConfig::from_json(json::parse(R"({"shifts":{"speculative":[0.1,0,0]}})")),
      ValidationError);
}

TEST(Prompt, ZeroAndFewShot) {
  const NLISample s = sample("a", Label::kEntailment);
  const std::string zero = build_prompt(s, PromptMode::zero_shot());
  EXPECT_TRUE(zero.ends_with("Premise: A man sleeps.\nHypothesis: Someone rests.\nAnswer:"));
  const std::vector<NLISample> pool = {sample("p1", Label::kEntailment),
                                       sample("p2", Label::kNeutral),
                                       sample("p3", Label::kContradiction)};
  const PromptMode few = select_few_shot(pool, 1);
  ASSERT_EQ(few.demos().size(), 3u);
  const std::string prompt = build_prompt(s, few);
  EXPECT_NE(prompt.find("Answer: neutral\n"), std::string::npos);
  EXPECT_THROW(select_few_shot({pool[0], pool[1]}, 1), ValidationError);
  EXPECT_THROW(PromptMode::few_shot({{"a", "b", Label::kNeutral},
                                     {"a", "b", Label::kNeutral},
                                     {"a", "b", Label::kEntailment}}),
               ValidationError);
}

EndpointConfig endpoint(const std::string& model = "m1") {
  EndpointConfig ep;
  ep.model = model;
  ep.base_url = "http://127.0.0.1:1/v1";
  ep.api_key_env = "MBIAS_TEST_TOKEN";
  ep.retry.initial_backoff = std::chrono::milliseconds(1);
  ep.timeout = std::chrono::milliseconds(5000);
  return ep;
}

TEST(CacheKey, Properties) {
  const NLISample s = sample("a", Label::kEntailment);
  const auto zero = PromptMode::zero_shot();
  const auto few = PromptMode::few_shot({{"p", "h", Label::kNeutral},
                                         {"p", "h", Label::kEntailment},
                                         {"p", "h", Label::kContradiction}});
  const auto ep = endpoint();
  EXPECT_EQ(cache_key(s, zero, ep), cache_key(s, zero, ep));
  EXPECT_NE(cache_key(s, zero, ep), cache_key(s, few, ep));
  EXPECT_NE(cache_key(s, zero, ep), cache_key(s, zero, endpoint("m2")));
  EXPECT_EQ(cache_key(s, zero, ep).size(), 64u);

  // The run seed only matters when decoding is stochastic.
  auto seeded = ep;
  seeded.run_seed = 9;
  EXPECT_EQ(cache_key(s, zero, ep), cache_key(s, zero, seeded));
  auto k1 = ep, k2 = seeded;
  k1.strategy = k2.strategy = DistributionStrategy::kSampleK;
  EXPECT_NE(cache_key(s, zero, k1), cache_key(s, zero, k2));
  EXPECT_NE(cache_key(s, zero, ep), cache_key(s, zero, k1));
}

/// Local chat-completions stand-in.
class MockServer {
 public:
  MockServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url(const std::string& prefix = "/v1") const {
    return "http://127.0.0.1:" + std::to_string(port_) + prefix;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(ChatClient, LogprobRequestAndParse) {
  MockServer mock;
  json seen;
  std::string auth;
  mock.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    const json alts = json::array({{{"token", "neutral"}, {"logprob", std::log(0.75)}},
                                   {{"token", "entailment"}, {"logprob", std::log(0.25)}}});
    res.set_content(logprob_reply("neutral", std::log(0.75), alts).dump(), "application/json");
  });
  setenv("MBIAS_TEST_TOKEN", "secret-token", 1);
  auto ep = endpoint();
  ep.base_url = mock.url();
  ChatCompletionModel model(ep, nullptr);
  const ProbDist d = model.predict(sample("a", Label::kEntailment), PromptMode::zero_shot());
  expect_dist(d, 0.25, 0.75, 0.0);
  EXPECT_EQ(auth, "Bearer secret-token");
  EXPECT_EQ(seen["model"], "m1");
  EXPECT_EQ(seen["logprobs"], true);
  EXPECT_EQ(seen["max_tokens"], 1);
  EXPECT_EQ(seen["temperature"], 0);
  EXPECT_EQ(seen["top_logprobs"], 20);
  unsetenv("MBIAS_TEST_TOKEN");
}

TEST(ChatClient, SampleKRequestAndCacheReplay) {
  MockServer mock;
  std::atomic<int> calls{0};
  json seen;
  mock.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    seen = json::parse(req.body);
    res.set_content(choices({"entailment", "entailment", "entailment", "entailment", "entailment",
                             "neutral", "neutral", "neutral", "contradiction"})
                        .dump(),
                    "application/json");
  });
  TempDir dir;
  auto ep = endpoint();
  ep.base_url = mock.url();
  ep.strategy = DistributionStrategy::kSampleK;
  ep.run_seed = 3;
  auto cache = std::make_shared<ReplayCache>(dir / "cache.jsonl");
  const NLISample s = sample("a", Label::kEntailment);
  ProbDist first = uniform_dist();
  {
    ChatCompletionModel model(ep, cache);
    first = model.predict(s, PromptMode::zero_shot());
    EXPECT_EQ(model.predict(s, PromptMode::zero_shot()), first);
    EXPECT_EQ(model.stats().requests, 1);
    EXPECT_EQ(model.stats().cache_hits, 1);
  }
  expect_dist(first, 6.0 / 12, 4.0 / 12, 2.0 / 12, 1e-15);
  EXPECT_EQ(seen["n"], 9);
  EXPECT_EQ(seen["seed"], 3);
  EXPECT_EQ(seen["temperature"], 1);
  EXPECT_EQ(calls, 1);

  auto offline = ep;
  offline.offline = true;
  ChatCompletionModel replay(offline, cache);
  EXPECT_EQ(replay.predict(s, PromptMode::zero_shot()), first);
  NLISample unseen = sample("other", Label::kNeutral);
  unseen.hypothesis = "Nobody rests.";
  EXPECT_THROW(replay.predict(unseen, PromptMode::zero_shot()), IoError);
}

TEST(ChatClient, RetriesServerErrorsAndRateLimits) {
  MockServer mock;
  std::atomic<int> calls{0};
  mock.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    const int n = ++calls;
    if (n == 1) {
      res.status = 500;
    } else if (n == 2) {
      res.status = 429;
    } else {
      res.set_content(choices({"neutral"}).dump(), "application/json");
    }
  });
  auto ep = endpoint();
  ep.base_url = mock.url();
  ep.strategy = DistributionStrategy::kSampleK;
  ep.k = 1;
  ChatCompletionModel model(ep, nullptr);
  expect_dist(model.predict(sample("a", Label::kNeutral), PromptMode::zero_shot()), 0.25, 0.5,
              0.25);
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(model.stats().http_attempts, 3);
}

TEST(ChatClient, ExhaustedRetriesAndClientErrors) {
  MockServer mock;
  std::atomic<int> calls{0};
  mock.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    res.status = json::parse(req.body)["model"] == "bad" ? 400 : 503;
  });
  auto ep = endpoint();
  ep.base_url = mock.url();
  {
    ChatCompletionModel model(ep, nullptr);
    EXPECT_THROW(model.predict(sample("a", Label::kNeutral), PromptMode::zero_shot()),
                 NetworkError);
    EXPECT_EQ(calls, 3);
  }
  calls = 0;
  ep.model = "bad";
  ChatCompletionModel bad(ep, nullptr);
  EXPECT_THROW(bad.predict(sample("a", Label::kNeutral), PromptMode::zero_shot()), NetworkError);
  EXPECT_EQ(calls, 1);
}

TEST(ChatClient, OfflineNeedsCache) {
  auto ep = endpoint();
  ep.offline = true;
  EXPECT_THROW(ChatCompletionModel(ep, nullptr), ValidationError);
  ep.model.clear();
  ep.offline = false;
  EXPECT_THROW(ChatCompletionModel(ep, nullptr), ValidationError);
}

TEST(PredictAll, PreservesOrderAndPropagatesErrors) {
  const OracleModel oracle(SyntheticOracleConfig::default_profile());
  std::vector<NLISample> samples;
  for (int i = 0; i < 200; ++i) {
    samples.push_back(sample("s" + std::to_string(i), label_at(i % 3), {}));
  }
  const auto out = predict_all(oracle, samples, PromptMode::zero_shot(), 8);
  ASSERT_EQ(out.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(out[i], oracle.predict(samples[i], PromptMode::zero_shot()));
  }
  samples[57].gold.reset();
  EXPECT_THROW(predict_all(oracle, samples, PromptMode::zero_shot(), 8), ValidationError);
}

TEST(EmbeddingClient, ScoresThroughService) {
  MockServer mock;
  json seen;
  mock.server().Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(R"({"embeddings":[[1,1],[1,0]]})", "application/json");
  });
  EmbeddingScorerConfig cfg;
  cfg.base_url = mock.url("");
  cfg.model = "e1";
  EmbeddingScorer scorer(cfg);
  EXPECT_NEAR(scorer.score("p", "h"), (1.0 / std::sqrt(2.0) + 1.0) / 2.0, 1e-12);
  EXPECT_EQ(seen["texts"], json({"p", "h"}));
  EXPECT_EQ(seen["model"], "e1");
  EXPECT_FALSE(scorer.bertscore_compatible());
}

}  // namespace
}  // namespace mbias
