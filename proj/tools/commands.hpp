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

// Subcommand bodies for the mbias tool. Option structs are filled by the
// argument parser in mbias.cpp.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mbias/mbias.hpp"

namespace mbias::cli {

namespace fs = std::filesystem;

inline bool g_quiet = false;

inline void note(const std::string& msg) {
  if (!g_quiet) std::cerr << msg << "\n";
}

inline std::string default_data_dir() {
  if (const char* env = std::getenv("MBIAS_DATA_DIR"); env && *env) return env;
#ifdef MBIAS_DEFAULT_DATA_DIR
  return MBIAS_DEFAULT_DATA_DIR;
#else
  return "data";
#endif
}

/// Embedded in every output file.
struct Provenance {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;

  ordered_json to_json() const {
    ordered_json j;
    j["tool"] = "mbias";
    j["command"] = command;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    return j;
  }
};

// ---------------------------------------------------------------------------
// Shared option groups

struct DetectorOptions {
  std::string data_dir = default_data_dir();
  std::string scorer = "token-f1";  // token-f1 | embedding
  std::optional<double> semsim_high;
  std::optional<double> semsim_low;
  int length_gap = 5;
  double overlap_high = 0.8;
  double overlap_low = 0.2;
  std::string embed_url;
  std::string embed_model;
  std::string embed_key_env;
  bool embed_bertscore_scale = false;

  std::shared_ptr<const SimilarityScorer> make_scorer() const {
    if (scorer == "token-f1") return std::make_shared<TokenF1Scorer>();
    if (scorer == "embedding") {
      if (embed_url.empty()) throw IoError("--embed-url is required for the embedding scorer");
      EmbeddingScorerConfig c;
      c.base_url = embed_url;
      c.model = embed_model;
      c.api_key_env = embed_key_env;
      c.bertscore_compatible = embed_bertscore_scale;
      return std::make_shared<EmbeddingScorer>(c);
    }
    throw ValidationError("unknown similarity scorer '" + scorer + "'");
  }

  Detector make_detector() const {
    auto sc = make_scorer();
    DetectorConfig cfg;
    cfg.length_gap_words = length_gap;
    cfg.overlap_high = overlap_high;
    cfg.overlap_low = overlap_low;
    if (semsim_high || semsim_low) {
      auto base = sc->recommended_thresholds().value_or(kBertScoreThresholds);
      cfg.semsim = SemsimThresholds{semsim_high.value_or(base.high), semsim_low.value_or(base.low)};
    } else if (!sc->bertscore_compatible()) {
      cfg.semsim = sc->recommended_thresholds();
      if (!cfg.semsim) {
        throw ValidationError("scorer '" + sc->scorer_id() +
                              "' needs explicit --semsim-high/--semsim-low thresholds");
      }
    }
    return Detector(load_lexicons(LexiconPaths::in_directory(data_dir)), sc, cfg);
  }
};

struct ModelOptions {
  std::string backend = "oracle";  // oracle | chat
  std::string oracle_profile;      // JSON file; empty selects the default profile
  std::string base_url = "https://api.openai.com/v1";
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  std::string strategy = "logprob";
  int k = 9;
  int timeout_ms = 60000;
  int max_parallel = 4;
  int min_interval_ms = 0;
  int retries = 3;
  std::string cache;
  bool offline = false;
  std::uint64_t run_seed = 0;
  std::string instruction_file;
  std::string prompt = "zero-shot";  // zero-shot | few-shot
  std::string demo_pool;
  std::uint64_t demo_seed = 0;
};

struct ModelHandle {
  std::unique_ptr<ProbabilityModel> model;
  const ChatCompletionModel* chat = nullptr;
  PromptMode mode = PromptMode::zero_shot();
};

inline ModelHandle make_model(const ModelOptions& o, const std::string& data_dir) {
  ModelHandle h;
  if (o.prompt == "few-shot") {
    if (o.demo_pool.empty()) throw IoError("few-shot prompting needs --demo-pool");
    h.mode = select_few_shot(read_samples_jsonl(o.demo_pool), o.demo_seed);
  } else if (o.prompt != "zero-shot") {
    throw ValidationError("unknown prompt mode '" + o.prompt + "'");
  }

  if (o.backend == "oracle") {
    SyntheticOracleConfig cfg = SyntheticOracleConfig::default_profile();
    if (!o.oracle_profile.empty()) {
      try {
        cfg = SyntheticOracleConfig::from_json(json::parse(read_text_file(o.oracle_profile)));
      } catch (const json::exception& e) {
        throw IoError("bad oracle profile '" + o.oracle_profile + "': " + e.what());
      }
    }
    h.model = std::make_unique<OracleModel>(cfg);
    return h;
  }
  if (o.backend != "chat") throw ValidationError("unknown backend '" + o.backend + "'");

  EndpointConfig ep;
  ep.base_url = o.base_url;
  ep.model = o.model;
  ep.api_key_env = o.api_key_env;
  ep.strategy = parse_strategy(o.strategy);
  ep.k = o.k;
  ep.timeout = std::chrono::milliseconds(o.timeout_ms);
  ep.max_parallel = o.max_parallel;
  ep.min_request_interval = std::chrono::milliseconds(o.min_interval_ms);
  ep.retry.max_attempts = o.retries;
  ep.offline = o.offline;
  ep.run_seed = o.run_seed;
  const std::string instr_path = o.instruction_file.empty()
                                     ? (fs::path(data_dir) / "prompts" / "instruction.txt").string()
                                     : o.instruction_file;
  ep.instruction = trim(read_text_file(instr_path));
  std::shared_ptr<ReplayCache> cache;
  if (!o.cache.empty()) cache = std::make_shared<ReplayCache>(o.cache);
  auto chat = std::make_unique<ChatCompletionModel>(ep, cache);
  h.chat = chat.get();
  h.model = std::move(chat);
  return h;
}

inline void report_client_stats(const ModelHandle& h) {
  if (!h.chat) return;
  const auto& s = h.chat->stats();
  note("requests " + std::to_string(s.requests.load()) + ", cache hits " +
       std::to_string(s.cache_hits.load()) + ", unparseable " + std::to_string(s.unparsed.load()));
}

/// Detects features for samples that carry no annotation.
inline void ensure_features(std::vector<NLISample>& samples, const DetectorOptions& d) {
  bool missing = false;
  for (const auto& s : samples) missing = missing || !s.features;
  if (!missing) return;
  annotate_features(samples, d.make_detector());
}

inline void write_json(const fs::path& path, const ordered_json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
  std::string out;
  std::string report;  // defaults to <out>.verify.json
  std::size_t total = 12000;
  std::uint64_t seed = 42;
  int max_attempts = 200;
  std::string id_prefix = "5bias-";
  // Placeholder pool mode.
  bool pool = false;
  std::vector<std::string> pool_types = {"length", "overlap", "semsim", "speculative"};
  std::size_t pool_pure = 30;
  std::size_t pool_triplets = 3;
  std::size_t pool_featureless = 30;
};

inline TypeSet parse_type_list(const std::vector<std::string>& ids) {
  TypeSet s;
  for (const auto& raw : ids) {
    for (const auto& part : split_csv(raw)) s.insert(parse_bias_type_or_throw(part));
  }
  return s;
}

inline int cmd_generate(const GenerateOptions& o, const DetectorOptions& d, const Provenance& p) {
  if (o.out.empty()) throw IoError("--out is required");
  if (o.pool) {
    SyntheticPoolConfig pc;
    pc.types = parse_type_list(o.pool_types);
    pc.pure_per_feature = o.pool_pure;
    pc.triplets_per_combination = o.pool_triplets;
    pc.featureless = o.pool_featureless;
    pc.seed = o.seed;
    const auto pool = synthetic_pool(pc);
    std::string text;
    const auto prov = p.to_json();
    for (const auto& s : pool) {
      ordered_json j = sample_to_json(s);
      j["provenance"] = prov;
      text += j.dump() + "\n";
    }
    write_file_atomic(o.out, text);
    note("wrote " + std::to_string(pool.size()) + " pool samples to " + o.out);
    return 0;
  }

  const Detector detector = d.make_detector();
  const Vocab vocab = load_vocab(VocabPaths::in_directory(d.data_dir));
  GenConfig cfg;
  cfg.total = o.total;
  cfg.seed = o.seed;
  cfg.max_attempts = o.max_attempts;
  cfg.id_prefix = o.id_prefix;
  const Dataset ds = generate(cfg, vocab, detector);

  ordered_json prov = p.to_json();
  prov["scorer"] = detector.scorer().scorer_id();
  write_file_atomic(o.out, dataset_to_jsonl(ds, prov));

  std::vector<NLISample> samples;
  samples.reserve(ds.samples.size());
  for (const auto& g : ds.samples) samples.push_back(g.sample);
  const VerifyReport vr = verify_dataset(samples, detector);
  ordered_json rj = vr.to_json();
  rj["generation"] = {{"attempts", ds.stats.attempts},
                      {"accepted", ds.stats.accepted},
                      {"duplicates", ds.stats.duplicates}};
  rj["provenance"] = prov;
  write_json(o.report.empty() ? o.out + ".verify.json" : o.report, rj);
  note("wrote " + std::to_string(samples.size()) + " samples to " + o.out + " (" +
       (vr.all_pass() ? "all detectors pass" : "verification FAILED") + ")");
  if (!vr.all_pass()) {
    throw ValidationError(std::to_string(vr.failures.size()) +
                          " samples fail detection; see the verify report");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// probe

struct ProbeOptions {
  std::string pool;
  std::vector<std::string> features = {"all"};
  std::size_t count = 3000;
  bool allow_mixed = false;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

inline int cmd_probe(const ProbeOptions& o, const ModelOptions& mo, const DetectorOptions& d,
                     const Provenance& p) {
  if (o.pool.empty()) throw IoError("--pool is required");
  auto pool = read_samples_jsonl(o.pool);
  ensure_features(pool, d);
  // Features pulled in by "all" are skipped when the pool has none of them;
  // features named explicitly must be present.
  std::vector<std::pair<BiasFeature, bool>> feats;
  for (const auto& raw : o.features) {
    for (const auto& f : split_csv(raw)) {
      if (f == "all") {
        for (const auto& fi : kBiasFeatures) feats.emplace_back(fi.feature, false);
      } else {
        feats.emplace_back(parse_feature_or_throw(f), true);
      }
    }
  }
  const ModelHandle h = make_model(mo, d.data_dir);
  std::string csv = PolarityReport::csv_header();
  ordered_json prov = p.to_json();
  prov["pool"] = o.pool;
  prov["pool_hash"] = sha256_hex(read_text_file(o.pool));
  int written = 0;
  for (const auto& [f, required] : feats) {
    const auto samples = select_probe_samples(pool, f, o.count, !o.allow_mixed, o.seed);
    if (samples.empty() && !required) {
      note("skipping " + std::string(to_string(f)) + ": no eligible samples in the pool");
      continue;
    }
    PolarityReport r = probe_polarity(f, samples, *h.model, h.mode);
    for (const auto& [k, v] : prov.items()) r.provenance[k] = v;
    write_json(fs::path(o.out_dir) / ("polarity-" + r.name + ".json"), r.to_json());
    csv += r.csv_row();
    std::cout << r.name << ": " << format_fixed(r.predicted[0]) << " / "
              << format_fixed(r.predicted[1]) << " / " << format_fixed(r.predicted[2])
              << "  polarity " << (r.polarity ? to_string(*r.polarity) : "none") << "  (n="
              << r.sample_count << ")\n";
    ++written;
  }
  if (written == 0) throw ValidationError("no eligible samples for any requested feature");
  write_file_atomic(fs::path(o.out_dir) / "polarity.csv", csv);
  report_client_stats(h);
  return 0;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateOptions {
  std::string pool;
  std::vector<std::string> known = {"length", "overlap", "semsim", "speculative"};
  int n = 15;
  int m = 90;
  std::uint64_t seed = 0;
  double ridge = 0.0;
  double rank_tolerance = 1e-10;
  std::string out;
  std::size_t random_subset_size = 0;  // 0: use --known as given
  std::size_t subset_count = 2;
};

inline fs::path numbered_path(const fs::path& base, std::size_t i) {
  fs::path out = base;
  out.replace_filename(base.stem().string() + "-" + std::to_string(i) + base.extension().string());
  return out;
}

inline int cmd_calibrate(const CalibrateOptions& o, const ModelOptions& mo,
                         const DetectorOptions& d, const Provenance& p) {
  if (o.pool.empty()) throw IoError("--pool is required");
  if (o.out.empty()) throw IoError("--out is required");
  auto pool = read_samples_jsonl(o.pool);
  ensure_features(pool, d);
  const TypeSet known = parse_type_list(o.known);
  std::vector<TypeSet> runs = {known};
  if (o.random_subset_size > 0) {
    runs = random_type_subsets(known, o.random_subset_size, o.subset_count, o.seed);
  }
  const ModelHandle h = make_model(mo, d.data_dir);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    CalibrationOptions co;
    co.known_types = runs[i];
    co.n = o.n;
    co.m = o.m;
    co.seed = o.seed;
    co.solver.ridge = o.ridge;
    co.solver.rank_tolerance = o.rank_tolerance;
    CalibrationRun run = calibrate(pool, *h.model, h.mode, co);
    const ordered_json prov = p.to_json();
    for (const auto& [k, v] : prov.items()) run.profile.provenance[k] = v;
    run.profile.provenance["pool"] = o.pool;
    run.profile.provenance["pool_hash"] = sha256_hex(read_text_file(o.pool));
    const fs::path out = runs.size() == 1 ? fs::path(o.out) : numbered_path(o.out, i + 1);
    write_json(out, run.profile.to_json());
    std::cout << out.string() << ": known " << join_ids(runs[i]) << ", lambdas";
    for (const auto& [t, l] : run.profile.lambdas) std::cout << " " << to_string(t) << "=" << l;
    const auto& dg = run.profile.diagnostics;
    std::cout << ", residual " << dg.residual_norm << ", groups " << dg.group_count
              << (dg.rank_deficient ? ", RANK DEFICIENT (minimum-norm solution)" : "") << "\n";
  }
  report_client_stats(h);
  return 0;
}

// ---------------------------------------------------------------------------
// debias

struct DebiasOptions {
  std::string dataset;
  std::string profile;             // empty: vanilla predictions
  std::string features = "detect";  // detect | annotated
  std::string method;              // defaults to vanilla / cmbe-<k>
  std::string out;
};

inline int cmd_debias(const DebiasOptions& o, const ModelOptions& mo, const DetectorOptions& d,
                      const Provenance& p) {
  if (o.dataset.empty()) throw IoError("--dataset is required");
  if (o.out.empty()) throw IoError("--out is required");
  const auto samples = read_samples_jsonl(o.dataset);
  if (samples.empty()) throw ValidationError("dataset '" + o.dataset + "' is empty");

  CalibrationProfile profile = CalibrationProfile::zero(TypeSet{});
  std::string method = "vanilla";
  if (!o.profile.empty()) {
    try {
      profile = CalibrationProfile::from_json(json::parse(read_text_file(o.profile)));
    } catch (const json::exception& e) {
      throw IoError("bad calibration profile '" + o.profile + "': " + e.what());
    }
    method = "cmbe-" + std::to_string(profile.known_types.size());
  }
  if (!o.method.empty()) method = o.method;

  std::vector<FeatureSet> detected(samples.size());
  if (o.features == "detect") {
    const Detector det = d.make_detector();
    for (std::size_t i = 0; i < samples.size(); ++i) detected[i] = det.detect(samples[i]);
  } else if (o.features == "annotated") {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      detected[i] = detail::features_or_throw(samples[i]);
    }
  } else {
    throw ValidationError("--features must be 'detect' or 'annotated'");
  }

  const ModelHandle h = make_model(mo, d.data_dir);
  const auto preds = predict_all(*h.model, samples, h.mode);

  ordered_json prov = p.to_json();
  prov["dataset"] = fs::path(o.dataset).stem().string();
  prov["dataset_hash"] = sha256_hex(read_text_file(o.dataset));
  prov["model"] = h.model->model_id();
  prov["prompt_mode"] = h.mode.name();
  if (!o.profile.empty()) prov["profile_hash"] = sha256_hex(read_text_file(o.profile));

  std::string text;
  std::size_t no_known = 0, with_ignored = 0;
  std::map<std::string, std::size_t> ignored_counts;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const DebiasResult r = debias(preds[i], detected[i], profile);
    if (r.used.empty()) ++no_known;
    if (!r.ignored.empty()) ++with_ignored;
    for (BiasFeature f : r.ignored.items()) ++ignored_counts[std::string(to_string(f))];
    ordered_json j;
    j["id"] = samples[i].id;
    if (samples[i].gold) j["gold"] = std::string(to_string(*samples[i].gold));
    j["raw"] = preds[i];
    j["features"] = feature_ids_json(detected[i]);
    j["used"] = feature_ids_json(r.used);
    j["ignored"] = feature_ids_json(r.ignored);
    j["score"] = r.score;
    j["probs"] = report_probabilities(r.score);
    j["predicted"] = std::string(to_string(r.label));
    j["method"] = method;
    j["provenance"] = prov;
    text += j.dump() + "\n";
  }
  write_file_atomic(o.out, text);

  ordered_json cov;
  cov["samples"] = samples.size();
  cov["without_known_features"] = no_known;
  cov["with_ignored_features"] = with_ignored;
  cov["ignored_feature_counts"] = ignored_counts;
  cov["method"] = method;
  cov["provenance"] = prov;
  write_json(o.out + ".coverage.json", cov);
  note("wrote " + std::to_string(samples.size()) + " predictions (" + method + ") to " + o.out +
       "; " + std::to_string(no_known) + " without known features");
  report_client_stats(h);
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::vector<std::string> predictions;
  std::string dataset;  // optional gold source
  std::string method;   // overrides the method recorded in a single file
  bool compare = false;
  bool average = false;
  std::string out_json;
  std::string out_csv;
  std::string out_table;
};

struct PredictionFile {
  std::map<std::string, Label> labels;
  std::vector<NLISample> gold;  // from the records' gold fields
  std::string method;
  std::string dataset;
  ordered_json provenance;
};

inline PredictionFile read_predictions(const std::string& path) {
  PredictionFile f;
  for_each_jsonl(path, [&](std::size_t, const json& j) {
    const std::string id = j.at("id").get<std::string>();
    if (!f.labels.emplace(id, j.at("predicted").get<Label>()).second) {
      throw ValidationError("duplicate prediction id '" + id + "'");
    }
    NLISample s;
    s.id = id;
    if (auto it = j.find("gold"); it != j.end()) s.gold = it->get<Label>();
    if (auto it = j.find("features"); it != j.end()) s.features = feature_set_from_json(*it);
    f.gold.push_back(std::move(s));
    if (f.method.empty()) f.method = j.value("method", "");
    if (auto it = j.find("provenance"); it != j.end() && f.provenance.is_null()) {
      f.provenance = ordered_json(*it);
      f.dataset = it->value("dataset", "");
    }
  });
  if (f.labels.empty()) throw ValidationError("prediction file '" + path + "' is empty");
  return f;
}

inline int cmd_eval(const EvalOptions& o, const Provenance& p) {
  if (o.predictions.empty()) throw IoError("at least one --predictions file is required");
  if (o.method.size() && o.predictions.size() > 1 && !o.average) {
    throw ValidationError("--method applies to a single report");
  }
  std::optional<std::vector<NLISample>> dataset;
  if (!o.dataset.empty()) dataset = read_samples_jsonl(o.dataset);

  std::vector<EvalReport> reports;
  for (const auto& path : o.predictions) {
    const PredictionFile pf = read_predictions(path);
    ordered_json meta;
    meta["method"] = o.method.empty() ? pf.method : o.method;
    meta["dataset"] = pf.dataset;
    meta["model"] = pf.provenance.is_object() ? pf.provenance.value("model", "") : "";
    meta["mode"] = pf.provenance.is_object() ? pf.provenance.value("prompt_mode", "") : "";
    meta["seed"] = pf.provenance.is_object() ? pf.provenance.value("seed", 0) : 0;
    meta["source"] = path;
    reports.push_back(evaluate(dataset ? *dataset : pf.gold, pf.labels, meta));
  }
  if (o.average) reports = {average_reports(reports)};

  ordered_json out;
  auto arr = ordered_json::array();
  std::string csv;
  for (const auto& r : reports) {
    arr.push_back(r.to_json());
    const std::string c = r.to_csv();
    csv += csv.empty() ? c : c.substr(c.find('\n') + 1);
    std::cout << (r.meta("method").empty() ? "run" : r.meta("method")) << ": accuracy "
              << format_fixed(r.accuracy, 1) << "%, error rates E/N/C "
              << format_fixed(r.error_rate[0], 1) << " / " << format_fixed(r.error_rate[1], 1)
              << " / " << format_fixed(r.error_rate[2], 1) << " (n=" << r.total << ")\n";
  }
  out["reports"] = arr;
  if (o.compare) {
    const ComparisonTable t = compare_runs(reports);
    std::cout << t.to_text();
    if (!o.out_table.empty()) write_file_atomic(o.out_table, t.to_text());
    out["comparison_csv"] = t.to_csv();
  }
  out["provenance"] = p.to_json();
  if (!o.out_json.empty()) write_json(o.out_json, out);
  if (!o.out_csv.empty()) write_file_atomic(o.out_csv, csv);
  return 0;
}

}  // namespace mbias::cli
