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

#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

using namespace mbias;
using namespace mbias::cli;

void add_detector_options(CLI::App* app, DetectorOptions& d) {
  app->add_option("--data-dir", d.data_dir, "Directory with lexicons and phrase pairs")
      ->capture_default_str();
  app->add_option("--scorer", d.scorer, "Similarity scorer: token-f1 or embedding")
      ->capture_default_str();
  app->add_option("--semsim-high", d.semsim_high, "High semantic-similarity threshold");
  app->add_option("--semsim-low", d.semsim_low, "Low semantic-similarity threshold");
  app->add_option("--length-gap", d.length_gap, "Word gap for the length features")
      ->capture_default_str();
  app->add_option("--overlap-high", d.overlap_high)->capture_default_str();
  app->add_option("--overlap-low", d.overlap_low)->capture_default_str();
  app->add_option("--embed-url", d.embed_url, "Embedding service base URL");
  app->add_option("--embed-model", d.embed_model);
  app->add_option("--embed-key-env", d.embed_key_env, "Env var holding the embedding token");
  app->add_flag("--embed-bertscore-scale", d.embed_bertscore_scale,
                "Embedding scores share the BERTScore scale");
}

void add_model_options(CLI::App* app, ModelOptions& m) {
  app->add_option("--backend", m.backend, "oracle or chat")->capture_default_str();
  app->add_option("--oracle-profile", m.oracle_profile, "Synthetic oracle profile (JSON)");
  app->add_option("--base-url", m.base_url, "Chat-completions base URL")->capture_default_str();
  app->add_option("--model", m.model, "Model name sent to the endpoint");
  app->add_option("--api-key-env", m.api_key_env, "Env var holding the API token")
      ->capture_default_str();
  app->add_option("--strategy", m.strategy, "logprob or sample-k")->capture_default_str();
  app->add_option("--k", m.k, "Samples per item for sample-k")->capture_default_str();
  app->add_option("--timeout-ms", m.timeout_ms)->capture_default_str();
  app->add_option("--max-parallel", m.max_parallel)->capture_default_str();
  app->add_option("--min-interval-ms", m.min_interval_ms, "Minimum spacing between requests")
      ->capture_default_str();
  app->add_option("--retries", m.retries)->capture_default_str();
  app->add_option("--cache", m.cache, "Replay cache file");
  app->add_flag("--offline", m.offline, "Serve predictions from the cache only");
  app->add_option("--run-seed", m.run_seed, "Decoding seed for sample-k")->capture_default_str();
  app->add_option("--instruction-file", m.instruction_file);
  app->add_option("--prompt", m.prompt, "zero-shot or few-shot")->capture_default_str();
  app->add_option("--demo-pool", m.demo_pool, "Labeled JSONL to draw demonstrations from");
  app->add_option("--demo-seed", m.demo_seed)->capture_default_str();
}

/// Hash of the settings that determine results. Output locations and
/// transport knobs (cache, offline replay, pacing, retries) are left out so
/// an offline replay carries the same hash as the original run.
std::string config_hash(const CLI::App* sub) {
  static const std::set<std::string> excluded = {
      "out",   "report",  "out-dir",      "out-json",        "out-csv", "out-table",
      "cache", "config",  "offline",      "max-parallel",    "retries", "timeout-ms",
      "min-interval-ms"};
  std::istringstream in(sub->config_to_str(true, false));
  std::string line, kept;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    std::string key = eq == std::string::npos ? line : std::string(trim(line.substr(0, eq)));
    if (excluded.count(key)) continue;
    kept += line + "\n";
  }
  return sha256_hex(kept).substr(0, 16);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-bias NLI benchmark generation, bias probing and calibration"};
  app.set_config("--config", "", "TOML configuration file; flags override it");
  app.require_subcommand(1);
  app.add_flag("-q,--quiet", g_quiet, "Suppress progress messages");

  DetectorOptions det;
  ModelOptions mdl;

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Generate the five-bias dataset or a placeholder pool");
  g->add_option("--out", gen.out, "Output JSONL")->required();
  g->add_option("--report", gen.report, "Verification report (default <out>.verify.json)");
  g->add_option("--total", gen.total)->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--max-attempts", gen.max_attempts)->capture_default_str();
  g->add_option("--id-prefix", gen.id_prefix)->capture_default_str();
  g->add_flag("--pool", gen.pool, "Emit a feature-annotated placeholder pool instead");
  g->add_option("--pool-types", gen.pool_types)->delimiter(',')->capture_default_str();
  g->add_option("--pool-pure", gen.pool_pure)->capture_default_str();
  g->add_option("--pool-triplets", gen.pool_triplets)->capture_default_str();
  g->add_option("--pool-featureless", gen.pool_featureless)->capture_default_str();
  add_detector_options(g, det);

  ProbeOptions probe;
  auto* p = app.add_subcommand("probe", "Probe label distributions per bias feature");
  p->add_option("--pool", probe.pool, "Labeled JSONL pool")->required();
  p->add_option("--feature", probe.features, "Feature ids or 'all'")
      ->delimiter(',')
      ->capture_default_str();
  p->add_option("--count", probe.count, "Samples per feature")->capture_default_str();
  p->add_flag("--allow-mixed", probe.allow_mixed, "Accept samples carrying other features");
  p->add_option("--seed", probe.seed)->capture_default_str();
  p->add_option("--out-dir", probe.out_dir)->capture_default_str();
  add_model_options(p, mdl);
  add_detector_options(p, det);

  CalibrateOptions cal;
  auto* c = app.add_subcommand("calibrate", "Fit a calibration profile");
  c->add_option("--pool", cal.pool, "Labeled JSONL pool")->required();
  c->add_option("--known", cal.known, "Known bias types")->delimiter(',')->capture_default_str();
  c->add_option("--n", cal.n, "Stage-1 samples per feature")->capture_default_str();
  c->add_option("--m", cal.m, "Stage-2 samples")->capture_default_str();
  c->add_option("--seed", cal.seed)->capture_default_str();
  c->add_option("--ridge", cal.ridge)->capture_default_str();
  c->add_option("--rank-tolerance", cal.rank_tolerance)->capture_default_str();
  c->add_option("--random-subsets", cal.random_subset_size,
                "Fit profiles on random subsets of this size drawn from --known")
      ->capture_default_str();
  c->add_option("--subset-count", cal.subset_count)->capture_default_str();
  c->add_option("--out", cal.out, "Profile JSON")->required();
  add_model_options(c, mdl);
  add_detector_options(c, det);

  DebiasOptions deb;
  auto* d = app.add_subcommand("debias", "Predict with optional calibration");
  d->add_option("--dataset", deb.dataset, "JSONL dataset")->required();
  d->add_option("--profile", deb.profile, "Calibration profile; omit for vanilla");
  d->add_option("--features", deb.features, "detect or annotated")->capture_default_str();
  d->add_option("--method", deb.method, "Method label recorded in the output");
  d->add_option("--out", deb.out, "Predictions JSONL")->required();
  add_model_options(d, mdl);
  add_detector_options(d, det);

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Score prediction files");
  e->add_option("--predictions", ev.predictions, "Prediction JSONL files")->required();
  e->add_option("--dataset", ev.dataset, "Gold labels (default: gold fields of predictions)");
  e->add_option("--method", ev.method);
  e->add_flag("--compare", ev.compare, "Print a comparison table");
  e->add_flag("--average", ev.average, "Average the files as repeated runs");
  e->add_option("--out-json", ev.out_json);
  e->add_option("--out-csv", ev.out_csv);
  e->add_option("--out-table", ev.out_table);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return static_cast<int>(ExitCode::kIo);
  }

  try {
    const CLI::App* sub = app.get_subcommands().front();
    Provenance prov{sub->get_name(), config_hash(sub), 0};
    if (sub == g) {
      prov.seed = gen.seed;
      return cmd_generate(gen, det, prov);
    }
    if (sub == p) {
      prov.seed = probe.seed;
      return cmd_probe(probe, mdl, det, prov);
    }
    if (sub == c) {
      prov.seed = cal.seed;
      return cmd_calibrate(cal, mdl, det, prov);
    }
    if (sub == d) {
      prov.seed = mdl.run_seed;
      return cmd_debias(deb, mdl, det, prov);
    }
    return cmd_eval(ev, prov);
  } catch (const mbias::Error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return static_cast<int>(ex.code());
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return static_cast<int>(ExitCode::kIo);
  }
}
