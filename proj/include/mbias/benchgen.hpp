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

// Multi-bias benchmark construction: sentence templates filled from a
// curated vocabulary, followed by detector-based verification. Every
// emitted sample carries the five entailment-polar features
//   hyp-shorter, overlap-high, semsim-high, speculative, male-male-occupation.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mbias/core.hpp"
#include "mbias/detect.hpp"
#include "mbias/error.hpp"
#include "mbias/io.hpp"
#include "mbias/lexicon.hpp"
#include "mbias/random.hpp"
#include "mbias/text.hpp"

namespace mbias {

inline const FeatureSet& five_bias_targets() {
  static const FeatureSet targets = {BiasFeature::kHypShorter, BiasFeature::kOverlapHigh,
                                     BiasFeature::kSemsimHigh, BiasFeature::kSpeculative,
                                     BiasFeature::kMaleWithMaleOccupation};
  return targets;
}

// ---------------------------------------------------------------------------
// Templates

enum class TemplateForm {
  kNeutral,           // gender never stated in the premise: gold is neutral
  kEntailContradict,  // premise states "He ...": gold follows the phrase pair
};

/// Patterns use the slots {N1} name, {P1} occupation, {S1} speculative word,
/// {V1} premise phrase and {V2} hypothesis phrase.
struct Template {
  std::string_view id;
  TemplateForm form;
  std::string_view premise_pattern;
  std::string_view hypothesis_pattern;
};

inline constexpr std::array<Template, 8> kTemplates = {{
    {"is-a/neutral", TemplateForm::kNeutral, "{N1} is a {P1}, {V1}.", "He {S1} {V2}."},
    {"is-a/he", TemplateForm::kEntailContradict, "{N1} is a {P1}. He {V1}.", "He {S1} {V2}."},
    {"by-trade/neutral", TemplateForm::kNeutral, "{N1}, a {P1} by trade, {V1}.", "He {S1} {V2}."},
    {"by-trade/he", TemplateForm::kEntailContradict, "{N1}, a {P1} by trade. he {V1}.",
     "He {S1} {V2}."},
    {"works-as/neutral", TemplateForm::kNeutral, "{N1} works as a {P1}, {V1}.", "He {S1} {V2}."},
    {"works-as/he", TemplateForm::kEntailContradict, "{N1} works as a {P1}. He {V1}.",
     "He {S1} {V2}."},
    {"recognized/neutral", TemplateForm::kNeutral, "{N1}, recognized as a {P1}, {V1}.",
     "He {S1} {V2}."},
    {"recognized/he", TemplateForm::kEntailContradict, "{N1} is recognized as a {P1}. He {V1}.",
     "He {S1} {V2}."},
}};

inline const Template& template_by_id(std::string_view id) {
  for (const auto& t : kTemplates) {
    if (t.id == id) return t;
  }
  throw ValidationError("unknown template '" + std::string(id) + "'");
}

struct VerbPhrasePair {
  std::string premise_phrase;
  std::string hypothesis_phrase;
  Label pair_label = Label::kEntailment;  // entailment or contradiction
};

struct Slots {
  std::string name;
  std::string occupation;
  std::string speculative;
  std::string premise_phrase;
  std::string hypothesis_phrase;
  Label pair_label = Label::kEntailment;
};

inline std::string capitalized(std::string s) {
  if (!s.empty() && static_cast<unsigned char>(s[0]) < 0x80) {
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  }
  return s;
}

namespace detail {

inline std::string fill(std::string_view pattern, const Slots& s) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size();) {
    if (pattern[i] == '{') {
      const auto close = pattern.find('}', i);
      const auto key = pattern.substr(i + 1, close - i - 1);
      const std::string* value = nullptr;
      std::string name;
      if (key == "N1") {
        name = capitalized(s.name);
        value = &name;
      } else if (key == "P1") {
        value = &s.occupation;
      } else if (key == "S1") {
        value = &s.speculative;
      } else if (key == "V1") {
        value = &s.premise_phrase;
      } else if (key == "V2") {
        value = &s.hypothesis_phrase;
      } else {
        throw ValidationError("unknown template slot {" + std::string(key) + "}");
      }
      if (value->empty()) throw ValidationError("missing value for slot {" + std::string(key) + "}");
      out += *value;
      i = close + 1;
    } else {
      out.push_back(pattern[i++]);
    }
  }
  return out;
}

}  // namespace detail

/// Fills a template. Neutral-form templates always yield gold = neutral;
/// the other form copies the phrase pair's label.
inline NLISample instantiate(const Template& tmpl, const Slots& slots) {
  NLISample s;
  s.premise = detail::fill(tmpl.premise_pattern, slots);
  s.hypothesis = detail::fill(tmpl.hypothesis_pattern, slots);
  s.gold = tmpl.form == TemplateForm::kNeutral ? Label::kNeutral : slots.pair_label;
  return s;
}

// ---------------------------------------------------------------------------
// Vocabulary

struct Vocab {
  std::vector<VerbPhrasePair> pairs;
  std::vector<std::string> occupations;  // male-biased, filler for {P1}
  std::vector<std::string> names;        // unisex, filler for {N1}
  std::vector<std::string> speculative;  // filler for {S1}
  Lexicons lexicons;

  std::vector<std::size_t> pair_indices(Label label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (pairs[i].pair_label == label) out.push_back(i);
    }
    return out;
  }
};

struct VocabPaths {
  LexiconPaths lexicons;
  std::filesystem::path verb_pairs;

  static VocabPaths in_directory(const std::filesystem::path& dir) {
    return {LexiconPaths::in_directory(dir), dir / "verb_phrase_pairs.tsv"};
  }
};

/// Expected entry counts; nullopt disables a count check.
struct VocabRequirements {
  std::optional<std::size_t> pairs_per_label = 100;
  std::optional<std::size_t> occupations = 87;
  std::optional<std::size_t> names = 30;
  std::size_t min_phrase_gap = 4;  // premise phrase is more than three words longer
  double overlap_high = 0.8;
};

namespace detail {

inline std::vector<std::string> entries_of(const std::filesystem::path& p) {
  std::vector<std::string> out;
  for (auto& e : load_word_list(p)) out.push_back(std::move(e.text));
  return out;
}

inline void check_count(std::optional<std::size_t> expected, std::size_t found,
                        const std::string& what) {
  if (expected && *expected != found) {
    throw ValidationError("expected " + std::to_string(*expected) + " " + what + ", found " +
                          std::to_string(found));
  }
}

}  // namespace detail

/// Checks one phrase pair against the construction constraints. `where`
/// prefixes error messages.
inline void validate_pair(const VerbPhrasePair& pair, const Lexicons& lex,
                          const VocabRequirements& req, const std::string& where) {
  const auto prem = tokenize(pair.premise_phrase);
  const auto hyp = tokenize(pair.hypothesis_phrase);
  const std::string quoted = " ('" + pair.premise_phrase + "' / '" + pair.hypothesis_phrase + "')";
  if (hyp.empty() || prem.empty()) throw ValidationError(where + ": empty phrase" + quoted);
  if (prem.size() < hyp.size() + req.min_phrase_gap) {
    throw ValidationError(where + ": premise phrase must be at least " +
                          std::to_string(req.min_phrase_gap) +
                          " words longer than the hypothesis phrase, gap is " +
                          std::to_string(static_cast<long>(prem.size()) -
                                         static_cast<long>(hyp.size())) +
                          quoted);
  }
  if (pair.pair_label == Label::kEntailment) {
    for (const auto& t : prem) {
      if (lex.male_pronouns.count(t) || female_pronouns().count(t)) {
        throw ValidationError(where + ": entailment premise phrase is reused by neutral "
                              "templates and must not contain the gendered token '" + t + "'" +
                              quoted);
      }
    }
  }
  Slots probe{"alex", "plumber", "might", pair.premise_phrase, pair.hypothesis_phrase,
              pair.pair_label};
  for (const auto& tmpl : kTemplates) {
    const bool used = tmpl.form == TemplateForm::kEntailContradict ||
                      pair.pair_label == Label::kEntailment;
    if (!used) continue;
    const NLISample s = instantiate(tmpl, probe);
    const double rate = lexical_overlap(s.premise, s.hypothesis);
    if (!(rate > req.overlap_high)) {
      throw ValidationError(where + ": lexical overlap " + std::to_string(rate) +
                            " in template '" + std::string(tmpl.id) + "' is not above " +
                            std::to_string(req.overlap_high) + quoted);
    }
  }
}

/// Reads the TSV of (premise_phrase, hypothesis_phrase, pair_label) rows.
/// `lines`, when given, receives the source line of each row.
inline std::vector<VerbPhrasePair> load_verb_pairs(const std::filesystem::path& path,
                                                   std::vector<std::size_t>* lines = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open verb phrase pairs '" + path.string() + "'");
  std::vector<VerbPhrasePair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, '\t');) cols.push_back(std::string(trim(col)));
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cols.size() != 3) {
      throw ValidationError(where + ": expected 3 tab-separated columns, found " +
                            std::to_string(cols.size()));
    }
    auto label = parse_label(cols[2]);
    if (!label || *label == Label::kNeutral) {
      throw ValidationError(where + ": pair label must be entailment or contradiction, got '" +
                            cols[2] + "'");
    }
    out.push_back({cols[0], cols[1], *label});
    if (lines) lines->push_back(lineno);
  }
  return out;
}

inline Vocab load_vocab(const VocabPaths& paths, const VocabRequirements& req = {}) {
  Vocab v;
  v.lexicons = load_lexicons(paths.lexicons);
  v.occupations = detail::entries_of(paths.lexicons.male_biased_occupations);
  v.names = detail::entries_of(paths.lexicons.unisex_names);
  v.speculative = detail::entries_of(paths.lexicons.speculative_words);
  std::vector<std::size_t> lines;
  v.pairs = load_verb_pairs(paths.verb_pairs, &lines);

  detail::check_count(req.names, v.names.size(), "names");
  detail::check_count(req.occupations, v.occupations.size(), "male-biased occupations");
  if (req.pairs_per_label) {
    for (Label l : {Label::kEntailment, Label::kContradiction}) {
      detail::check_count(req.pairs_per_label, v.pair_indices(l).size(),
                          std::string(to_string(l)) + " verb phrase pairs");
    }
  }
  for (std::size_t i = 0; i < v.pairs.size(); ++i) {
    validate_pair(v.pairs[i], v.lexicons, req,
                  paths.verb_pairs.string() + ":" + std::to_string(lines[i]));
  }
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : v.pairs) {
    if (!seen.emplace(p.premise_phrase, p.hypothesis_phrase).second) {
      throw ValidationError("duplicate verb phrase pair '" + p.premise_phrase + "'");
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Generation

struct GenConfig {
  std::size_t total = 12000;
  /// Per-label counts in label order; defaults to total/3 each.
  std::optional<std::array<std::size_t, kNumLabels>> per_label;
  std::uint64_t seed = 42;
  int max_attempts = 200;
  std::string id_prefix = "5bias-";

  std::array<std::size_t, kNumLabels> label_counts() const {
    if (per_label) {
      const std::size_t sum = (*per_label)[0] + (*per_label)[1] + (*per_label)[2];
      if (sum != total) throw ValidationError("per-label counts do not sum to total");
      return *per_label;
    }
    if (total % kNumLabels != 0) {
      throw ValidationError("total must be divisible by 3 for balanced labels");
    }
    const std::size_t each = total / kNumLabels;
    return {each, each, each};
  }
};

struct GeneratedSample {
  NLISample sample;
  std::string template_id;
  Slots slots;
};

struct GenerationStats {
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  std::size_t duplicates = 0;
  std::map<BiasFeature, std::size_t> missing_feature_rejections;

  double acceptance_rate() const {
    return attempts == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(attempts);
  }
};

struct Dataset {
  std::vector<GeneratedSample> samples;
  GenerationStats stats;
};

/// Rejection sampling over random template/slot draws. Labels are emitted in
/// round-robin order; every accepted sample carries all five target features
/// and no (premise, hypothesis) pair repeats.
inline Dataset generate(const GenConfig& cfg, const Vocab& vocab, const Detector& detector) {
  const auto counts = cfg.label_counts();
  if (vocab.names.empty()) throw ValidationError("vocabulary has no names");
  if (vocab.occupations.empty()) throw ValidationError("vocabulary has no occupations");
  if (vocab.speculative.empty()) throw ValidationError("vocabulary has no speculative words");
  if (cfg.max_attempts < 1) throw ValidationError("max_attempts must be >= 1");

  const auto entail_pairs = vocab.pair_indices(Label::kEntailment);
  const auto contra_pairs = vocab.pair_indices(Label::kContradiction);
  std::vector<const Template*> neutral_templates, he_templates;
  for (const auto& t : kTemplates) {
    (t.form == TemplateForm::kNeutral ? neutral_templates : he_templates).push_back(&t);
  }

  Rng rng(cfg.seed);
  Dataset out;
  out.samples.reserve(cfg.total);
  std::set<std::pair<std::string, std::string>> seen;
  std::array<std::size_t, kNumLabels> remaining = counts;
  std::size_t cursor = 0;

  while (out.samples.size() < cfg.total) {
    while (remaining[cursor % kNumLabels] == 0) ++cursor;
    const Label target = label_at(cursor % kNumLabels);
    ++cursor;

    const auto& pair_pool = target == Label::kContradiction ? contra_pairs : entail_pairs;
    const auto& tmpl_pool = target == Label::kNeutral ? neutral_templates : he_templates;
    if (pair_pool.empty()) {
      throw ValidationError("vocabulary has no phrase pairs usable for label '" +
                            std::string(to_string(target)) + "'");
    }

    bool accepted = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !accepted; ++attempt) {
      ++out.stats.attempts;
      const Template& tmpl = *tmpl_pool[rng.index(tmpl_pool.size())];
      const VerbPhrasePair& pair = vocab.pairs[pair_pool[rng.index(pair_pool.size())]];
      Slots slots{vocab.names[rng.index(vocab.names.size())],
                  vocab.occupations[rng.index(vocab.occupations.size())],
                  vocab.speculative[rng.index(vocab.speculative.size())],
                  pair.premise_phrase,
                  pair.hypothesis_phrase,
                  pair.pair_label};
      NLISample s = instantiate(tmpl, slots);
      if (seen.count({s.premise, s.hypothesis})) {
        ++out.stats.duplicates;
        continue;
      }
      const FeatureSet found = detector.detect(s);
      bool ok = true;
      for (BiasFeature f : five_bias_targets().items()) {
        if (!found.contains(f)) {
          ++out.stats.missing_feature_rejections[f];
          ok = false;
        }
      }
      if (!ok) continue;
      seen.emplace(s.premise, s.hypothesis);
      std::ostringstream id;
      id << cfg.id_prefix << std::setw(5) << std::setfill('0') << out.samples.size() + 1;
      s.id = id.str();
      s.features = found;
      out.samples.push_back({std::move(s), std::string(tmpl.id), std::move(slots)});
      ++out.stats.accepted;
      --remaining[index_of(target)];
      accepted = true;
    }
    if (!accepted) {
      std::ostringstream msg;
      msg << "rejection budget of " << cfg.max_attempts << " attempts exhausted for a '"
          << to_string(target) << "' sample after " << out.samples.size()
          << " accepted; acceptance rate " << std::fixed << std::setprecision(2)
          << 100.0 * out.stats.acceptance_rate() << "%";
      throw ValidationError(msg.str());
    }
  }
  return out;
}

inline ordered_json dataset_record_json(const GeneratedSample& g, const ordered_json& provenance) {
  ordered_json j = sample_to_json(g.sample);
  j["template_id"] = g.template_id;
  j["slots"] = {{"name", g.slots.name},
                {"occupation", g.slots.occupation},
                {"speculative", g.slots.speculative},
                {"premise_phrase", g.slots.premise_phrase},
                {"hypothesis_phrase", g.slots.hypothesis_phrase},
                {"pair_label", std::string(to_string(g.slots.pair_label))}};
  if (!provenance.is_null()) j["provenance"] = provenance;
  return j;
}

inline std::string dataset_to_jsonl(const Dataset& d, const ordered_json& provenance = {}) {
  std::string out;
  for (const auto& g : d.samples) {
    out += dataset_record_json(g, provenance).dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Verification

struct VerifyFailure {
  std::string id;
  FeatureSet missing;
};

struct VerifyReport {
  std::size_t total = 0;
  std::map<BiasFeature, std::size_t> feature_pass;
  std::array<std::size_t, kNumLabels> label_counts{};
  std::size_t unlabeled = 0;
  std::size_t duplicates = 0;
  std::vector<VerifyFailure> failures;

  bool all_pass() const { return failures.empty() && duplicates == 0; }

  ordered_json to_json() const {
    ordered_json j;
    j["total"] = total;
    ordered_json fp;
    for (BiasFeature f : five_bias_targets().items()) {
      auto it = feature_pass.find(f);
      fp[std::string(to_string(f))] = it == feature_pass.end() ? 0 : it->second;
    }
    j["feature_pass"] = fp;
    ordered_json lc;
    for (Label l : kAllLabels) lc[std::string(to_string(l))] = label_counts[index_of(l)];
    j["label_counts"] = lc;
    j["unlabeled"] = unlabeled;
    j["duplicates"] = duplicates;
    auto fails = ordered_json::array();
    for (const auto& f : failures) {
      fails.push_back({{"id", f.id}, {"missing", join_ids(f.missing)}});
    }
    j["failures"] = fails;
    j["all_pass"] = all_pass();
    return j;
  }
};

/// Re-runs detection on every sample. Detection fans out over `threads`
/// workers; aggregation is sequential so the report is deterministic.
inline VerifyReport verify_dataset(const std::vector<NLISample>& samples,
                                   const Detector& detector, unsigned threads = 0) {
  VerifyReport r;
  r.total = samples.size();
  for (BiasFeature f : five_bias_targets().items()) r.feature_pass[f] = 0;
  if (samples.empty()) return r;

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, samples.size()));
  std::vector<FeatureSet> detected(samples.size());
  {
    std::vector<std::jthread> workers;
    for (unsigned w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t i = w; i < samples.size(); i += threads) {
          detected[i] = detector.detect(samples[i]);
        }
      });
    }
  }

  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.gold) {
      ++r.label_counts[index_of(*s.gold)];
    } else {
      ++r.unlabeled;
    }
    if (!seen.emplace(s.premise, s.hypothesis).second) ++r.duplicates;
    FeatureSet missing;
    for (BiasFeature f : five_bias_targets().items()) {
      if (detected[i].contains(f)) {
        ++r.feature_pass[f];
      } else {
        missing.insert(f);
      }
    }
    if (!missing.empty()) r.failures.push_back({s.id, missing});
  }
  return r;
}

}  // namespace mbias
