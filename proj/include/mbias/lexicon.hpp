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

#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "mbias/error.hpp"
#include "mbias/text.hpp"

namespace mbias {

struct WordListEntry {
  std::string text;
  std::size_t line = 0;
};

/// Reads a UTF-8 word list: one entry per line, `#` starts a comment,
/// blank lines are skipped. Entries must already be lowercase.
inline std::vector<WordListEntry> load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open word list '" + path.string() + "'");
  std::vector<WordListEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string_view entry = trim(line);
    if (entry.empty()) continue;
    if (to_lower_ascii(entry) != entry) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": entry '" + std::string(entry) +
                            "' must be lowercase");
    }
    out.push_back({std::string(entry), lineno});
  }
  return out;
}

inline const std::set<std::string>& required_speculative_words() {
  static const std::set<std::string> words = {"could", "might",    "probably",
                                              "presumably", "must", "may"};
  return words;
}

/// Female pronouns; only used to keep gender cues out of neutral premises.
inline const std::set<std::string>& female_pronouns() {
  static const std::set<std::string> words = {"she", "her", "hers", "herself"};
  return words;
}

struct Lexicons {
  std::set<std::string> speculative_words;
  std::set<std::string> male_biased_occupations;
  std::set<std::string> female_biased_occupations;
  std::set<std::string> unisex_names;
  std::set<std::string> male_pronouns;

  void validate() const {
    if (speculative_words != required_speculative_words()) {
      throw ValidationError(
          "speculative lexicon must be exactly {could, might, probably, "
          "presumably, must, may}");
    }
    for (const auto& occ : male_biased_occupations) {
      if (female_biased_occupations.count(occ)) {
        throw ValidationError("occupation '" + occ +
                              "' is listed as both male- and female-biased");
      }
    }
    if (male_pronouns.empty()) throw ValidationError("male pronoun list is empty");
    auto check_lower = [](const std::set<std::string>& s, const char* what) {
      for (const auto& w : s) {
        if (to_lower_ascii(w) != w) {
          throw ValidationError(std::string(what) + " entry '" + w +
                                "' must be lowercase");
        }
      }
    };
    check_lower(speculative_words, "speculative");
    check_lower(male_biased_occupations, "male-biased occupation");
    check_lower(female_biased_occupations, "female-biased occupation");
    check_lower(unisex_names, "name");
    check_lower(male_pronouns, "male pronoun");
  }
};

struct LexiconPaths {
  std::filesystem::path speculative_words;
  std::filesystem::path male_biased_occupations;
  std::filesystem::path female_biased_occupations;
  std::filesystem::path unisex_names;
  std::filesystem::path male_pronouns;

  /// The shipped file names under a data directory.
  static LexiconPaths in_directory(const std::filesystem::path& dir) {
    return {dir / "speculative_words.txt", dir / "male_biased_occupations.txt",
            dir / "female_biased_occupations.txt", dir / "unisex_names.txt",
            dir / "male_pronouns.txt"};
  }
};

inline std::set<std::string> to_set(const std::vector<WordListEntry>& entries) {
  std::set<std::string> out;
  for (const auto& e : entries) out.insert(e.text);
  return out;
}

inline Lexicons load_lexicons(const LexiconPaths& paths) {
  Lexicons lex;
  lex.speculative_words = to_set(load_word_list(paths.speculative_words));
  lex.male_biased_occupations = to_set(load_word_list(paths.male_biased_occupations));
  lex.female_biased_occupations = to_set(load_word_list(paths.female_biased_occupations));
  lex.unisex_names = to_set(load_word_list(paths.unisex_names));
  lex.male_pronouns = to_set(load_word_list(paths.male_pronouns));
  lex.validate();
  return lex;
}

}  // namespace mbias
