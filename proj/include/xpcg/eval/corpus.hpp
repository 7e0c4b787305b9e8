#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "xpcg/labels.hpp"
#include "xpcg/level.hpp"

namespace xpcg::eval {

inline constexpr int kCorpusHeight = 14;
inline constexpr int kGroundRow = 12;  // rows 12 and 13 are ground

/// Built-in rule names.
const std::vector<std::string>& pattern_rules();

struct PatternCount {
  std::string pattern;
  int count = 0;
  bool operator==(const PatternCount&) const = default;
};

struct CorpusSpec {
  int levels = 20;
  int width = 200;
  std::vector<PatternCount> patterns;  // total instances across the corpus
  double distractor_density = 0.35;    // chance per free column to start a distractor

  /// 20 levels of 14x200, 40 each of staircase, gap and enemy-pair.
  static CorpusSpec default_spec();
  /// Throws InvalidSpec.
  void validate() const;
  nlohmann::json to_json() const;
  static CorpusSpec from_json(const nlohmann::json& j);
  bool operator==(const CorpusSpec&) const = default;
};

struct Corpus {
  CorpusSpec spec;
  std::uint64_t seed = 0;
  std::vector<Level> levels;
  std::vector<PatternAnnotation> annotations;  // oracle ground truth, origin hand
  std::vector<std::string> labels;             // from vocabulary.json when loaded

  /// `labels` when set, else the pattern names in spec order.
  LabelVocabulary vocabulary() const;

  /// Writes levels/<id>.lvl, annotations.json, vocabulary.json and spec.json
  /// under `dir`. load() also accepts a directory without spec.json.
  void save(const std::string& dir) const;
  static Corpus load(const std::string& dir);
};

/// Deterministic levels with rule-built pattern instances plus distractor
/// structure that does not itself satisfy any requested rule. Throws
/// InvalidSpec, including when a level cannot fit its share of instances.
Corpus make_synthetic_corpus(const CorpusSpec& spec, std::uint64_t seed);

/// Re-checks that the annotated rectangle holds an instance of its rule.
bool rule_holds(const LevelGrid& grid, const PatternAnnotation& annotation);

}  // namespace xpcg::eval
