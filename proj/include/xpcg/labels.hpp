#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xpcg/chunk.hpp"

namespace xpcg {

/// Ordered, duplicate-free list of the designer's pattern names. Index i of
/// any label vector means names()[i]; index size() is the reserved "none".
class LabelVocabulary {
 public:
  LabelVocabulary() = default;
  explicit LabelVocabulary(std::vector<std::string> names);

  const std::vector<std::string>& names() const { return names_; }
  int size() const { return static_cast<int>(names_.size()); }
  int none_index() const { return size(); }

  std::optional<int> find(const std::string& name) const;
  /// Index of `name`; throws UnknownLabel.
  int index_of(const std::string& name) const;
  /// Name for an index in [0, size()]; size() maps to "none".
  std::string name_of(int index) const;

  std::uint64_t hash() const;

  nlohmann::json to_json() const;
  static LabelVocabulary from_json(const nlohmann::json& j);

  bool operator==(const LabelVocabulary&) const = default;

 private:
  std::vector<std::string> names_;
};

enum class AnnotationOrigin { Hand, Auto };

/// Tile rectangle over a level marking one occurrence of a pattern.
struct PatternAnnotation {
  std::string level_id;
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;
  std::string label;
  AnnotationOrigin origin = AnnotationOrigin::Hand;

  bool fits(const LevelGrid& grid) const {
    return w >= 1 && h >= 1 && x >= 0 && y >= 0 && x + w <= grid.width() && y + h <= grid.height();
  }
  bool overlaps(int ox, int oy, int ow, int oh) const {
    return x < ox + ow && ox < x + w && y < oy + oh && oy < y + h;
  }

  bool operator==(const PatternAnnotation&) const = default;
};

nlohmann::json annotations_to_json(const std::vector<PatternAnnotation>& annotations);
std::vector<PatternAnnotation> annotations_from_json(const nlohmann::json& j);

struct LabeledChunk {
  Chunk chunk;
  int label_index = 0;  // [0, n); n is none
};

/// Window origins covering one axis of a rectangle: a single centered window
/// when `length` <= 8, else stride-8 tiling plus a final edge window flush with
/// the rectangle's end. Each origin is clamped to [0, extent - 8].
std::vector<int> window_origins(int start, int length, int extent);

/// Converts one rectangle annotation into training chunks carrying its label.
std::vector<LabeledChunk> annotation_to_examples(const PatternAnnotation& annotation,
                                                 const LevelGrid& grid,
                                                 const LabelVocabulary& vocabulary);

/// Converts all annotations whose level is present in `levels`.
std::vector<LabeledChunk> annotations_to_examples(const std::vector<PatternAnnotation>& annotations,
                                                  const std::vector<Level>& levels,
                                                  const LabelVocabulary& vocabulary);

struct NegativeSample {
  std::vector<LabeledChunk> examples;
  bool short_supply = false;  // fewer than requested windows were available
};

/// Draws `count` distinct windows that overlap no annotation, labeled none.
NegativeSample sample_negatives(const std::vector<Level>& levels,
                                const std::vector<PatternAnnotation>& annotations,
                                int count, std::uint64_t seed, int none_index);

/// Mean number of examples per pattern label; the default negative count.
int default_negative_count(const std::vector<LabeledChunk>& positives, int n_labels);

const Level* find_level(const std::vector<Level>& levels, const std::string& id);

}  // namespace xpcg
