#include <algorithm>
#include <set>

#include "xpcg/error.hpp"
#include "xpcg/hash.hpp"
#include "xpcg/labels.hpp"
#include "xpcg/rng.hpp"

namespace xpcg {

LabelVocabulary::LabelVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw validation_error("InvalidVocabulary", "label names must be non-empty");
    if (n == "none") throw validation_error("InvalidVocabulary", "\"none\" is reserved");
    if (!seen.insert(n).second) throw validation_error("InvalidVocabulary", "duplicate label '" + n + "'");
  }
}

std::optional<int> LabelVocabulary::find(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<int>(it - names_.begin());
}

int LabelVocabulary::index_of(const std::string& name) const {
  if (auto i = find(name)) return *i;
  throw validation_error("UnknownLabel", "label '" + name + "' is not in the vocabulary");
}

std::string LabelVocabulary::name_of(int index) const {
  if (index == none_index()) return "none";
  return names_.at(static_cast<std::size_t>(index));
}

std::uint64_t LabelVocabulary::hash() const {
  std::uint64_t h = fnv1a64("xpcg-vocabulary-v1\n");
  for (const auto& n : names_) {
    h = fnv1a64(n, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

nlohmann::json LabelVocabulary::to_json() const { return {{"labels", names_}}; }

LabelVocabulary LabelVocabulary::from_json(const nlohmann::json& j) {
  if (j.is_array()) return LabelVocabulary(j.get<std::vector<std::string>>());
  return LabelVocabulary(j.at("labels").get<std::vector<std::string>>());
}

nlohmann::json annotations_to_json(const std::vector<PatternAnnotation>& annotations) {
  auto out = nlohmann::json::array();
  for (const auto& a : annotations) {
    nlohmann::json item = {{"level", a.level_id}, {"x", a.x}, {"y", a.y},
                           {"w", a.w},            {"h", a.h}, {"label", a.label}};
    if (a.origin == AnnotationOrigin::Auto) item["origin"] = "auto";
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<PatternAnnotation> annotations_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw validation_error("InvalidAnnotations", "annotations must be a JSON list");
  std::vector<PatternAnnotation> out;
  for (const auto& item : j) {
    PatternAnnotation a;
    try {
      a.level_id = item.at("level").get<std::string>();
      a.x = item.at("x").get<int>();
      a.y = item.at("y").get<int>();
      a.w = item.at("w").get<int>();
      a.h = item.at("h").get<int>();
      a.label = item.at("label").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw validation_error("InvalidAnnotations", e.what());
    }
    if (a.w < 1 || a.h < 1) throw validation_error("InvalidAnnotations", "annotation w and h must be >= 1");
    const auto origin = item.value("origin", std::string("hand"));
    if (origin != "hand" && origin != "auto") throw validation_error("InvalidAnnotations", "origin must be hand or auto");
    a.origin = origin == "auto" ? AnnotationOrigin::Auto : AnnotationOrigin::Hand;
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<int> window_origins(int start, int length, int extent) {
  const int max_origin = extent - kChunkSize;
  auto clamp = [&](int v) { return std::clamp(v, 0, max_origin); };
  std::vector<int> out;
  if (length <= kChunkSize) {
    out.push_back(clamp(start + length / 2 - kChunkSize / 2));
    return out;
  }
  const int end = start + length;
  int pos = start;
  for (; pos + kChunkSize <= end; pos += kChunkSize) out.push_back(clamp(pos));
  if (pos < end) out.push_back(clamp(end - kChunkSize));
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<LabeledChunk> annotation_to_examples(const PatternAnnotation& annotation,
                                                 const LevelGrid& grid,
                                                 const LabelVocabulary& vocabulary) {
  if (!annotation.fits(grid)) {
    throw validation_error("AnnotationOutOfBounds", "annotation rectangle lies outside level " + annotation.level_id);
  }
  const int label = vocabulary.index_of(annotation.label);
  std::vector<LabeledChunk> out;
  for (int y : window_origins(annotation.y, annotation.h, grid.height())) {
    for (int x : window_origins(annotation.x, annotation.w, grid.width())) {
      LabeledChunk lc{encode_chunk(grid, x, y), label};
      lc.chunk.origin = ChunkOrigin{annotation.level_id, x, y};
      out.push_back(std::move(lc));
    }
  }
  return out;
}

const Level* find_level(const std::vector<Level>& levels, const std::string& id) {
  for (const auto& l : levels) {
    if (l.id == id) return &l;
  }
  return nullptr;
}

std::vector<LabeledChunk> annotations_to_examples(const std::vector<PatternAnnotation>& annotations,
                                                  const std::vector<Level>& levels,
                                                  const LabelVocabulary& vocabulary) {
  std::vector<LabeledChunk> out;
  for (const auto& a : annotations) {
    const Level* level = find_level(levels, a.level_id);
    if (level == nullptr) continue;
    auto chunks = annotation_to_examples(a, level->grid, vocabulary);
    std::move(chunks.begin(), chunks.end(), std::back_inserter(out));
  }
  return out;
}

NegativeSample sample_negatives(const std::vector<Level>& levels,
                                const std::vector<PatternAnnotation>& annotations, int count,
                                std::uint64_t seed, int none_index) {
  NegativeSample result;
  if (count <= 0) return result;

  struct Candidate {
    std::size_t level;
    int x;
    int y;
  };
  std::vector<Candidate> candidates;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    const auto& level = levels[li];
    std::vector<const PatternAnnotation*> mine;
    for (const auto& a : annotations) {
      if (a.level_id == level.id) mine.push_back(&a);
    }
    for (int y = 0; y + kChunkSize <= level.grid.height(); ++y) {
      for (int x = 0; x + kChunkSize <= level.grid.width(); ++x) {
        const bool clear = std::none_of(mine.begin(), mine.end(), [&](const PatternAnnotation* a) {
          return a->overlaps(x, y, kChunkSize, kChunkSize);
        });
        if (clear) candidates.push_back({li, x, y});
      }
    }
  }

  Rng rng(seed);
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(count), candidates.size());
  result.short_supply = take < static_cast<std::size_t>(count);
  // Partial Fisher-Yates: the first `take` slots become the sample.
  for (std::size_t i = 0; i < take; ++i) {
    std::swap(candidates[i], candidates[i + rng.below(candidates.size() - i)]);
    const auto& c = candidates[i];
    LabeledChunk lc{encode_chunk(levels[c.level].grid, c.x, c.y), none_index};
    lc.chunk.origin = ChunkOrigin{levels[c.level].id, c.x, c.y};
    result.examples.push_back(std::move(lc));
  }
  return result;
}

int default_negative_count(const std::vector<LabeledChunk>& positives, int n_labels) {
  if (n_labels <= 0) return 0;
  std::vector<int> counts(static_cast<std::size_t>(n_labels), 0);
  for (const auto& p : positives) {
    if (p.label_index >= 0 && p.label_index < n_labels) ++counts[static_cast<std::size_t>(p.label_index)];
  }
  int used = 0;
  int total = 0;
  for (int c : counts) {
    if (c > 0) {
      ++used;
      total += c;
    }
  }
  return used == 0 ? 0 : (total + used - 1) / used;
}

}  // namespace xpcg
