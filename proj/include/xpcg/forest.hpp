#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "xpcg/labels.hpp"

namespace xpcg::forest {

struct ForestConfig {
  int forest_size = 100;
  int max_depth = 100;          // nodes on any root-to-leaf path
  int features_per_split = 44;  // ceil(sqrt(1920))
  int min_samples_split = 2;
  double max_replace_fraction = 0.2;
  std::uint64_t seed = 0;
};

/// Binary-feature decision tree. Internal nodes route feature==0 to `absent`
/// and feature==1 to `present`; leaves keep their class histogram.
class DecisionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    int absent = -1;
    int present = -1;
    std::vector<std::uint32_t> counts;  // leaves only, length n+1
  };

  DecisionTree() = default;
  DecisionTree(std::vector<Node> nodes, std::uint64_t id) : nodes_(std::move(nodes)), id_(id) {}

  /// The class this tree votes for: leaf majority, ties toward none and then
  /// the lowest label index.
  int vote(const Chunk& chunk) const;
  const Node& leaf_for(const Chunk& chunk) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  std::uint64_t id() const { return id_; }
  /// Longest root-to-leaf path, counted in nodes.
  int depth() const;

 private:
  std::vector<Node> nodes_;
  std::uint64_t id_ = 0;
};

struct Prediction {
  int label_index = 0;
  std::vector<int> votes;  // per class, length n+1, sums to forest size
};

class ForestModel {
 public:
  ForestModel() = default;
  ForestModel(ForestConfig config, LabelVocabulary vocabulary, std::vector<DecisionTree> trees,
              int generation = 0)
      : config_(config), vocabulary_(std::move(vocabulary)), trees_(std::move(trees)),
        generation_(generation) {}

  const ForestConfig& config() const { return config_; }
  const LabelVocabulary& vocabulary() const { return vocabulary_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }
  int classes() const { return vocabulary_.size() + 1; }
  int generation() const { return generation_; }
  bool trained() const { return !trees_.empty(); }

  Prediction predict(const Chunk& chunk) const;

  nlohmann::json to_json() const;
  /// Rejects files whose stored vocabulary hash disagrees with their
  /// vocabulary, or with `expected` when given.
  static ForestModel from_json(const nlohmann::json& j, const LabelVocabulary* expected = nullptr);
  void save(const std::string& path) const;
  static ForestModel load(const std::string& path, const LabelVocabulary* expected = nullptr);

 private:
  ForestConfig config_;
  LabelVocabulary vocabulary_;
  std::vector<DecisionTree> trees_;
  int generation_ = 0;
};

/// Majority-vote winner with ties broken toward none, then the lowest index.
int majority(const std::vector<int>& votes, int none_index);

/// Grows one tree on the given sample (indices into `examples`, duplicates
/// allowed) with Gini splits over `features_per_split` sampled features.
DecisionTree grow_tree(const std::vector<LabeledChunk>& examples, const std::vector<std::size_t>& sample,
                       int classes, const ForestConfig& config, std::uint64_t tree_seed);

/// Bagged forest of config.forest_size trees. Throws InsufficientData (fewer
/// than two examples) or SingleClass.
ForestModel fit(const std::vector<LabeledChunk>& examples, const LabelVocabulary& vocabulary,
                const ForestConfig& config);

struct UpdateResult {
  ForestModel model;
  bool unchanged = false;
  std::vector<int> replaced;  // tree slots regrown
};

/// Deletes up to ceil(max_replace_fraction * forest_size) trees that
/// misclassify the most new examples and regrows them on bootstraps of
/// all_examples + new_examples. A forest that already classifies every new
/// example correctly is returned unchanged.
UpdateResult incremental_update(const ForestModel& model, const std::vector<LabeledChunk>& new_examples,
                                const std::vector<LabeledChunk>& all_examples,
                                double max_replace_fraction = 0.2);

/// Slides an 8x8 window with `stride` over each level and emits auto-origin
/// annotations for windows predicted as a pattern. Same-label boxes whose
/// intersection covers at least half of either box are merged.
std::vector<PatternAnnotation> autolabel(const ForestModel& model, const std::vector<Level>& levels,
                                         int stride = 2);

double training_accuracy(const ForestModel& model, const std::vector<LabeledChunk>& examples);

}  // namespace xpcg::forest
