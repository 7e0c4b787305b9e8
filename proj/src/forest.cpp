#include "xpcg/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "xpcg/error.hpp"
#include "xpcg/hash.hpp"
#include "xpcg/rng.hpp"

namespace xpcg::forest {
namespace {

double gini(const std::vector<std::uint32_t>& counts, std::uint32_t total) {
  if (total == 0) return 0.0;
  double sum_sq = 0.0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / total;
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

std::uint64_t tree_seed(std::uint64_t master, int generation, int slot) {
  return Rng::derive(Rng::derive(master, static_cast<std::uint64_t>(generation)), static_cast<std::uint64_t>(slot));
}

std::vector<std::size_t> bootstrap(std::size_t n, Rng& rng) {
  std::vector<std::size_t> sample(n);
  for (auto& s : sample) s = rng.below(n);
  return sample;
}

void check_examples(const std::vector<LabeledChunk>& examples, int classes) {
  for (const auto& e : examples) {
    if (e.label_index < 0 || e.label_index >= classes) {
      throw validation_error("InvalidLabel", "label index " + std::to_string(e.label_index) + " out of range");
    }
  }
}

}  // namespace

int majority(const std::vector<int>& votes, int none_index) {
  int best = none_index;
  int best_votes = votes[static_cast<std::size_t>(none_index)];
  for (int k = 0; k < static_cast<int>(votes.size()); ++k) {
    if (k == none_index) continue;
    if (votes[static_cast<std::size_t>(k)] > best_votes) {
      best = k;
      best_votes = votes[static_cast<std::size_t>(k)];
    }
  }
  return best;
}

const DecisionTree::Node& DecisionTree::leaf_for(const Chunk& chunk) const {
  const Node* node = &nodes_.front();
  while (node->feature >= 0) {
    node = &nodes_[static_cast<std::size_t>(chunk.bits.test(static_cast<std::size_t>(node->feature)) ? node->present
                                                                                                     : node->absent)];
  }
  return *node;
}

int DecisionTree::vote(const Chunk& chunk) const {
  const auto& counts = leaf_for(chunk).counts;
  std::vector<int> v(counts.begin(), counts.end());
  return majority(v, static_cast<int>(v.size()) - 1);
}

int DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  int deepest = 0;
  std::vector<std::pair<int, int>> stack{{0, 1}};
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.feature >= 0) {
      stack.push_back({n.absent, d + 1});
      stack.push_back({n.present, d + 1});
    }
  }
  return deepest;
}

DecisionTree grow_tree(const std::vector<LabeledChunk>& examples, const std::vector<std::size_t>& sample,
                       int classes, const ForestConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> features(kChunkFeatures);
  std::iota(features.begin(), features.end(), 0);

  struct Work {
    int node;
    std::vector<std::size_t> rows;
    int depth;
  };
  std::vector<DecisionTree::Node> nodes(1);
  std::vector<Work> stack;
  stack.push_back({0, sample, 1});

  const auto n_classes = static_cast<std::size_t>(classes);
  std::vector<std::uint32_t> present_counts(n_classes);

  while (!stack.empty()) {
    Work work = std::move(stack.back());
    stack.pop_back();

    std::vector<std::uint32_t> counts(n_classes, 0);
    for (auto r : work.rows) ++counts[static_cast<std::size_t>(examples[r].label_index)];
    const auto total = static_cast<std::uint32_t>(work.rows.size());
    const double parent_gini = gini(counts, total);

    auto make_leaf = [&] {
      nodes[static_cast<std::size_t>(work.node)].counts = counts;
    };
    if (parent_gini == 0.0 || work.depth >= config.max_depth ||
        static_cast<int>(total) < config.min_samples_split) {
      make_leaf();
      continue;
    }

    // Draw features without replacement until `features_per_split` of them
    // actually vary within this node.
    int best_feature = -1;
    double best_score = 0.0;
    int informative = 0;
    for (int i = 0; i < kChunkFeatures && informative < config.features_per_split; ++i) {
      std::swap(features[static_cast<std::size_t>(i)],
                features[static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(kChunkFeatures - i))]);
      const int f = features[static_cast<std::size_t>(i)];
      std::fill(present_counts.begin(), present_counts.end(), 0u);
      std::uint32_t present = 0;
      for (auto r : work.rows) {
        if (examples[r].chunk.bits.test(static_cast<std::size_t>(f))) {
          ++present_counts[static_cast<std::size_t>(examples[r].label_index)];
          ++present;
        }
      }
      if (present == 0 || present == total) continue;
      ++informative;
      std::vector<std::uint32_t> absent_counts(n_classes);
      for (std::size_t k = 0; k < n_classes; ++k) absent_counts[k] = counts[k] - present_counts[k];
      const double score = (present * gini(present_counts, present) +
                            (total - present) * gini(absent_counts, total - present)) / total;
      if (best_feature < 0 || score < best_score) {
        best_feature = f;
        best_score = score;
      }
    }
    if (best_feature < 0) {
      make_leaf();
      continue;
    }

    std::vector<std::size_t> absent_rows;
    std::vector<std::size_t> present_rows;
    for (auto r : work.rows) {
      (examples[r].chunk.bits.test(static_cast<std::size_t>(best_feature)) ? present_rows : absent_rows).push_back(r);
    }
    const int absent_node = static_cast<int>(nodes.size());
    const int present_node = absent_node + 1;
    nodes.resize(nodes.size() + 2);
    auto& node = nodes[static_cast<std::size_t>(work.node)];
    node.feature = best_feature;
    node.absent = absent_node;
    node.present = present_node;
    stack.push_back({present_node, std::move(present_rows), work.depth + 1});
    stack.push_back({absent_node, std::move(absent_rows), work.depth + 1});
  }
  return DecisionTree(std::move(nodes), seed);
}

Prediction ForestModel::predict(const Chunk& chunk) const {
  if (trees_.empty()) throw Error(ErrorKind::Precondition, "NotTrained", "forest is not trained");
  Prediction p;
  p.votes.assign(static_cast<std::size_t>(classes()), 0);
  for (const auto& t : trees_) ++p.votes[static_cast<std::size_t>(t.vote(chunk))];
  p.label_index = majority(p.votes, vocabulary_.none_index());
  return p;
}

ForestModel fit(const std::vector<LabeledChunk>& examples, const LabelVocabulary& vocabulary,
                const ForestConfig& config) {
  if (examples.size() < 2) throw validation_error("InsufficientData", "need at least two examples");
  const int classes = vocabulary.size() + 1;
  check_examples(examples, classes);
  const bool single = std::all_of(examples.begin(), examples.end(), [&](const LabeledChunk& e) {
    return e.label_index == examples.front().label_index;
  });
  if (single) throw validation_error("SingleClass", "examples span a single class");
  if (config.forest_size < 1 || config.max_depth < 1 || config.features_per_split < 1) {
    throw validation_error("InvalidConfig", "forest size, depth and features per split must be positive");
  }

  std::vector<DecisionTree> trees;
  trees.reserve(static_cast<std::size_t>(config.forest_size));
  for (int t = 0; t < config.forest_size; ++t) {
    const auto seed = tree_seed(config.seed, 0, t);
    Rng rng(seed);
    trees.push_back(grow_tree(examples, bootstrap(examples.size(), rng), classes, config, rng.next()));
  }
  return ForestModel(config, vocabulary, std::move(trees), 0);
}

UpdateResult incremental_update(const ForestModel& model, const std::vector<LabeledChunk>& new_examples,
                                const std::vector<LabeledChunk>& all_examples, double max_replace_fraction) {
  if (!model.trained()) throw Error(ErrorKind::Precondition, "NotTrained", "forest is not trained");
  if (new_examples.empty()) throw validation_error("InsufficientData", "no new examples");
  check_examples(new_examples, model.classes());
  check_examples(all_examples, model.classes());

  const bool all_correct = std::all_of(new_examples.begin(), new_examples.end(), [&](const LabeledChunk& e) {
    return model.predict(e.chunk).label_index == e.label_index;
  });
  if (all_correct) return {model, true, {}};

  const auto& trees = model.trees();
  std::vector<std::pair<int, int>> wrong;  // (misclassified count, slot)
  for (int slot = 0; slot < static_cast<int>(trees.size()); ++slot) {
    int misses = 0;
    for (const auto& e : new_examples) misses += trees[static_cast<std::size_t>(slot)].vote(e.chunk) != e.label_index;
    if (misses > 0) wrong.push_back({misses, slot});
  }
  std::stable_sort(wrong.begin(), wrong.end(), [](auto a, auto b) { return a.first > b.first; });
  const auto cap = static_cast<std::size_t>(std::ceil(max_replace_fraction * model.config().forest_size - 1e-9));
  wrong.resize(std::min(wrong.size(), cap));

  std::vector<LabeledChunk> pool = all_examples;
  pool.insert(pool.end(), new_examples.begin(), new_examples.end());

  const int generation = model.generation() + 1;
  std::vector<DecisionTree> next = trees;
  UpdateResult result;
  for (auto [misses, slot] : wrong) {
    Rng rng(tree_seed(model.config().seed, generation, slot));
    next[static_cast<std::size_t>(slot)] =
        grow_tree(pool, bootstrap(pool.size(), rng), model.classes(), model.config(), rng.next());
    result.replaced.push_back(slot);
  }
  std::sort(result.replaced.begin(), result.replaced.end());
  result.model = ForestModel(model.config(), model.vocabulary(), std::move(next), generation);
  return result;
}

std::vector<PatternAnnotation> autolabel(const ForestModel& model, const std::vector<Level>& levels, int stride) {
  if (stride < 1) throw validation_error("InvalidStride", "stride must be >= 1");
  std::vector<PatternAnnotation> out;
  const auto& vocab = model.vocabulary();
  for (const auto& level : levels) {
    std::map<int, std::vector<PatternAnnotation>> boxes;  // by label, for deterministic order
    for (int y = 0; y + kChunkSize <= level.grid.height(); y += stride) {
      for (int x = 0; x + kChunkSize <= level.grid.width(); x += stride) {
        const int label = model.predict(encode_chunk(level.grid, x, y)).label_index;
        if (label == vocab.none_index()) continue;
        boxes[label].push_back({level.id, x, y, kChunkSize, kChunkSize, vocab.name_of(label), AnnotationOrigin::Auto});
      }
    }
    for (auto& [label, list] : boxes) {
      bool merged = true;
      while (merged) {
        merged = false;
        for (std::size_t i = 0; i < list.size() && !merged; ++i) {
          for (std::size_t j = i + 1; j < list.size() && !merged; ++j) {
            auto& a = list[i];
            const auto& b = list[j];
            const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
            const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
            const int inter = ix * iy;
            if (2 * inter >= a.w * a.h || 2 * inter >= b.w * b.h) {
              const int x0 = std::min(a.x, b.x);
              const int y0 = std::min(a.y, b.y);
              a.w = std::max(a.x + a.w, b.x + b.w) - x0;
              a.h = std::max(a.y + a.h, b.y + b.h) - y0;
              a.x = x0;
              a.y = y0;
              list.erase(list.begin() + static_cast<std::ptrdiff_t>(j));
              merged = true;
            }
          }
        }
      }
      out.insert(out.end(), list.begin(), list.end());
    }
  }
  return out;
}

double training_accuracy(const ForestModel& model, const std::vector<LabeledChunk>& examples) {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& e : examples) correct += model.predict(e.chunk).label_index == e.label_index;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

nlohmann::json ForestModel::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes()) {
      if (n.feature >= 0) {
        nodes.push_back({n.feature, n.absent, n.present});
      } else {
        nlohmann::json leaf = {-1};
        for (auto c : n.counts) leaf.push_back(c);
        nodes.push_back(std::move(leaf));
      }
    }
    trees.push_back({{"id", hex64(t.id())}, {"nodes", std::move(nodes)}});
  }
  return {
      {"format", "xpcg-forest"},
      {"version", 1},
      {"config",
       {{"forest_size", config_.forest_size},
        {"max_depth", config_.max_depth},
        {"features_per_split", config_.features_per_split},
        {"min_samples_split", config_.min_samples_split},
        {"max_replace_fraction", config_.max_replace_fraction},
        {"seed", config_.seed}}},
      {"vocabulary", vocabulary_.names()},
      {"vocabulary_hash", hex64(vocabulary_.hash())},
      {"generation", generation_},
      {"trees", std::move(trees)},
  };
}

ForestModel ForestModel::from_json(const nlohmann::json& j, const LabelVocabulary* expected) {
  if (j.value("format", "") != "xpcg-forest" || j.value("version", 0) != 1) {
    throw validation_error("InvalidModelFile", "not an xpcg-forest v1 file");
  }
  LabelVocabulary vocab(j.at("vocabulary").get<std::vector<std::string>>());
  const auto stored_hash = j.at("vocabulary_hash").get<std::string>();
  if (stored_hash != hex64(vocab.hash()) || (expected != nullptr && stored_hash != hex64(expected->hash()))) {
    throw Error(ErrorKind::Precondition, "VocabularyMismatch", "forest vocabulary hash does not match");
  }
  const auto& c = j.at("config");
  ForestConfig config;
  config.forest_size = c.at("forest_size").get<int>();
  config.max_depth = c.at("max_depth").get<int>();
  config.features_per_split = c.at("features_per_split").get<int>();
  config.min_samples_split = c.at("min_samples_split").get<int>();
  config.max_replace_fraction = c.at("max_replace_fraction").get<double>();
  config.seed = c.at("seed").get<std::uint64_t>();

  std::vector<DecisionTree> trees;
  for (const auto& t : j.at("trees")) {
    std::vector<DecisionTree::Node> nodes;
    for (const auto& n : t.at("nodes")) {
      DecisionTree::Node node;
      node.feature = n.at(0).get<int>();
      if (node.feature >= 0) {
        node.absent = n.at(1).get<int>();
        node.present = n.at(2).get<int>();
      } else {
        for (std::size_t k = 1; k < n.size(); ++k) node.counts.push_back(n[k].get<std::uint32_t>());
      }
      nodes.push_back(std::move(node));
    }
    trees.emplace_back(std::move(nodes), std::stoull(t.at("id").get<std::string>(), nullptr, 16));
  }
  if (static_cast<int>(trees.size()) != config.forest_size) {
    throw validation_error("InvalidModelFile", "tree count does not match forest size");
  }
  return ForestModel(config, std::move(vocab), std::move(trees), j.at("generation").get<int>());
}

void ForestModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Runtime, "IoError", "cannot write " + path);
  out << to_json().dump();
}

ForestModel ForestModel::load(const std::string& path, const LabelVocabulary* expected) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::NotFound, "FileNotFound", "cannot open " + path);
  return from_json(nlohmann::json::parse(in), expected);
}

}  // namespace xpcg::forest
