#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "xpcg/autoencoder.hpp"
#include "xpcg/eval/cnn_baseline.hpp"
#include "xpcg/eval/corpus.hpp"
#include "xpcg/eval/report.hpp"
#include "xpcg/forest.hpp"

namespace xpcg::eval {

inline const std::vector<std::string> kGeneratorVariants = {"no-labels", "no-auto-tag", "full"};
inline const std::vector<std::string> kTransferVariants = {"no-labels", "transfer-no-auto", "transfer-with-auto",
                                                           "full"};

struct ExperimentConfig {
  std::string experiment = "classifier";  // classifier | generator | transfer
  CorpusSpec corpus = CorpusSpec::default_spec();
  std::string corpus_dir;  // load this corpus instead of synthesizing one
  int folds = 3;
  int draws = 1;
  /// Share of each label's train-fold annotations revealed as hand labels
  /// (at least one per label). 1 reveals all of them.
  double hand_fraction = 1.0;
  std::vector<std::string> variants;  // empty means all
  int pool_stride = 8;                // x stride of the no-labels chunk pool
  std::vector<int> pool_rows = {0, 3, 6};
  int autolabel_stride = 2;
  forest::ForestConfig forest;
  ae::AeConfig autoencoder;  // n_labels and seed are set per run
  CnnConfig cnn;

  /// Throws InvalidConfig.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; ae/cnn/forest accept partial overrides.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Trained models shared between experiments run on the same corpus and
/// seeds (the no-labels parent is common to Tables 3 and 4).
class ExperimentCache {
 public:
  struct Entry {
    std::shared_ptr<const ae::AutoencoderModel> model;
    ae::TrainSummary summary;
    double seconds = 0.0;
  };
  const Entry* find(const std::string& key) const;
  void put(const std::string& key, Entry entry);

 private:
  std::map<std::string, Entry> entries_;
};

/// Everything one generator/transfer fold trains on.
struct FoldData {
  std::vector<LabeledChunk> hand;
  std::vector<LabeledChunk> autolabeled;
  std::vector<LabeledChunk> test;
  std::vector<ae::AeExample> pool;
  std::vector<PatternAnnotation> hand_annotations;
  int auto_annotations = 0;
};

/// Builds the fold datasets. Folds are over the oracle annotations; pool and
/// auto-labeled chunks never overlap a test annotation.
FoldData prepare_fold(const Corpus& corpus, const std::vector<std::size_t>& train_annotations,
                      const std::vector<std::size_t>& test_annotations, const ExperimentConfig& config,
                      std::uint64_t fold_seed);

/// Oracle annotation chunks plus sampled none chunks.
std::vector<LabeledChunk> classifier_examples(const Corpus& corpus, std::uint64_t seed);

ExperimentReport run_classifier_experiment(const Corpus& corpus, const ExperimentConfig& config,
                                           std::uint64_t seed);
ExperimentReport run_generator_experiment(const Corpus& corpus, const ExperimentConfig& config,
                                          std::uint64_t seed, ExperimentCache* cache = nullptr);
ExperimentReport run_transfer_experiment(const Corpus& corpus, const ExperimentConfig& config,
                                         std::uint64_t seed, ExperimentCache* cache = nullptr);

/// Seed of corpus draw `draw` under a master seed.
std::uint64_t draw_seed(std::uint64_t seed, int draw);

/// Runs config.experiment over config.draws corpora (or the one corpus in
/// corpus_dir). A single draw returns that draw's report; several draws
/// aggregate per-draw means into the rows and keep each draw's report under
/// details.draws.
ExperimentReport run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                                ExperimentCache* cache = nullptr);

}  // namespace xpcg::eval
