#pragma once

#include <cstdint>
#include <vector>

#include "xpcg/autoencoder.hpp"
#include "xpcg/labels.hpp"
#include "xpcg/nn/sequential.hpp"

namespace xpcg::eval {

/// Compact CNN classifier: the autoencoder's encoder conv stack followed by
/// a dense softmax head over n + 1 classes (the last one is none).
struct CnnConfig {
  ae::Geometry geometry;
  double dropout = 0.3;
  nn::AdamConfig adam;
  int batch_size = 32;
  ae::ConvergenceRule convergence;
  std::uint64_t seed = 0;
};

class CnnClassifier {
 public:
  CnnClassifier(const CnnConfig& config, int classes);

  /// Cross-entropy with Adam until the convergence rule fires.
  ae::TrainSummary fit(const std::vector<LabeledChunk>& examples);
  int predict(const Chunk& chunk) const;
  std::vector<int> predict(const std::vector<LabeledChunk>& examples) const;

  int classes() const { return classes_; }

 private:
  CnnConfig config_;
  int classes_ = 0;
  nn::Sequential<float> net_;
};

double accuracy_of(const CnnClassifier& model, const std::vector<LabeledChunk>& examples);

}  // namespace xpcg::eval
