#include "xpcg/eval/cnn_baseline.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "xpcg/error.hpp"
#include "xpcg/eval/stats.hpp"
#include "xpcg/nn/loss.hpp"

namespace xpcg::eval {

using nn::Activation;
using nn::LayerSpec;
using nn::Tensor;

CnnClassifier::CnnClassifier(const CnnConfig& config, int classes) : config_(config), classes_(classes) {
  if (classes < 2) throw validation_error("InsufficientData", "classifier needs at least two classes");
  const auto& g = config.geometry;
  net_ = nn::Sequential<float>(
      {g.height, g.width, g.channels},
      {LayerSpec::conv(g.kernel, g.channels, g.filters1, 1, g.kernel / 2, Activation::Relu),
       LayerSpec::dropout(config.dropout),
       LayerSpec::conv(g.kernel, g.filters1, g.filters2, 2, g.kernel / 2, Activation::Relu),
       LayerSpec::dense(g.structure_features(), classes, Activation::Linear)});
  Rng rng(config.seed);
  net_.init(rng);
}

namespace {

Tensor<float> stack(const std::vector<LabeledChunk>& examples, std::span<const std::size_t> rows,
                    const ae::Geometry& g) {
  Tensor<float> x({static_cast<int>(rows.size()), g.height, g.width, g.channels});
  const std::size_t per = static_cast<std::size_t>(g.structure_inputs());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    examples[rows[i]].chunk.write_floats(std::span<float>(x.data() + i * per, per));
  }
  return x;
}

}  // namespace

ae::TrainSummary CnnClassifier::fit(const std::vector<LabeledChunk>& examples) {
  if (examples.empty()) throw validation_error("EmptyDataset", "classifier training set is empty");
  for (const auto& e : examples) {
    if (e.label_index < 0 || e.label_index >= classes_) throw validation_error("UnknownLabel", "label index out of range");
  }
  auto params = net_.params();
  nn::AdamState<float> adam;
  adam.config = config_.adam;
  const std::size_t m = examples.size();
  std::vector<std::size_t> order(m);
  std::vector<int> labels;

  ae::TrainSummary summary;
  double best = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int epoch = 0; epoch < config_.convergence.max_epochs; ++epoch) {
    const std::uint64_t epoch_seed = Rng::derive(config_.seed, static_cast<std::uint64_t>(epoch) + 1);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(epoch_seed);
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double epoch_sum = 0.0;
    for (std::size_t start = 0, batch = 0; start < m; start += static_cast<std::size_t>(config_.batch_size), ++batch) {
      const std::size_t stop = std::min(m, start + static_cast<std::size_t>(config_.batch_size));
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Tensor<float> x = stack(examples, rows, config_.geometry);
      labels.clear();
      for (auto r : rows) labels.push_back(examples[r].label_index);

      const auto trace = net_.forward(x, true, Rng::derive(epoch_seed, batch));
      Tensor<float> grad;
      const double loss = nn::softmax_cross_entropy(trace.output(), std::span<const int>(labels), &grad);
      epoch_sum += loss * static_cast<double>(rows.size());
      auto grads = net_.zero_grads();
      net_.backward(trace, grad, grads, false);
      nn::adam_step<float>(params, grads, adam);
    }
    const double loss = epoch_sum / static_cast<double>(m);
    if (!std::isfinite(loss)) throw Error(ErrorKind::Runtime, "NonFiniteLoss", "training diverged");
    ++summary.epochs;
    summary.final_loss = loss;
    const double improvement = std::isfinite(best) ? (best - loss) / best : 1.0;
    stalled = improvement < config_.convergence.tolerance ? stalled + 1 : 0;
    best = std::min(best, loss);
    if (stalled >= config_.convergence.patience) {
      summary.converged = true;
      break;
    }
  }
  return summary;
}

std::vector<int> CnnClassifier::predict(const std::vector<LabeledChunk>& examples) const {
  std::vector<int> out;
  out.reserve(examples.size());
  constexpr std::size_t kBatch = 64;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < examples.size(); start += kBatch) {
    const std::size_t stop = std::min(examples.size(), start + kBatch);
    rows.resize(stop - start);
    std::iota(rows.begin(), rows.end(), start);
    const Tensor<float> logits = net_.infer(stack(examples, rows, config_.geometry));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const float* row = logits.data() + i * static_cast<std::size_t>(classes_);
      out.push_back(static_cast<int>(std::max_element(row, row + classes_) - row));
    }
  }
  return out;
}

int CnnClassifier::predict(const Chunk& chunk) const {
  return predict(std::vector<LabeledChunk>{{chunk, 0}}).front();
}

double accuracy_of(const CnnClassifier& model, const std::vector<LabeledChunk>& examples) {
  std::vector<int> truth;
  for (const auto& e : examples) truth.push_back(e.label_index);
  const auto predicted = model.predict(examples);
  return accuracy(predicted, truth);
}

}  // namespace xpcg::eval
