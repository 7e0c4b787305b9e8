#include "xpcg/eval/stats.hpp"

#include <cmath>

#include "xpcg/chunk.hpp"
#include "xpcg/error.hpp"

namespace xpcg::eval {

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw validation_error("ShapeMismatch", "prediction and truth lengths differ");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

int structure_error(std::span<const float> predicted, std::span<const float> truth) {
  if (predicted.size() != truth.size() || truth.size() != static_cast<std::size_t>(kChunkFeatures)) {
    throw validation_error("ShapeMismatch", "structure_error expects two 8x8x30 tensors");
  }
  int errors = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool on = predicted[i] >= 0.5f;
    errors += on != (truth[i] >= 0.5f);
  }
  return errors;
}

}  // namespace xpcg::eval
