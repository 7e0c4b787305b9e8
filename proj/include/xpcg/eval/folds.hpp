#pragma once

#include <cstdint>
#include <vector>

namespace xpcg::eval {

/// k-fold partition over item indices. Each item is in exactly one test fold.
struct FoldPlan {
  int k = 3;
  std::uint64_t seed = 0;
  bool stratified = true;
  std::vector<std::vector<std::size_t>> test;

  std::vector<std::size_t> train_indices(int fold) const;
  const std::vector<std::size_t>& test_indices(int fold) const { return test.at(static_cast<std::size_t>(fold)); }
};

/// Stratified by label when every label has at least k items, otherwise a
/// plain shuffled split (`stratified` is false then). Throws InsufficientData
/// when there are fewer items than folds.
FoldPlan make_folds(const std::vector<int>& labels, int k, std::uint64_t seed);

}  // namespace xpcg::eval
