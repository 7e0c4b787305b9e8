#include "xpcg/eval/folds.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "xpcg/error.hpp"
#include "xpcg/rng.hpp"

namespace xpcg::eval {

std::vector<std::size_t> FoldPlan::train_indices(int fold) const {
  std::vector<std::size_t> out;
  for (int f = 0; f < k; ++f) {
    if (f == fold) continue;
    const auto& t = test[static_cast<std::size_t>(f)];
    out.insert(out.end(), t.begin(), t.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

FoldPlan make_folds(const std::vector<int>& labels, int k, std::uint64_t seed) {
  if (k < 2) throw validation_error("InvalidFolds", "need at least two folds");
  if (labels.size() < static_cast<std::size_t>(k)) {
    throw validation_error("InsufficientData", "fewer items than folds");
  }
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.test.resize(static_cast<std::size_t>(k));

  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);
  plan.stratified = std::all_of(by_label.begin(), by_label.end(),
                                [&](const auto& kv) { return kv.second.size() >= static_cast<std::size_t>(k); });

  Rng rng(seed);
  std::vector<std::vector<std::size_t>> groups;
  if (plan.stratified) {
    for (auto& [label, items] : by_label) groups.push_back(items);
  } else {
    groups.emplace_back(labels.size());
    std::iota(groups.back().begin(), groups.back().end(), std::size_t{0});
  }
  // Deal each shuffled group round-robin, continuing the rotation across
  // groups so fold sizes differ by at most one.
  std::size_t next = 0;
  for (auto& g : groups) {
    rng.shuffle(std::span<std::size_t>(g));
    for (auto idx : g) {
      plan.test[next % static_cast<std::size_t>(k)].push_back(idx);
      ++next;
    }
  }
  for (auto& t : plan.test) std::sort(t.begin(), t.end());
  return plan;
}

}  // namespace xpcg::eval
