#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "xpcg/nn/tensor.hpp"
#include "xpcg/rng.hpp"

namespace xpcg::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor); the floor keeps vanishing gradients from
/// turning round-off into large ratios.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares analytic gradients with central differences of `loss`. Tensors
/// with more than `per_tensor` entries are checked at that many random
/// coordinates; smaller ones exhaustively.
inline GradCheckResult check_gradients(const std::vector<Tensor<double>*>& params,
                                       const std::vector<Tensor<double>>& analytic,
                                       const std::function<double()>& loss, double epsilon = 1e-5,
                                       std::size_t per_tensor = 64, std::uint64_t seed = 1) {
  GradCheckResult result;
  Rng rng(seed);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<double>& t = *params[p];
    std::vector<std::size_t> coords;
    if (t.size() <= per_tensor) {
      for (std::size_t i = 0; i < t.size(); ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < per_tensor; ++i) coords.push_back(rng.below(t.size()));
    }
    for (auto i : coords) {
      const double saved = t[i];
      t[i] = saved + epsilon;
      const double up = loss();
      t[i] = saved - epsilon;
      const double down = loss();
      t[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      result.max_relative_error = std::max(result.max_relative_error, relative_error(analytic[p][i], numeric));
      ++result.checked;
    }
  }
  return result;
}

}  // namespace xpcg::nn
