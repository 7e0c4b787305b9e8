#pragma once

#include <span>
#include <vector>

#include "xpcg/nn/tensor.hpp"

namespace xpcg::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  long step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

/// One bias-corrected Adam update. Moments are allocated on the first call.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, AdamState<T>& state);

}  // namespace xpcg::nn
