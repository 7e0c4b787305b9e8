#pragma once

#include <span>
#include <vector>

#include "xpcg/nn/tensor.hpp"

namespace xpcg::nn {

/// Mean over all elements of the squared difference. Throws ShapeMismatch.
template <typename T>
double mse(const Tensor<T>& pred, const Tensor<T>& target);

/// d mse / d pred, i.e. 2 (pred - target) / size.
template <typename T>
Tensor<T> mse_grad(const Tensor<T>& pred, const Tensor<T>& target);

/// Mean softmax cross-entropy of [N, K] logits against class indices. Writes
/// d loss / d logits into `grad` and class probabilities into `probs` when
/// given.
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>* grad,
                             Tensor<T>* probs = nullptr);

}  // namespace xpcg::nn
