#include "xpcg/nn/loss.hpp"

#include <algorithm>
#include <cmath>

namespace xpcg::nn {

template <typename T>
double mse(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw shape_mismatch("mse of " + shape_string(pred.shape()) + " and " + shape_string(target.shape()));
  }
  if (pred.size() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

template <typename T>
Tensor<T> mse_grad(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw shape_mismatch("mse of " + shape_string(pred.shape()) + " and " + shape_string(target.shape()));
  }
  Tensor<T> g(pred.shape());
  const T scale = static_cast<T>(2.0 / static_cast<double>(std::max<std::size_t>(pred.size(), 1)));
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>* grad, Tensor<T>* probs) {
  if (logits.rank() != 2 || static_cast<std::size_t>(logits.dim(0)) != labels.size()) {
    throw shape_mismatch("logits " + shape_string(logits.shape()) + " vs " + std::to_string(labels.size()) + " labels");
  }
  const int n = logits.dim(0);
  const int k = logits.dim(1);
  if (grad != nullptr) grad->reset(logits.shape());
  if (probs != nullptr) probs->reset(logits.shape());
  double loss = 0.0;
  std::vector<double> p(static_cast<std::size_t>(k));
  for (int i = 0; i < n; ++i) {
    const T* row = logits.data() + static_cast<std::size_t>(i) * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += (p[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(row[j]) - mx));
    for (auto& v : p) v /= z;
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw validation_error("InvalidLabel", "class index out of range");
    loss -= std::log(std::max(p[static_cast<std::size_t>(y)], 1e-300));
    for (int j = 0; j < k; ++j) {
      const auto idx = static_cast<std::size_t>(i) * k + j;
      if (probs != nullptr) (*probs)[idx] = static_cast<T>(p[static_cast<std::size_t>(j)]);
      if (grad != nullptr) (*grad)[idx] = static_cast<T>((p[static_cast<std::size_t>(j)] - (j == y ? 1.0 : 0.0)) / n);
    }
  }
  return loss / std::max(n, 1);
}

template double mse<float>(const Tensor<float>&, const Tensor<float>&);
template double mse<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> mse_grad<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mse_grad<double>(const Tensor<double>&, const Tensor<double>&);
template double softmax_cross_entropy<float>(const Tensor<float>&, std::span<const int>, Tensor<float>*, Tensor<float>*);
template double softmax_cross_entropy<double>(const Tensor<double>&, std::span<const int>, Tensor<double>*,
                                              Tensor<double>*);

}  // namespace xpcg::nn
