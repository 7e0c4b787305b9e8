#include "xpcg/nn/adam.hpp"

#include <cmath>

namespace xpcg::nn {

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, AdamState<T>& state) {
  if (params.size() != grads.size()) throw shape_mismatch("parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw shape_mismatch("Adam state does not match parameters");

  ++state.step;
  const auto& c = state.config;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T step = static_cast<T>(c.lr / correction1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(correction2));
  const T eps = static_cast<T>(c.epsilon);

  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<T>& w = *params[p];
    const Tensor<T>& g = grads[p];
    if (g.shape() != w.shape() || state.m[p].shape() != w.shape()) {
      throw shape_mismatch("gradient " + shape_string(g.shape()) + " does not match parameter " + shape_string(w.shape()));
    }
    T* m = state.m[p].data();
    T* v = state.v[p].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
    }
  }
}

template void adam_step<float>(std::span<Tensor<float>* const>, std::span<const Tensor<float>>, AdamState<float>&);
template void adam_step<double>(std::span<Tensor<double>* const>, std::span<const Tensor<double>>,
                                AdamState<double>&);

}  // namespace xpcg::nn
