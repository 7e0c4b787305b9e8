#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "xpcg/autoencoder.hpp"
#include "xpcg/nn/gradcheck.hpp"
#include "xpcg/nn/layers.hpp"

namespace gradfix {

using namespace xpcg;
using namespace xpcg::nn;

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// Biases start at zero; give them values so relu units sit away from the kink
// and the bias path is exercised.
inline void jitter_biases(std::span<Tensor<double>> params, Rng& rng) {
  for (auto& p : params) {
    if (p.rank() == 1) {
      for (auto& v : p.values()) v = 0.1 * rng.normal();
    }
  }
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// loss = <w, layer(x)>; checks every parameter and the input.
inline GradCheckResult check_layer(const LayerSpec& spec, const Shape& in, std::uint64_t seed) {
  Rng rng(seed);
  auto layer = make_layer<double>(spec, in);
  layer->init(rng);
  jitter_biases(layer->params(), rng);
  auto x = random_tensor(batch_shape(2, in), rng);
  const auto w = random_tensor(batch_shape(2, layer->output_shape()), rng);

  auto run = [&] {
    Tensor<double> y, aux;
    Rng r(99);
    layer->forward(x, y, aux, true, r);
    return dot(w, y);
  };

  Tensor<double> y, aux, dx;
  Rng r(99);
  layer->forward(x, y, aux, true, r);
  std::vector<Tensor<double>> grads;
  for (const auto& p : layer->params()) grads.emplace_back(p.shape());
  layer->backward(x, y, aux, w, &dx, grads);

  std::vector<Tensor<double>*> targets;
  for (auto& p : layer->params()) targets.push_back(&p);
  targets.push_back(&x);
  grads.push_back(dx);
  return check_gradients(targets, grads, run, 1e-5, 64, seed);
}

struct LayerCase {
  const char* name;
  LayerSpec spec;
  Shape in;
};

inline std::vector<LayerCase> layer_cases() {
  const Shape img{5, 5, 3};
  return {
      {"conv relu", LayerSpec::conv(3, 3, 4, 1, 1, Activation::Relu), img},
      {"conv stride 2 relu", LayerSpec::conv(3, 3, 4, 2, 1, Activation::Relu), Shape{6, 6, 3}},
      {"conv sigmoid", LayerSpec::conv(3, 3, 2, 1, 1, Activation::Sigmoid), img},
      {"conv linear no pad", LayerSpec::conv(3, 3, 2, 1, 0, Activation::Linear), img},
      {"deconv relu", LayerSpec::deconv(3, 3, 4, 1, 1, Activation::Relu), img},
      {"deconv stride 2 sigmoid", LayerSpec::deconv(3, 3, 2, 2, 1, Activation::Sigmoid), Shape{3, 3, 3}},
      {"dense relu", LayerSpec::dense(12, 7, Activation::Relu), Shape{12}},
      {"dense sigmoid", LayerSpec::dense(12, 7, Activation::Sigmoid), Shape{12}},
      {"dense linear", LayerSpec::dense(12, 7, Activation::Linear), Shape{12}},
      {"dense on image", LayerSpec::dense(18, 5, Activation::Relu), Shape{3, 3, 2}},
      {"upsample", LayerSpec::upsample(2), Shape{2, 3, 4}},
      {"dropout", LayerSpec::dropout(0.3), img},
      {"reshape", LayerSpec::reshape({4, 2, 3}), Shape{24}},
  };
}

// 4x4x3 autoencoder with n labels under the joint mse.
inline GradCheckResult check_mini_autoencoder(int n) {
  ae::Geometry g;
  g.height = 4;
  g.width = 4;
  g.channels = 3;
  g.filters1 = 4;
  g.filters2 = 4;
  g.embedding = 16;
  ae::AeNet<double> net(g, n, 0.3);
  Rng rng(5);
  net.init(rng);
  for (auto* p : net.params()) {
    if (p->rank() == 1) {
      for (auto& v : p->values()) v = 0.1 * rng.normal();
    }
  }
  Tensor<double> s({2, 4, 4, 3});
  for (auto& v : s.values()) v = rng.chance(0.3) ? 1.0 : 0.0;
  Tensor<double> l({2, n});
  if (n > 0) {
    l[0] = 1.0;
    l[static_cast<std::size_t>(n + 1)] = 1.0;
  }
  const double count = static_cast<double>(s.size() + l.size());

  auto loss = [&] {
    const auto pass = net.forward(s, l, true, 31);
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) total += std::pow(pass.structure()[i] - s[i], 2);
    for (std::size_t i = 0; i < l.size(); ++i) total += std::pow(pass.labels[i] - l[i], 2);
    return total / count;
  };

  const auto pass = net.forward(s, l, true, 31);
  Tensor<double> ds(s.shape()), dl(l.shape());
  for (std::size_t i = 0; i < s.size(); ++i) ds[i] = 2.0 * (pass.structure()[i] - s[i]) / count;
  for (std::size_t i = 0; i < l.size(); ++i) dl[i] = 2.0 * (pass.labels[i] - l[i]) / count;
  auto grads = net.zero_grads();
  net.backward(pass, ds, dl, grads);
  return check_gradients(net.params(), grads, loss, 1e-5, 64, 3);
}

}  // namespace gradfix
