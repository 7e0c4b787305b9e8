#include <doctest.h>

#include <cmath>

#include "xpcg/autoencoder.hpp"
#include "xpcg/nn/adam.hpp"
#include "xpcg/nn/gradcheck.hpp"
#include "xpcg/nn/layers.hpp"
#include "xpcg/nn/loss.hpp"
#include "xpcg/nn/sequential.hpp"
#include "grad_fixture.hpp"

using namespace xpcg;
using namespace xpcg::nn;
using namespace gradfix;

TEST_CASE("layer gradients match central differences") {
  for (const auto& c : layer_cases()) {
    CAPTURE(c.name);
    const auto r = check_layer(c.spec, c.in, 17);
    CHECK(r.checked > 0);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("composed miniature autoencoder gradients") {
  for (int n : {0, 2}) {
    CAPTURE(n);
    const auto r = check_mini_autoencoder(n);
    CHECK(r.checked > 100);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  Rng rng(2);
  const Shape in{8, 8, 30};
  Sequential<double> net(in, {LayerSpec::conv(3, 30, 8, 1, 1, Activation::Relu), LayerSpec::dropout(0.3),
                              LayerSpec::conv(3, 8, 8, 2, 1, Activation::Relu), LayerSpec::dense(128, 10, Activation::Sigmoid)});
  net.init(rng);
  const auto x = random_tensor(batch_shape(3, in), rng);
  const auto trace = net.forward(x, true, 4);
  auto grads = net.zero_grads();
  const auto dx = net.backward(trace, Tensor<double>(trace.output().shape()), grads);
  for (const auto& g : grads)
    for (double v : g.values()) CHECK(v == 0.0);
  for (double v : dx.values()) CHECK(v == 0.0);

  // mse of the output against itself
  const auto d = mse_grad(trace.output(), trace.output());
  CHECK(mse(trace.output(), trace.output()) == 0.0);
  for (double v : d.values()) CHECK(v == 0.0);
}

TEST_CASE("mse") {
  CHECK(mse(Tensor<double>({2}, {0.0, 1.0}), Tensor<double>({2}, {1.0, 1.0})) == doctest::Approx(0.5));
  CHECK(mse(Tensor<double>({3, 2}, 1.0), Tensor<double>({3, 2}, 0.0)) == doctest::Approx(1.0));
  CHECK_THROWS_AS(mse(Tensor<double>({3}), Tensor<double>({2})), Error);
  const auto g = mse_grad(Tensor<double>({2}, {0.0, 1.0}), Tensor<double>({2}, {1.0, 1.0}));
  CHECK(g[0] == doctest::Approx(-1.0));
  CHECK(g[1] == 0.0);

  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const auto a = random_tensor({4, 3}, rng);
    auto b = a;
    CHECK(mse(a, b) == 0.0);
    b[rng.below(12)] += 0.5;
    CHECK(mse(a, b) > 0.0);
  }
}

TEST_CASE("softmax cross entropy gradient") {
  Rng rng(6);
  auto logits = random_tensor({3, 4}, rng);
  const std::vector<int> labels{2, 0, 3};
  Tensor<double> grad;
  softmax_cross_entropy<double>(logits, labels, &grad);
  const auto r = check_gradients({&logits}, {grad}, [&] { return softmax_cross_entropy<double>(logits, labels, nullptr); });
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("adam") {
  SUBCASE("x^2 from 5") {
    Tensor<double> x({1}, 5.0);
    AdamState<double> st;
    st.config.lr = 0.01;
    std::vector<Tensor<double>*> ps{&x};
    std::vector<Tensor<double>> g{Tensor<double>({1})};
    for (int i = 0; i < 2000; ++i) {
      g[0][0] = 2.0 * x[0];
      adam_step<double>(ps, g, st);
    }
    CHECK(std::abs(x[0]) < 1e-2);
  }
  SUBCASE("first step is lr times sign") {
    Rng rng(1);
    auto p = random_tensor({10}, rng);
    const auto start = p;
    auto grad = random_tensor({10}, rng, 3.0);
    for (auto& v : grad.values()) v += v < 0 ? -0.1 : 0.1;
    AdamState<double> st;
    std::vector<Tensor<double>*> ps{&p};
    adam_step<double>(ps, std::span<const Tensor<double>>(&grad, 1), st);
    for (std::size_t i = 0; i < 10; ++i) {
      const double expect = start[i] - st.config.lr * (grad[i] > 0 ? 1.0 : -1.0);
      CHECK(std::abs(p[i] - expect) < 1e-9);
      const double exact = start[i] - st.config.lr * grad[i] / (std::abs(grad[i]) + st.config.epsilon);
      CHECK(p[i] == doctest::Approx(exact).epsilon(1e-14));
    }
  }
  SUBCASE("zero gradient leaves parameters alone") {
    Rng rng(2);
    auto p = random_tensor({6}, rng);
    const auto start = p;
    AdamState<double> st;
    std::vector<Tensor<double>*> ps{&p};
    const Tensor<double> zero({6});
    for (int i = 0; i < 100; ++i) adam_step<double>(ps, std::span<const Tensor<double>>(&zero, 1), st);
    CHECK(p == start);
  }
}

TEST_CASE("identity kernel conv passes input through") {
  const int c = 4;
  auto layer = make_layer<double>(LayerSpec::conv(3, c, c, 1, 1, Activation::Linear), {6, 5, c});
  auto w = layer->params()[0];
  w.fill(0.0);
  for (int k = 0; k < c; ++k) w[static_cast<std::size_t>((4 * c + k) * c + k)] = 1.0;
  layer->params()[0] = w;
  layer->params()[1].fill(0.0);
  Rng rng(3);
  const auto x = random_tensor({2, 6, 5, c}, rng);
  Tensor<double> y, aux;
  layer->forward(x, y, aux, false, rng);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("dropout") {
  Rng rng(4);
  const auto x = random_tensor({3, 4, 4, 2}, rng);
  auto none = make_layer<double>(LayerSpec::dropout(0.0), {4, 4, 2});
  Tensor<double> a, b, aux;
  none->forward(x, a, aux, true, rng);
  none->forward(x, b, aux, false, rng);
  CHECK(a == b);
  CHECK(a == x);

  auto drop = make_layer<double>(LayerSpec::dropout(0.5), {4, 4, 2});
  drop->forward(x, b, aux, false, rng);
  CHECK(b == x);
  drop->forward(x, a, aux, true, rng);
  int zeros = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (a[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(a[i] == doctest::Approx(2.0 * x[i]));
    }
  }
  CHECK(zeros > 0);
  CHECK(zeros < static_cast<int>(x.size()));
}

TEST_CASE("shape arithmetic") {
  CHECK(make_layer<float>(LayerSpec::conv(3, 30, 32, 1, 1, Activation::Relu), {8, 8, 30})->output_shape() == Shape{8, 8, 32});
  CHECK(make_layer<float>(LayerSpec::conv(3, 32, 32, 2, 1, Activation::Relu), {8, 8, 32})->output_shape() == Shape{4, 4, 32});
  CHECK(make_layer<float>(LayerSpec::upsample(2), {4, 4, 32})->output_shape() == Shape{8, 8, 32});
  for (int in = 2; in < 7; ++in) {
    for (int stride = 1; stride <= 2; ++stride) {
      for (int pad = 0; pad <= 1; ++pad) {
        const auto out = make_layer<float>(LayerSpec::deconv(3, 2, 3, stride, pad, Activation::Linear), {in, in + 1, 2})->output_shape();
        CHECK(out == Shape{(in - 1) * stride - 2 * pad + 3, in * stride - 2 * pad + 3, 3});
      }
    }
  }
  CHECK_THROWS_AS(make_layer<float>(LayerSpec::conv(3, 4, 4, 1, 1, Activation::Relu), {8, 8, 3}), Error);
  CHECK_THROWS_AS(make_layer<float>(LayerSpec::dense(10, 4, Activation::Relu), {11}), Error);
  CHECK_THROWS_AS(make_layer<float>(LayerSpec::reshape({3, 3}), {10}), Error);
}

TEST_CASE("infer mode is pure") {
  Rng rng(9);
  Sequential<float> net({8, 8, 30}, {LayerSpec::conv(3, 30, 8, 1, 1, Activation::Relu), LayerSpec::dropout(0.3),
                                     LayerSpec::conv(3, 8, 8, 2, 1, Activation::Sigmoid)});
  net.init(rng);
  Tensor<float> x({2, 8, 8, 30});
  for (auto& v : x.values()) v = rng.chance(0.1) ? 1.0f : 0.0f;
  CHECK(net.infer(x) == net.infer(x));
  CHECK(net.forward(x, true, 3).output() == net.forward(x, true, 3).output());
  CHECK(net.forward(x, true, 3).output() != net.forward(x, true, 4).output());
}

TEST_CASE("weight init statistics") {
  Rng rng(10);
  auto relu = make_layer<double>(LayerSpec::dense(400, 300, Activation::Relu), {400});
  relu->init(rng);
  double ss = 0.0;
  for (double v : relu->params()[0].values()) ss += v * v;
  const double var = ss / static_cast<double>(relu->params()[0].size());
  CHECK(var == doctest::Approx(2.0 / 400).epsilon(0.05));
  for (double v : relu->params()[1].values()) CHECK(v == 0.0);

  auto sig = make_layer<double>(LayerSpec::dense(400, 300, Activation::Sigmoid), {400});
  sig->init(rng);
  const double limit = std::sqrt(6.0 / 700.0);
  for (double v : sig->params()[0].values()) CHECK(std::abs(v) <= limit);
}
