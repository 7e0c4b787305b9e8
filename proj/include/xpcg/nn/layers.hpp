#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xpcg/nn/tensor.hpp"
#include "xpcg/rng.hpp"

namespace xpcg::nn {

enum class LayerKind { Conv2d, Deconv2d, Upsample, Dropout, Dense, Reshape };
enum class Activation { Linear, Relu, Sigmoid };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);

/// Declarative description of one layer. Spatial layers take per-sample
/// [H, W, C] inputs; Dense flattens whatever it receives.
struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  int in_channels = 0;   // Dense: input features
  int out_channels = 0;  // Dense: output features
  double rate = 0.0;     // Dropout
  int factor = 2;        // Upsample
  Activation activation = Activation::Linear;
  Shape out_shape;       // Reshape

  nlohmann::json to_json() const;
  static LayerSpec from_json(const nlohmann::json& j);

  static LayerSpec conv(int kernel, int in, int out, int stride, int padding, Activation act);
  static LayerSpec deconv(int kernel, int in, int out, int stride, int padding, Activation act);
  static LayerSpec dense(int in, int out, Activation act);
  static LayerSpec dropout(double rate);
  static LayerSpec upsample(int factor);
  static LayerSpec reshape(Shape shape);
};

/// One differentiable layer. Layers are immutable during forward/backward:
/// everything backward needs comes back through `x`, `y` and `aux`.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  const LayerSpec& spec() const { return spec_; }
  const Shape& input_shape() const { return in_; }
  const Shape& output_shape() const { return out_; }

  /// x: [N, in...] -> y: [N, out...]. `aux` holds whatever backward needs
  /// beyond x and y (im2col buffers, dropout masks).
  virtual void forward(const Tensor<T>& x, Tensor<T>& y, Tensor<T>& aux, bool train, Rng& rng) const = 0;

  /// Accumulates parameter gradients into `grads` (same order as params())
  /// and writes the input gradient into `dx` when it is non-null.
  virtual void backward(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& aux, const Tensor<T>& dy,
                        Tensor<T>* dx, std::span<Tensor<T>> grads) const = 0;

  std::span<Tensor<T>> params() { return params_; }
  std::span<const Tensor<T>> params() const { return params_; }

  /// He-normal for relu layers, Glorot-uniform otherwise; biases zero.
  virtual void init(Rng& rng);

  virtual std::unique_ptr<Layer> clone() const = 0;

 protected:
  Layer(LayerSpec spec, Shape in, Shape out) : spec_(std::move(spec)), in_(std::move(in)), out_(std::move(out)) {}

  virtual std::pair<int, int> fans() const { return {0, 0}; }

  LayerSpec spec_;
  Shape in_;
  Shape out_;
  std::vector<Tensor<T>> params_;
};

/// Builds a layer for the given per-sample input shape. Throws ShapeMismatch
/// when the spec cannot consume that shape.
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& input);

/// Output extent of a strided convolution and of its transpose.
constexpr int conv_extent(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}
constexpr int deconv_extent(int in, int kernel, int stride, int padding) {
  return (in - 1) * stride - 2 * padding + kernel;
}

template <typename T>
void apply_activation(Activation act, std::span<T> v);

/// dz = dy * f'(y), with the derivative expressed through the activation output.
template <typename T>
void activation_backward(Activation act, std::span<const T> y, std::span<const T> dy, std::span<T> dz);

}  // namespace xpcg::nn
