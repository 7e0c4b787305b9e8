#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <json.hpp>

#include "xpcg/nn/layers.hpp"

namespace xpcg::nn {

/// Activations recorded by a forward pass; acts[0] is the input.
template <typename T>
struct Trace {
  std::vector<Tensor<T>> acts;
  std::vector<Tensor<T>> aux;
  const Tensor<T>& output() const { return acts.back(); }
};

/// Straight chain of layers with a validated shape flow.
template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(Shape input, const std::vector<LayerSpec>& specs);
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  const Shape& input_shape() const { return input_; }
  const Shape& output_shape() const { return layers_.empty() ? input_ : layers_.back()->output_shape(); }
  std::size_t size() const { return layers_.size(); }
  const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }
  std::vector<LayerSpec> specs() const;

  /// Infer mode: dropout is the identity and the result is deterministic.
  Tensor<T> infer(const Tensor<T>& x) const;

  /// Records every activation. In train mode dropout layer i draws its mask
  /// from a stream derived from (seed, i).
  Trace<T> forward(const Tensor<T>& x, bool train, std::uint64_t seed) const;

  /// Backpropagates `dy` through a recorded trace, accumulating into `grads`.
  /// Returns the input gradient when `want_dx`.
  Tensor<T> backward(const Trace<T>& trace, const Tensor<T>& dy, std::span<Tensor<T>> grads,
                     bool want_dx = true) const;

  std::vector<Tensor<T>*> params();
  std::vector<const Tensor<T>*> params() const;
  std::vector<Tensor<T>> zero_grads() const;
  std::size_t param_count() const;

  void init(Rng& rng);

  nlohmann::json spec_json() const;
  std::uint64_t spec_hash() const;

 private:
  Shape input_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

}  // namespace xpcg::nn
