#include "xpcg/nn/sequential.hpp"

#include "xpcg/hash.hpp"

namespace xpcg::nn {

template <typename T>
Sequential<T>::Sequential(Shape input, const std::vector<LayerSpec>& specs) : input_(std::move(input)) {
  Shape shape = input_;
  for (const auto& spec : specs) {
    layers_.push_back(make_layer<T>(spec, shape));
    shape = layers_.back()->output_shape();
  }
}

template <typename T>
Sequential<T>::Sequential(const Sequential& other) : input_(other.input_) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Sequential<T>& Sequential<T>::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
std::vector<LayerSpec> Sequential<T>::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l->spec());
  return out;
}

template <typename T>
Tensor<T> Sequential<T>::infer(const Tensor<T>& x) const {
  if (x.rank() < 1 || Shape(x.shape().begin() + 1, x.shape().end()) != input_) {
    throw shape_mismatch("input " + shape_string(x.shape()) + " does not match " + shape_string(input_));
  }
  Rng unused(0);
  Tensor<T> cur = x;
  Tensor<T> next;
  Tensor<T> aux;
  for (const auto& l : layers_) {
    l->forward(cur, next, aux, false, unused);
    std::swap(cur, next);
  }
  return cur;
}

template <typename T>
Trace<T> Sequential<T>::forward(const Tensor<T>& x, bool train, std::uint64_t seed) const {
  if (x.rank() < 1 || Shape(x.shape().begin() + 1, x.shape().end()) != input_) {
    throw shape_mismatch("input " + shape_string(x.shape()) + " does not match " + shape_string(input_));
  }
  Trace<T> trace;
  trace.acts.reserve(layers_.size() + 1);
  trace.aux.resize(layers_.size());
  trace.acts.push_back(x);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Rng rng(Rng::derive(seed, i));
    Tensor<T> y;
    layers_[i]->forward(trace.acts.back(), y, trace.aux[i], train, rng);
    trace.acts.push_back(std::move(y));
  }
  return trace;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Trace<T>& trace, const Tensor<T>& dy, std::span<Tensor<T>> grads,
                                  bool want_dx) const {
  if (dy.shape() != trace.output().shape()) {
    throw shape_mismatch("output gradient " + shape_string(dy.shape()) + " does not match " +
                         shape_string(trace.output().shape()));
  }
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& l : layers_) {
    offsets.push_back(offset);
    offset += l->params().size();
  }
  Tensor<T> grad = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need_dx = want_dx || i > 0;
    Tensor<T> dx;
    layers_[i]->backward(trace.acts[i], trace.acts[i + 1], trace.aux[i], grad,
                         need_dx ? &dx : nullptr, grads.subspan(offsets[i], layers_[i]->params().size()));
    if (need_dx) grad = std::move(dx);
  }
  if (!want_dx) return {};
  return grad;
}

template <typename T>
std::vector<Tensor<T>*> Sequential<T>::params() {
  std::vector<Tensor<T>*> out;
  for (auto& l : layers_) {
    for (auto& p : l->params()) out.push_back(&p);
  }
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> Sequential<T>::params() const {
  std::vector<const Tensor<T>*> out;
  for (const auto& l : layers_) {
    for (const auto& p : l->params()) out.push_back(&p);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> Sequential<T>::zero_grads() const {
  std::vector<Tensor<T>> out;
  for (const auto* p : params()) out.emplace_back(p->shape());
  return out;
}

template <typename T>
std::size_t Sequential<T>::param_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += p->size();
  return n;
}

template <typename T>
void Sequential<T>::init(Rng& rng) {
  for (auto& l : layers_) l->init(rng);
}

template <typename T>
nlohmann::json Sequential<T>::spec_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_) layers.push_back(l->spec().to_json());
  return {{"input", input_}, {"layers", std::move(layers)}};
}

template <typename T>
std::uint64_t Sequential<T>::spec_hash() const {
  return fnv1a64(spec_json().dump());
}

template class Sequential<float>;
template class Sequential<double>;

}  // namespace xpcg::nn
