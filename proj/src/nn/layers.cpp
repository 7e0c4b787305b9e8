#include "xpcg/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

namespace xpcg::nn {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, Eigen::Index rows, Eigen::Index cols) {
  return ConstMatMap<T>(t.data(), rows, cols);
}
template <typename T>
MatMap<T> as_matrix(Tensor<T>& t, Eigen::Index rows, Eigen::Index cols) {
  return MatMap<T>(t.data(), rows, cols);
}

/// Patch geometry shared by convolution and its transpose. The "image" is
/// [n, h, w, c]; the grid of patch positions is gh x gw and the column matrix
/// has one row per (n, gy, gx) and k*k*c columns ordered (ky, kx, c).
struct PatchGeometry {
  int n, h, w, c, k, stride, pad, gh, gw;
  int row_length() const { return k * k * c; }
  Eigen::Index rows() const { return static_cast<Eigen::Index>(n) * gh * gw; }
};

template <typename T>
void im2col(const T* im, const PatchGeometry& g, T* cols) {
  const int row_len = g.row_length();
  for (int n = 0; n < g.n; ++n) {
    for (int gy = 0; gy < g.gh; ++gy) {
      for (int gx = 0; gx < g.gw; ++gx) {
        T* row = cols + (static_cast<std::size_t>(n * g.gh + gy) * g.gw + gx) * row_len;
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = gy * g.stride - g.pad + ky;
          for (int kx = 0; kx < g.k; ++kx) {
            const int ix = gx * g.stride - g.pad + kx;
            T* dst = row + (ky * g.k + kx) * g.c;
            if (iy < 0 || ix < 0 || iy >= g.h || ix >= g.w) {
              std::fill(dst, dst + g.c, T(0));
            } else {
              const T* src = im + (static_cast<std::size_t>(n * g.h + iy) * g.w + ix) * g.c;
              std::copy(src, src + g.c, dst);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const PatchGeometry& g, T* im) {
  const int row_len = g.row_length();
  for (int n = 0; n < g.n; ++n) {
    for (int gy = 0; gy < g.gh; ++gy) {
      for (int gx = 0; gx < g.gw; ++gx) {
        const T* row = cols + (static_cast<std::size_t>(n * g.gh + gy) * g.gw + gx) * row_len;
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = gy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < g.k; ++kx) {
            const int ix = gx * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.w) continue;
            const T* src = row + (ky * g.k + kx) * g.c;
            T* dst = im + (static_cast<std::size_t>(n * g.h + iy) * g.w + ix) * g.c;
            for (int c = 0; c < g.c; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

template <typename T>
void add_bias_rows(Tensor<T>& y, const Tensor<T>& bias) {
  const auto cols = static_cast<Eigen::Index>(bias.size());
  auto m = as_matrix(y, static_cast<Eigen::Index>(y.size()) / cols, cols);
  m.rowwise() += Eigen::Map<const RowVec<T>>(bias.data(), cols);
}

template <typename T>
void accumulate_bias_grad(const Tensor<T>& dz, Tensor<T>& db) {
  const auto cols = static_cast<Eigen::Index>(db.size());
  Eigen::Map<RowVec<T>>(db.data(), cols) += as_matrix(dz, static_cast<Eigen::Index>(dz.size()) / cols, cols).colwise().sum();
}

template <typename T>
Tensor<T> pre_activation_grad(Activation act, const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dz(y.shape());
  activation_backward<T>(act, y.values(), dy.values(), dz.values());
  return dz;
}


template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(const LayerSpec& spec, const Shape& in)
      : Layer<T>(spec, in, {conv_extent(in[0], spec.kernel, spec.stride, spec.padding),
                            conv_extent(in[1], spec.kernel, spec.stride, spec.padding), spec.out_channels}) {
    this->params_.emplace_back(Shape{spec.kernel * spec.kernel * spec.in_channels, spec.out_channels});
    this->params_.emplace_back(Shape{spec.out_channels});
  }

  void forward(const Tensor<T>& x, Tensor<T>& y, Tensor<T>& aux, bool, Rng&) const override {
    const auto g = geometry(x.dim(0));
    aux.reset({static_cast<int>(g.rows()), g.row_length()});
    im2col(x.data(), g, aux.data());
    y.reset(batch_shape(x.dim(0), this->out_));
    as_matrix(y, g.rows(), this->spec_.out_channels).noalias() =
        as_matrix(aux, g.rows(), g.row_length()) * as_matrix(this->params_[0], g.row_length(), this->spec_.out_channels);
    add_bias_rows(y, this->params_[1]);
    apply_activation<T>(this->spec_.activation, y.values());
  }

  void backward(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& aux, const Tensor<T>& dy, Tensor<T>* dx,
                std::span<Tensor<T>> grads) const override {
    const auto g = geometry(x.dim(0));
    const int cout = this->spec_.out_channels;
    const Tensor<T> dz = pre_activation_grad(this->spec_.activation, y, dy);
    const auto dz_m = as_matrix(dz, g.rows(), cout);
    as_matrix(grads[0], g.row_length(), cout).noalias() += as_matrix(aux, g.rows(), g.row_length()).transpose() * dz_m;
    accumulate_bias_grad(dz, grads[1]);
    if (dx != nullptr) {
      Tensor<T> dcols({static_cast<int>(g.rows()), g.row_length()});
      as_matrix(dcols, g.rows(), g.row_length()).noalias() =
          dz_m * as_matrix(this->params_[0], g.row_length(), cout).transpose();
      dx->reset(x.shape());
      col2im_add(dcols.data(), g, dx->data());
    }
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }

 protected:
  std::pair<int, int> fans() const override {
    const int kk = this->spec_.kernel * this->spec_.kernel;
    return {kk * this->spec_.in_channels, kk * this->spec_.out_channels};
  }

 private:
  PatchGeometry geometry(int n) const {
    return {n, this->in_[0], this->in_[1], this->spec_.in_channels, this->spec_.kernel, this->spec_.stride,
            this->spec_.padding, this->out_[0], this->out_[1]};
  }
};

/// Transposed convolution: every input pixel scatters a k x k x Cout patch
/// into the output, i.e. the adjoint of Conv2d with the same geometry.
template <typename T>
class Deconv2d final : public Layer<T> {
 public:
  Deconv2d(const LayerSpec& spec, const Shape& in)
      : Layer<T>(spec, in, {deconv_extent(in[0], spec.kernel, spec.stride, spec.padding),
                            deconv_extent(in[1], spec.kernel, spec.stride, spec.padding), spec.out_channels}) {
    this->params_.emplace_back(Shape{spec.in_channels, spec.kernel * spec.kernel * spec.out_channels});
    this->params_.emplace_back(Shape{spec.out_channels});
  }

  void forward(const Tensor<T>& x, Tensor<T>& y, Tensor<T>&, bool, Rng&) const override {
    const auto g = geometry(x.dim(0));
    Tensor<T> cols({static_cast<int>(g.rows()), g.row_length()});
    as_matrix(cols, g.rows(), g.row_length()).noalias() =
        as_matrix(x, g.rows(), this->spec_.in_channels) * as_matrix(this->params_[0], this->spec_.in_channels, g.row_length());
    y.reset(batch_shape(x.dim(0), this->out_));
    col2im_add(cols.data(), g, y.data());
    add_bias_rows(y, this->params_[1]);
    apply_activation<T>(this->spec_.activation, y.values());
  }

  void backward(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>&, const Tensor<T>& dy, Tensor<T>* dx,
                std::span<Tensor<T>> grads) const override {
    const auto g = geometry(x.dim(0));
    const int cin = this->spec_.in_channels;
    const Tensor<T> dz = pre_activation_grad(this->spec_.activation, y, dy);
    accumulate_bias_grad(dz, grads[1]);
    Tensor<T> dcols({static_cast<int>(g.rows()), g.row_length()});
    im2col(dz.data(), g, dcols.data());
    const auto dcols_m = as_matrix(dcols, g.rows(), g.row_length());
    as_matrix(grads[0], cin, g.row_length()).noalias() += as_matrix(x, g.rows(), cin).transpose() * dcols_m;
    if (dx != nullptr) {
      dx->reset(x.shape());
      as_matrix(*dx, g.rows(), cin).noalias() = dcols_m * as_matrix(this->params_[0], cin, g.row_length()).transpose();
    }
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Deconv2d>(*this); }

 protected:
  std::pair<int, int> fans() const override {
    const int kk = this->spec_.kernel * this->spec_.kernel;
    return {kk * this->spec_.in_channels, kk * this->spec_.out_channels};
  }

 private:
  PatchGeometry geometry(int n) const {
    return {n, this->out_[0], this->out_[1], this->spec_.out_channels, this->spec_.kernel, this->spec_.stride,
            this->spec_.padding, this->in_[0], this->in_[1]};
  }
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(const LayerSpec& spec, const Shape& in) : Layer<T>(spec, in, {spec.out_channels}) {
    this->params_.emplace_back(Shape{spec.in_channels, spec.out_channels});
    this->params_.emplace_back(Shape{spec.out_channels});
  }

  void forward(const Tensor<T>& x, Tensor<T>& y, Tensor<T>&, bool, Rng&) const override {
    const int n = x.dim(0);
    y.reset({n, this->spec_.out_channels});
    as_matrix(y, n, this->spec_.out_channels).noalias() =
        as_matrix(x, n, this->spec_.in_channels) * as_matrix(this->params_[0], this->spec_.in_channels, this->spec_.out_channels);
    add_bias_rows(y, this->params_[1]);
    apply_activation<T>(this->spec_.activation, y.values());
  }

  void backward(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>&, const Tensor<T>& dy, Tensor<T>* dx,
                std::span<Tensor<T>> grads) const override {
    const int n = x.dim(0);
    const int fin = this->spec_.in_channels;
    const int fout = this->spec_.out_channels;
    const Tensor<T> dz = pre_activation_grad(this->spec_.activation, y, dy);
    const auto dz_m = as_matrix(dz, n, fout);
    as_matrix(grads[0], fin, fout).noalias() += as_matrix(x, n, fin).transpose() * dz_m;
    accumulate_bias_grad(dz, grads[1]);
    if (dx != nullptr) {
      dx->reset(x.shape());
      as_matrix(*dx, n, fin).noalias() = dz_m * as_matrix(this->params_[0], fin, fout).transpose();
    }
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dense>(*this); }

 protected:
  std::pair<int, int> fans() const override { return {this->spec_.in_channels, this->spec_.out_channels}; }
};

/// Nearest-neighbour upsampling by an integer factor in both spatial axes.
template <typename T>
class Upsample final : public Layer<T> {
 public:
  Upsample(const LayerSpec& spec, const Shape& in)
      : Layer<T>(spec, in, {in[0] * spec.factor, in[1] * spec.factor, in[2]}) {}

  void forward(const Tensor<T>& x, Tensor<T>& y, Tensor<T>&, bool, Rng&) const override {
    const int n = x.dim(0), h = this->in_[0], w = this->in_[1], c = this->in_[2], f = this->spec_.factor;
    y.reset(batch_shape(n, this->out_));
    for (int b = 0; b < n; ++b) {
      for (int oy = 0; oy < h * f; ++oy) {
        for (int ox = 0; ox < w * f; ++ox) {
          const T* src = x.data() + (static_cast<std::size_t>(b * h + oy / f) * w + ox / f) * c;
          std::copy(src, src + c, y.data() + (static_cast<std::size_t>(b * h * f + oy) * w * f + ox) * c);
        }
      }
    }
  }

  void backward(const Tensor<T>& x, const Tensor<T>&, const Tensor<T>&, const Tensor<T>& dy, Tensor<T>* dx,
                std::span<Tensor<T>>) const override {
    if (dx == nullptr) return;
    const int n = x.dim(0), h = this->in_[0], w = this->in_[1], c = this->in_[2], f = this->spec_.factor;
    dx->reset(x.shape());
    for (int b = 0; b < n; ++b) {
      for (int oy = 0; oy < h * f; ++oy) {
        for (int ox = 0; ox < w * f; ++ox) {
          const T* src = dy.data() + (static_cast<std::size_t>(b * h * f + oy) * w * f + ox) * c;
          T* dst = dx->data() + (static_cast<std::size_t>(b * h + oy / f) * w + ox / f) * c;
          for (int k = 0; k < c; ++k) dst[k] += src[k];
        }
      }
    }
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Upsample>(*this); }
};

/// Inverted dropout: survivors are scaled by 1/(1-p) in train mode so infer
/// mode is the identity.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(const LayerSpec& spec, const Shape& in) : Layer<T>(spec, in, in) {}

  void forward(const Tensor<T>& x, Tensor<T>& y, Tensor<T>& aux, bool train, Rng& rng) const override {
    y = x;
    const double p = this->spec_.rate;
    if (!train || p <= 0.0) {
      aux.reset({});
      return;
    }
    aux.reset(x.shape());
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < x.size(); ++i) {
      aux[i] = rng.uniform() < p ? T(0) : keep_scale;
      y[i] *= aux[i];
    }
  }

  void backward(const Tensor<T>& x, const Tensor<T>&, const Tensor<T>& aux, const Tensor<T>& dy, Tensor<T>* dx,
                std::span<Tensor<T>>) const override {
    if (dx == nullptr) return;
    *dx = dy;
    dx->reshape(x.shape());
    if (aux.size() == dy.size()) {
      for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] *= aux[i];
    }
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dropout>(*this); }
};

template <typename T>
class Reshape final : public Layer<T> {
 public:
  Reshape(const LayerSpec& spec, const Shape& in) : Layer<T>(spec, in, spec.out_shape) {}

  void forward(const Tensor<T>& x, Tensor<T>& y, Tensor<T>&, bool, Rng&) const override {
    y = x;
    y.reshape(batch_shape(x.dim(0), this->out_));
  }

  void backward(const Tensor<T>& x, const Tensor<T>&, const Tensor<T>&, const Tensor<T>& dy, Tensor<T>* dx,
                std::span<Tensor<T>>) const override {
    if (dx == nullptr) return;
    *dx = dy;
    dx->reshape(x.shape());
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Reshape>(*this); }
};

void require(bool ok, const LayerSpec& spec, const Shape& in, const char* why) {
  if (!ok) throw shape_mismatch(to_string(spec.kind) + " cannot take input " + shape_string(in) + ": " + why);
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Deconv2d: return "deconv2d";
    case LayerKind::Upsample: return "upsample";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Dense: return "dense";
    case LayerKind::Reshape: return "reshape";
  }
  return "?";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::Linear: return "linear";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

nlohmann::json LayerSpec::to_json() const {
  nlohmann::json j = {{"kind", to_string(kind)}};
  switch (kind) {
    case LayerKind::Conv2d:
    case LayerKind::Deconv2d:
      j["kernel"] = kernel;
      j["stride"] = stride;
      j["padding"] = padding;
      j["in"] = in_channels;
      j["out"] = out_channels;
      j["activation"] = to_string(activation);
      break;
    case LayerKind::Dense:
      j["in"] = in_channels;
      j["out"] = out_channels;
      j["activation"] = to_string(activation);
      break;
    case LayerKind::Dropout: j["rate"] = rate; break;
    case LayerKind::Upsample: j["factor"] = factor; break;
    case LayerKind::Reshape: j["shape"] = out_shape; break;
  }
  return j;
}

LayerSpec LayerSpec::from_json(const nlohmann::json& j) {
  LayerSpec s;
  const auto kind = j.at("kind").get<std::string>();
  const auto act = j.value("activation", std::string("linear"));
  s.activation = act == "relu" ? Activation::Relu : act == "sigmoid" ? Activation::Sigmoid : Activation::Linear;
  if (kind == "conv2d" || kind == "deconv2d") {
    s.kind = kind == "conv2d" ? LayerKind::Conv2d : LayerKind::Deconv2d;
    s.kernel = j.at("kernel");
    s.stride = j.at("stride");
    s.padding = j.at("padding");
    s.in_channels = j.at("in");
    s.out_channels = j.at("out");
  } else if (kind == "dense") {
    s.kind = LayerKind::Dense;
    s.in_channels = j.at("in");
    s.out_channels = j.at("out");
  } else if (kind == "dropout") {
    s.kind = LayerKind::Dropout;
    s.rate = j.at("rate");
  } else if (kind == "upsample") {
    s.kind = LayerKind::Upsample;
    s.factor = j.at("factor");
  } else if (kind == "reshape") {
    s.kind = LayerKind::Reshape;
    s.out_shape = j.at("shape").get<Shape>();
  } else {
    throw validation_error("InvalidConfig", "unknown layer kind " + kind);
  }
  return s;
}

LayerSpec LayerSpec::conv(int kernel, int in, int out, int stride, int padding, Activation act) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.kernel = kernel;
  s.in_channels = in;
  s.out_channels = out;
  s.stride = stride;
  s.padding = padding;
  s.activation = act;
  return s;
}

LayerSpec LayerSpec::deconv(int kernel, int in, int out, int stride, int padding, Activation act) {
  LayerSpec s = conv(kernel, in, out, stride, padding, act);
  s.kind = LayerKind::Deconv2d;
  return s;
}

LayerSpec LayerSpec::dense(int in, int out, Activation act) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.in_channels = in;
  s.out_channels = out;
  s.activation = act;
  return s;
}

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec s;
  s.kind = LayerKind::Dropout;
  s.rate = rate;
  return s;
}

LayerSpec LayerSpec::upsample(int factor) {
  LayerSpec s;
  s.kind = LayerKind::Upsample;
  s.factor = factor;
  return s;
}

LayerSpec LayerSpec::reshape(Shape shape) {
  LayerSpec s;
  s.kind = LayerKind::Reshape;
  s.out_shape = std::move(shape);
  return s;
}

template <typename T>
void Layer<T>::init(Rng& rng) {
  if (params_.empty()) return;
  const auto [fan_in, fan_out] = fans();
  auto& w = params_[0];
  if (spec_.activation == Activation::Relu) {
    const double sd = std::sqrt(2.0 / fan_in);
    for (auto& v : w.values()) v = static_cast<T>(sd * rng.normal());
  } else {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : w.values()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * limit);
  }
  for (std::size_t i = 1; i < params_.size(); ++i) params_[i].fill(T(0));
}

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& in) {
  switch (spec.kind) {
    case LayerKind::Conv2d:
    case LayerKind::Deconv2d: {
      require(in.size() == 3, spec, in, "expects [H, W, C]");
      require(in[2] == spec.in_channels, spec, in, "channel count differs from spec");
      require(spec.kernel >= 1 && spec.stride >= 1 && spec.padding >= 0 && spec.out_channels >= 1, spec, in,
              "invalid kernel, stride, padding or channels");
      if (spec.kind == LayerKind::Conv2d) {
        require(conv_extent(in[0], spec.kernel, spec.stride, spec.padding) >= 1 &&
                    conv_extent(in[1], spec.kernel, spec.stride, spec.padding) >= 1,
                spec, in, "kernel larger than padded input");
        return std::make_unique<Conv2d<T>>(spec, in);
      }
      require(deconv_extent(in[0], spec.kernel, spec.stride, spec.padding) >= 1 &&
                  deconv_extent(in[1], spec.kernel, spec.stride, spec.padding) >= 1,
              spec, in, "empty output");
      return std::make_unique<Deconv2d<T>>(spec, in);
    }
    case LayerKind::Dense:
      require(static_cast<int>(element_count(in)) == spec.in_channels, spec, in, "feature count differs from spec");
      require(spec.out_channels >= 1, spec, in, "no outputs");
      return std::make_unique<Dense<T>>(spec, in);
    case LayerKind::Upsample:
      require(in.size() == 3 && spec.factor >= 1, spec, in, "expects [H, W, C] and factor >= 1");
      return std::make_unique<Upsample<T>>(spec, in);
    case LayerKind::Dropout:
      require(spec.rate >= 0.0 && spec.rate < 1.0, spec, in, "rate must lie in [0, 1)");
      return std::make_unique<Dropout<T>>(spec, in);
    case LayerKind::Reshape:
      require(element_count(spec.out_shape) == element_count(in), spec, in, "element count changes");
      return std::make_unique<Reshape<T>>(spec, in);
  }
  throw shape_mismatch("unknown layer kind");
}

template <typename T>
void apply_activation(Activation act, std::span<T> v) {
  switch (act) {
    case Activation::Linear: break;
    case Activation::Relu:
      for (auto& x : v) x = x > T(0) ? x : T(0);
      break;
    case Activation::Sigmoid:
      for (auto& x : v) {
        x = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
      }
      break;
  }
}

template <typename T>
void activation_backward(Activation act, std::span<const T> y, std::span<const T> dy, std::span<T> dz) {
  switch (act) {
    case Activation::Linear: std::copy(dy.begin(), dy.end(), dz.begin()); break;
    case Activation::Relu:
      for (std::size_t i = 0; i < y.size(); ++i) dz[i] = y[i] > T(0) ? dy[i] : T(0);
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < y.size(); ++i) dz[i] = dy[i] * y[i] * (T(1) - y[i]);
      break;
  }
}

template class Layer<float>;
template class Layer<double>;
template std::unique_ptr<Layer<float>> make_layer<float>(const LayerSpec&, const Shape&);
template std::unique_ptr<Layer<double>> make_layer<double>(const LayerSpec&, const Shape&);
template void apply_activation<float>(Activation, std::span<float>);
template void apply_activation<double>(Activation, std::span<double>);
template void activation_backward<float>(Activation, std::span<const float>, std::span<const float>, std::span<float>);
template void activation_backward<double>(Activation, std::span<const double>, std::span<const double>,
                                          std::span<double>);

}  // namespace xpcg::nn
