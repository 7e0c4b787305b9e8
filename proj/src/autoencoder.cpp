#include "xpcg/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "xpcg/hash.hpp"
#include "xpcg/nn/loss.hpp"
#include "xpcg/nn/weights_file.hpp"

namespace xpcg::ae {

using nn::Activation;
using nn::LayerSpec;
using nn::Shape;
using nn::Tensor;

namespace {

Error invalid_config(const std::string& why) { return validation_error("InvalidConfig", why); }

template <typename T>
void append(std::vector<T*>& out, std::vector<T*> more) {
  out.insert(out.end(), more.begin(), more.end());
}

}  // namespace

void AeConfig::validate() const {
  const auto& g = geometry;
  if (n_labels < 0) throw invalid_config("n_labels must be >= 0");
  if (g.height < 2 || g.width < 2 || g.height % 2 || g.width % 2) throw invalid_config("spatial extents must be even");
  if (g.channels < 1 || g.filters1 < 1 || g.filters2 < 1 || g.kernel < 1 || g.kernel % 2 == 0) {
    throw invalid_config("channels and filters must be positive and the kernel odd");
  }
  if (g.embedding != kEmbeddingSize) throw invalid_config("embedding size must be 512");
  if (dropout < 0.0 || dropout >= 1.0) throw invalid_config("dropout must lie in [0, 1)");
  if (batch_size < 1) throw invalid_config("batch size must be >= 1");
  if (adam.lr <= 0.0 || adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0 ||
      adam.epsilon <= 0.0) {
    throw invalid_config("invalid Adam hyperparameters");
  }
  if (convergence.patience < 1 || convergence.max_epochs < 1 || convergence.tolerance < 0.0) {
    throw invalid_config("invalid convergence rule");
  }
}

nlohmann::json AeConfig::to_json() const {
  return {
      {"n_labels", n_labels},
      {"geometry",
       {{"height", geometry.height},
        {"width", geometry.width},
        {"channels", geometry.channels},
        {"filters1", geometry.filters1},
        {"filters2", geometry.filters2},
        {"kernel", geometry.kernel},
        {"embedding", geometry.embedding}}},
      {"dropout", dropout},
      {"adam", {{"lr", adam.lr}, {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}}},
      {"batch_size", batch_size},
      {"convergence",
       {{"tolerance", convergence.tolerance},
        {"patience", convergence.patience},
        {"max_epochs", convergence.max_epochs}}},
      {"seed", seed},
  };
}

AeConfig AeConfig::from_json(const nlohmann::json& j) {
  AeConfig c;
  c.n_labels = j.value("n_labels", c.n_labels);
  if (j.contains("geometry")) {
    const auto& g = j["geometry"];
    c.geometry.height = g.value("height", c.geometry.height);
    c.geometry.width = g.value("width", c.geometry.width);
    c.geometry.channels = g.value("channels", c.geometry.channels);
    c.geometry.filters1 = g.value("filters1", c.geometry.filters1);
    c.geometry.filters2 = g.value("filters2", c.geometry.filters2);
    c.geometry.kernel = g.value("kernel", c.geometry.kernel);
    c.geometry.embedding = g.value("embedding", c.geometry.embedding);
  }
  c.dropout = j.value("dropout", c.dropout);
  if (j.contains("adam")) {
    const auto& a = j["adam"];
    c.adam.lr = a.value("lr", c.adam.lr);
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.epsilon = a.value("epsilon", c.adam.epsilon);
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("convergence")) {
    const auto& r = j["convergence"];
    c.convergence.tolerance = r.value("tolerance", c.convergence.tolerance);
    c.convergence.patience = r.value("patience", c.convergence.patience);
    c.convergence.max_epochs = r.value("max_epochs", c.convergence.max_epochs);
  }
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// AeNet

template <typename T>
AeNet<T>::AeNet(const Geometry& g, int n_labels, double dropout) : geometry_(g), n_labels_(n_labels) {
  const int pad = g.kernel / 2;
  const int s = g.structure_features();
  encoder_ = nn::Sequential<T>({g.height, g.width, g.channels},
                               {LayerSpec::conv(g.kernel, g.channels, g.filters1, 1, pad, Activation::Relu),
                                LayerSpec::dropout(dropout),
                                LayerSpec::conv(g.kernel, g.filters1, g.filters2, 2, pad, Activation::Relu)});
  fc_enc_ = nn::Sequential<T>({s + n_labels}, {LayerSpec::dense(s + n_labels, g.embedding, Activation::Relu)});
  fc_dec_ = nn::Sequential<T>({g.embedding}, {LayerSpec::dense(g.embedding, s + n_labels, Activation::Linear)});
  decoder_ = nn::Sequential<T>({s}, {LayerSpec::reshape({g.height / 2, g.width / 2, g.filters2}),
                                     LayerSpec::upsample(2),
                                     LayerSpec::deconv(g.kernel, g.filters2, g.filters1, 1, pad, Activation::Relu),
                                     LayerSpec::deconv(g.kernel, g.filters1, g.channels, 1, pad, Activation::Sigmoid)});
  if (encoder_.output_shape() != Shape{g.height / 2, g.width / 2, g.filters2} ||
      decoder_.output_shape() != Shape{g.height, g.width, g.channels}) {
    throw invalid_config("encoder/decoder shapes do not close");
  }
}

template <typename T>
typename AeNet<T>::Pass AeNet<T>::forward(const Tensor<T>& structure, const Tensor<T>& labels, bool train,
                                          std::uint64_t seed) const {
  const int n = structure.dim(0);
  const int s = geometry_.structure_features();
  if (n_labels_ > 0 && (labels.rank() != 2 || labels.dim(0) != n || labels.dim(1) != n_labels_)) {
    throw nn::shape_mismatch("label input " + nn::shape_string(labels.shape()) + " expected [" + std::to_string(n) +
                             ", " + std::to_string(n_labels_) + "]");
  }
  Pass pass;
  pass.encoder = encoder_.forward(structure, train, Rng::derive(seed, 0));

  Tensor<T> joint({n, s + n_labels_});
  const auto& conv_out = pass.encoder.output();
  for (int i = 0; i < n; ++i) {
    std::copy_n(conv_out.data() + static_cast<std::size_t>(i) * s, s, joint.data() + static_cast<std::size_t>(i) * (s + n_labels_));
    if (n_labels_ > 0) {
      std::copy_n(labels.data() + static_cast<std::size_t>(i) * n_labels_, n_labels_,
                  joint.data() + static_cast<std::size_t>(i) * (s + n_labels_) + s);
    }
  }
  pass.fc_enc = fc_enc_.forward(joint, train, Rng::derive(seed, 1));
  pass.fc_dec = fc_dec_.forward(pass.fc_enc.output(), train, Rng::derive(seed, 2));

  pass.decoded = pass.fc_dec.output();
  Tensor<T> structure_code({n, s});
  pass.labels.reset({n, n_labels_});
  for (int i = 0; i < n; ++i) {
    T* row = pass.decoded.data() + static_cast<std::size_t>(i) * (s + n_labels_);
    nn::apply_activation<T>(Activation::Relu, std::span<T>(row, static_cast<std::size_t>(s)));
    nn::apply_activation<T>(Activation::Sigmoid, std::span<T>(row + s, static_cast<std::size_t>(n_labels_)));
    std::copy_n(row, s, structure_code.data() + static_cast<std::size_t>(i) * s);
    std::copy_n(row + s, n_labels_, pass.labels.data() + static_cast<std::size_t>(i) * n_labels_);
  }
  pass.decoder = decoder_.forward(structure_code, train, Rng::derive(seed, 3));
  return pass;
}

template <typename T>
void AeNet<T>::backward(const Pass& pass, const Tensor<T>& d_structure, const Tensor<T>& d_labels,
                        std::vector<Tensor<T>>& grads) const {
  const int n = d_structure.dim(0);
  const int s = geometry_.structure_features();
  const int width = s + n_labels_;
  std::span<Tensor<T>> all(grads);
  const std::size_t n_enc = encoder_.params().size();
  const std::size_t n_fe = fc_enc_.params().size();
  const std::size_t n_fd = fc_dec_.params().size();
  const std::size_t n_dec = decoder_.params().size();

  const Tensor<T> d_code = decoder_.backward(pass.decoder, d_structure, all.subspan(n_enc + n_fe + n_fd, n_dec));

  Tensor<T> d_decoded({n, width});
  for (int i = 0; i < n; ++i) {
    std::copy_n(d_code.data() + static_cast<std::size_t>(i) * s, s, d_decoded.data() + static_cast<std::size_t>(i) * width);
    if (n_labels_ > 0) {
      std::copy_n(d_labels.data() + static_cast<std::size_t>(i) * n_labels_, n_labels_,
                  d_decoded.data() + static_cast<std::size_t>(i) * width + s);
    }
  }
  Tensor<T> d_pre({n, width});
  for (int i = 0; i < n; ++i) {
    const auto off = static_cast<std::size_t>(i) * width;
    nn::activation_backward<T>(Activation::Relu, pass.decoded.values().subspan(off, s),
                               d_decoded.values().subspan(off, s), d_pre.values().subspan(off, s));
    nn::activation_backward<T>(Activation::Sigmoid, pass.decoded.values().subspan(off + s, n_labels_),
                               d_decoded.values().subspan(off + s, n_labels_), d_pre.values().subspan(off + s, n_labels_));
  }
  const Tensor<T> d_embedding = fc_dec_.backward(pass.fc_dec, d_pre, all.subspan(n_enc + n_fe, n_fd));
  const Tensor<T> d_joint = fc_enc_.backward(pass.fc_enc, d_embedding, all.subspan(n_enc, n_fe));

  Tensor<T> d_conv(pass.encoder.output().shape());
  for (int i = 0; i < n; ++i) {
    std::copy_n(d_joint.data() + static_cast<std::size_t>(i) * width, s, d_conv.data() + static_cast<std::size_t>(i) * s);
  }
  encoder_.backward(pass.encoder, d_conv, all.subspan(0, n_enc), false);
}

template <typename T>
std::vector<Tensor<T>*> AeNet<T>::params() {
  std::vector<Tensor<T>*> out;
  append(out, encoder_.params());
  append(out, fc_enc_.params());
  append(out, fc_dec_.params());
  append(out, decoder_.params());
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> AeNet<T>::params() const {
  std::vector<const Tensor<T>*> out;
  append(out, encoder_.params());
  append(out, fc_enc_.params());
  append(out, fc_dec_.params());
  append(out, decoder_.params());
  return out;
}

template <typename T>
std::vector<Tensor<T>> AeNet<T>::zero_grads() const {
  std::vector<Tensor<T>> out;
  for (const auto* p : params()) out.emplace_back(p->shape());
  return out;
}

template <typename T>
void AeNet<T>::init(Rng& rng) {
  encoder_.init(rng);
  fc_enc_.init(rng);
  decoder_.init(rng);
  // fc_dec feeds a relu structure code and a sigmoid label head.
  auto& w = *fc_dec_.params()[0];
  const int e = geometry_.embedding;
  const int s = geometry_.structure_features();
  const int width = s + n_labels_;
  const double he = std::sqrt(2.0 / e);
  const double glorot = std::sqrt(6.0 / (e + std::max(n_labels_, 1)));
  for (int r = 0; r < e; ++r) {
    for (int c = 0; c < width; ++c) {
      const double v = c < s ? he * rng.normal() : (2.0 * rng.uniform() - 1.0) * glorot;
      w[static_cast<std::size_t>(r) * width + c] = static_cast<T>(v);
    }
  }
  fc_dec_.params()[1]->fill(T(0));
  // Output bias at the log-odds of a sparse tile prior. Starting every
  // sigmoid at 0.5 against mostly-zero targets saturates the decoder within a
  // few Adam steps and the rare tiles never recover.
  const double prior = 1.0 / (2.0 * geometry_.channels);
  decoder_.params().back()->fill(static_cast<T>(std::log(prior / (1.0 - prior))));
}

template <typename T>
std::vector<std::pair<std::string, Shape>> AeNet<T>::layer_shapes() const {
  std::vector<std::pair<std::string, Shape>> out;
  auto add = [&](const std::string& part, const nn::Sequential<T>& seq) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      out.emplace_back(part + "." + nn::to_string(seq.layer(i).spec().kind), seq.layer(i).output_shape());
    }
  };
  add("encoder", encoder_);
  add("fc_enc", fc_enc_);
  add("fc_dec", fc_dec_);
  add("decoder", decoder_);
  return out;
}

template <typename T>
nlohmann::json AeNet<T>::spec_json() const {
  return {{"n_labels", n_labels_},
          {"encoder", encoder_.spec_json()},
          {"fc_enc", fc_enc_.spec_json()},
          {"fc_dec", fc_dec_.spec_json()},
          {"decoder", decoder_.spec_json()}};
}

template <typename T>
std::uint64_t AeNet<T>::spec_hash() const {
  return fnv1a64(spec_json().dump());
}

template class AeNet<float>;
template class AeNet<double>;

// ---------------------------------------------------------------------------
// Model operations

std::string AutoencoderModel::id() const {
  std::uint64_t h = net_.spec_hash();
  for (const auto* p : net_.params()) {
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(p->data()), p->size() * sizeof(float)), h);
  }
  return hex64(h);
}

AutoencoderModel build(const AeConfig& config, const LabelVocabulary& vocabulary) {
  config.validate();
  if (vocabulary.size() != config.n_labels) {
    throw validation_error("InvalidConfig", "vocabulary has " + std::to_string(vocabulary.size()) +
                                                " labels but config.n_labels is " + std::to_string(config.n_labels));
  }
  AutoencoderModel m;
  m.config_ = config;
  m.vocabulary_ = vocabulary;
  m.net_ = AeNet<float>(config.geometry, config.n_labels, config.dropout);
  Rng rng(Rng::derive(config.seed, 0x1417));
  m.net_.init(rng);
  return m;
}

std::vector<AeExample> to_ae_examples(const std::vector<LabeledChunk>& chunks, int n_labels) {
  std::vector<AeExample> out;
  out.reserve(chunks.size());
  for (const auto& c : chunks) {
    std::optional<int> label;
    if (n_labels > 0 && c.label_index >= 0 && c.label_index < n_labels) label = c.label_index;
    out.push_back({c.chunk, label});
  }
  return out;
}

namespace {

struct PackedData {
  std::vector<float> structure;  // M x 1920
  std::vector<float> labels;     // M x n
};

PackedData pack(const std::vector<AeExample>& dataset, const Geometry& g, int n_labels) {
  if (g.structure_inputs() != kChunkFeatures) {
    throw nn::shape_mismatch("chunk inputs need an 8x8x30 geometry");
  }
  PackedData d;
  d.structure.resize(dataset.size() * kChunkFeatures);
  d.labels.assign(dataset.size() * static_cast<std::size_t>(n_labels), 0.0f);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    dataset[i].chunk.write_floats(std::span<float>(d.structure.data() + i * kChunkFeatures, kChunkFeatures));
    if (const auto& l = dataset[i].label) {
      if (*l < 0 || *l >= n_labels) {
        throw nn::shape_mismatch("label index " + std::to_string(*l) + " outside a " + std::to_string(n_labels) +
                                 "-label model");
      }
      d.labels[i * static_cast<std::size_t>(n_labels) + static_cast<std::size_t>(*l)] = 1.0f;
    }
  }
  return d;
}

void gather(const PackedData& d, std::span<const std::size_t> rows, const Geometry& g, int n_labels,
            Tensor<float>& structure, Tensor<float>& labels) {
  const int n = static_cast<int>(rows.size());
  structure.reset({n, g.height, g.width, g.channels});
  labels.reset({n, n_labels});
  for (int i = 0; i < n; ++i) {
    const auto r = rows[static_cast<std::size_t>(i)];
    std::copy_n(d.structure.data() + r * kChunkFeatures, kChunkFeatures, structure.data() + static_cast<std::size_t>(i) * kChunkFeatures);
    std::copy_n(d.labels.data() + r * static_cast<std::size_t>(n_labels), n_labels,
                labels.data() + static_cast<std::size_t>(i) * n_labels);
  }
}

}  // namespace

TrainSummary train(AutoencoderModel& model, const std::vector<AeExample>& dataset, const TrainOptions& options) {
  if (dataset.empty()) throw validation_error("EmptyDataset", "autoencoder training set is empty");
  const auto& config = model.config_;
  const int n_labels = config.n_labels;
  const auto& g = config.geometry;
  const PackedData data = pack(dataset, g, n_labels);

  auto& net = model.net_;
  auto params = net.params();
  nn::AdamState<float> adam;
  adam.config = config.adam;

  const std::size_t m = dataset.size();
  const double per_sample = static_cast<double>(kChunkFeatures + n_labels);
  std::vector<std::size_t> order(m);

  TrainSummary summary;
  double best = std::numeric_limits<double>::infinity();
  int stalled = 0;
  Tensor<float> x;
  Tensor<float> labels;
  const int first_epoch = model.epochs();
  for (int epoch = 0; epoch < config.convergence.max_epochs; ++epoch) {
    const std::uint64_t epoch_seed = Rng::derive(config.seed, static_cast<std::uint64_t>(first_epoch + epoch) + 1);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(epoch_seed);
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double epoch_sum = 0.0;
    for (std::size_t start = 0, batch = 0; start < m; start += static_cast<std::size_t>(config.batch_size), ++batch) {
      const std::size_t stop = std::min(m, start + static_cast<std::size_t>(config.batch_size));
      gather(data, std::span<const std::size_t>(order.data() + start, stop - start), g, n_labels, x, labels);
      const auto pass = net.forward(x, labels, true, Rng::derive(epoch_seed, batch));

      // Joint MSE over [structure | labels]; both gradients share one scale.
      const double count = static_cast<double>(stop - start) * per_sample;
      const float scale = static_cast<float>(2.0 / count);
      Tensor<float> d_structure(pass.structure().shape());
      Tensor<float> d_labels(pass.labels.shape());
      double sq = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const float diff = pass.structure()[i] - x[i];
        sq += static_cast<double>(diff) * diff;
        d_structure[i] = scale * diff;
      }
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const float diff = pass.labels[i] - labels[i];
        sq += static_cast<double>(diff) * diff;
        d_labels[i] = scale * diff;
      }
      epoch_sum += sq;

      auto grads = net.zero_grads();
      net.backward(pass, d_structure, d_labels, grads);
      nn::adam_step<float>(params, grads, adam);
    }
    const double loss = epoch_sum / (static_cast<double>(m) * per_sample);
    if (!std::isfinite(loss)) throw Error(ErrorKind::Runtime, "NonFiniteLoss", "training diverged");
    model.loss_log_.push_back(loss);
    ++summary.epochs;
    summary.final_loss = loss;

    const double improvement = std::isfinite(best) ? (best - loss) / best : 1.0;
    stalled = improvement < config.convergence.tolerance ? stalled + 1 : 0;
    best = std::min(best, loss);

    if (options.on_epoch && !options.on_epoch(summary.epochs, loss)) break;
    if (stalled >= config.convergence.patience) {
      summary.converged = true;
      break;
    }
  }
  return summary;
}

std::vector<Reconstruction> reconstruct_batch(const AutoencoderModel& model, const std::vector<AeExample>& inputs) {
  if (!model.trained()) throw Error(ErrorKind::Precondition, "NotTrained", "autoencoder is not trained");
  const auto& g = model.config().geometry;
  const int n_labels = model.config().n_labels;
  const PackedData data = pack(inputs, g, n_labels);
  std::vector<Reconstruction> out;
  out.reserve(inputs.size());
  constexpr std::size_t kBatch = 64;
  std::vector<std::size_t> rows;
  Tensor<float> x;
  Tensor<float> labels;
  for (std::size_t start = 0; start < inputs.size(); start += kBatch) {
    const std::size_t stop = std::min(inputs.size(), start + kBatch);
    rows.resize(stop - start);
    std::iota(rows.begin(), rows.end(), start);
    gather(data, rows, g, n_labels, x, labels);
    const auto pass = model.net().forward(x, labels, false, 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Reconstruction r;
      const float* s = pass.structure().data() + i * kChunkFeatures;
      r.structure.assign(s, s + kChunkFeatures);
      const float* l = pass.labels.data() + i * static_cast<std::size_t>(n_labels);
      r.labels.assign(l, l + n_labels);
      out.push_back(std::move(r));
    }
  }
  return out;
}

Reconstruction reconstruct(const AutoencoderModel& model, const Chunk& chunk, std::optional<int> label) {
  if (label && (*label < 0 || *label >= model.config().n_labels)) {
    throw validation_error("UnknownLabel", "label index " + std::to_string(*label) + " is not in the model vocabulary");
  }
  return std::move(reconstruct_batch(model, {{chunk, label}}).front());
}

Generation generate(const AutoencoderModel& model, const Chunk& context, int desired_label, double threshold) {
  if (!model.trained()) throw Error(ErrorKind::Precondition, "NotTrained", "autoencoder is not trained");
  if (model.config().n_labels == 0) {
    throw validation_error("UnknownLabel", "the no-labels model cannot be conditioned on a label");
  }
  if (threshold <= 0.0 || threshold >= 1.0) throw validation_error("InvalidThreshold", "threshold must lie in (0, 1)");
  auto r = reconstruct(model, context, desired_label);
  Generation gen;
  gen.grid = decode_chunk(r.structure, threshold);
  gen.label_head = r.labels;
  for (int i = 0; i < model.config().n_labels; ++i) {
    gen.predicted_labels.push_back({model.vocabulary().name_of(i), r.labels[static_cast<std::size_t>(i)]});
  }
  std::stable_sort(gen.predicted_labels.begin(), gen.predicted_labels.end(),
                   [](const LabelStrength& a, const LabelStrength& b) { return a.strength > b.strength; });
  gen.structure = std::move(r.structure);
  return gen;
}

AutoencoderModel transfer(const AutoencoderModel& parent, const AeConfig& config, const LabelVocabulary& vocabulary) {
  if (!parent.trained()) throw Error(ErrorKind::Precondition, "NotTrained", "transfer parent is not trained");
  if (parent.config().n_labels != 0) {
    throw validation_error("IncompatibleParent", "transfer parent must be a no-labels model");
  }
  if (!(parent.config().geometry == config.geometry)) {
    throw validation_error("IncompatibleParent", "parent conv geometry differs from the child configuration");
  }
  AutoencoderModel child = build(config, vocabulary);
  auto& cn = child.net_;
  const auto& pn = parent.net_;

  auto copy_all = [](nn::Sequential<float>& dst, const nn::Sequential<float>& src) {
    auto d = dst.params();
    auto s = src.params();
    for (std::size_t i = 0; i < d.size(); ++i) *d[i] = *s[i];
  };
  copy_all(cn.encoder(), pn.encoder());
  copy_all(cn.decoder(), pn.decoder());

  const int s = config.geometry.structure_features();
  const int e = config.geometry.embedding;
  const int n = config.n_labels;
  Rng rng(Rng::derive(config.seed, 0x7a5f));

  // fc_enc weights are [s + n, e]: the first s input rows come from the parent.
  {
    auto& w = *cn.fc_enc().params()[0];
    const auto& pw = *pn.fc_enc().params()[0];
    std::copy(pw.values().begin(), pw.values().end(), w.values().begin());
    for (std::size_t i = static_cast<std::size_t>(s) * e; i < w.size(); ++i) w[i] = static_cast<float>(0.01 * rng.normal());
    *cn.fc_enc().params()[1] = *pn.fc_enc().params()[1];
  }
  // fc_dec weights are [e, s + n]: the first s output columns come from the parent.
  {
    auto& w = *cn.fc_dec().params()[0];
    const auto& pw = *pn.fc_dec().params()[0];
    for (int r = 0; r < e; ++r) {
      for (int c = 0; c < s + n; ++c) {
        w[static_cast<std::size_t>(r) * (s + n) + c] =
            c < s ? pw[static_cast<std::size_t>(r) * s + c] : static_cast<float>(0.01 * rng.normal());
      }
    }
    auto& b = *cn.fc_dec().params()[1];
    const auto& pb = *pn.fc_dec().params()[1];
    for (int c = 0; c < s + n; ++c) b[static_cast<std::size_t>(c)] = c < s ? pb[static_cast<std::size_t>(c)] : 0.0f;
  }
  child.provenance_ = {"transfer", parent.id()};
  return child;
}

void AutoencoderModel::save(const std::string& prefix) const {
  const auto params = net_.params();
  nn::save_weights(prefix + ".weights", net_.spec_hash(), params);
  nlohmann::json manifest = {
      {"format", "xpcg-autoencoder"},
      {"version", 1},
      {"id", id()},
      {"spec_hash", hex64(net_.spec_hash())},
      {"config", config_.to_json()},
      {"vocabulary", vocabulary_.names()},
      {"vocabulary_hash", hex64(vocabulary_.hash())},
      {"provenance", {{"kind", provenance_.kind}, {"parent", provenance_.parent_id}}},
      {"final_loss", final_loss()},
      {"loss_log", loss_log_},
  };
  std::ofstream out(prefix + ".json");
  if (!out) throw Error(ErrorKind::Runtime, "IoError", "cannot write " + prefix + ".json");
  out << manifest.dump(2) << '\n';
}

AutoencoderModel AutoencoderModel::load(const std::string& prefix, const LabelVocabulary* expected) {
  std::ifstream in(prefix + ".json");
  if (!in) throw Error(ErrorKind::NotFound, "FileNotFound", "cannot open " + prefix + ".json");
  const auto manifest = nlohmann::json::parse(in);
  if (manifest.value("format", "") != "xpcg-autoencoder") {
    throw validation_error("InvalidModelFile", prefix + ".json is not an autoencoder manifest");
  }
  const LabelVocabulary vocab(manifest.at("vocabulary").get<std::vector<std::string>>());
  const auto stored = manifest.at("vocabulary_hash").get<std::string>();
  if (stored != hex64(vocab.hash()) || (expected != nullptr && stored != hex64(expected->hash()))) {
    throw Error(ErrorKind::Precondition, "VocabularyMismatch", "autoencoder vocabulary hash does not match");
  }
  AutoencoderModel m = build(AeConfig::from_json(manifest.at("config")), vocab);
  auto file = nn::load_weights(prefix + ".weights", m.net_.spec_hash());
  auto params = m.net_.params();
  if (file.tensors.size() != params.size()) throw validation_error("InvalidWeightFile", "tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (file.tensors[i].shape() != params[i]->shape()) throw validation_error("InvalidWeightFile", "tensor shape mismatch");
    *params[i] = std::move(file.tensors[i]);
  }
  m.loss_log_ = manifest.at("loss_log").get<std::vector<double>>();
  m.provenance_ = {manifest.at("provenance").at("kind").get<std::string>(),
                   manifest.at("provenance").at("parent").get<std::string>()};
  return m;
}

}  // namespace xpcg::ae
