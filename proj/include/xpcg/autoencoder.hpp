#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xpcg/labels.hpp"
#include "xpcg/nn/adam.hpp"
#include "xpcg/nn/sequential.hpp"

namespace xpcg::ae {

inline constexpr int kEmbeddingSize = 512;

/// Spatial geometry of the network. The production model is 8x8x30 with 32
/// filters per conv layer, so the flattened conv output (4*4*32) equals the
/// 512-wide embedding. Smaller geometries exist for gradient checks.
struct Geometry {
  int height = 8;
  int width = 8;
  int channels = kTileClasses;
  int filters1 = 32;
  int filters2 = 32;
  int kernel = 3;
  int embedding = kEmbeddingSize;

  int structure_inputs() const { return height * width * channels; }
  /// Features left after the stride-2 conv.
  int structure_features() const { return (height / 2) * (width / 2) * filters2; }
  bool operator==(const Geometry&) const = default;
};

/// Stop once the relative improvement of the epoch loss over the best loss so
/// far stays below `tolerance` for `patience` consecutive epochs, or at
/// `max_epochs`.
struct ConvergenceRule {
  double tolerance = 1e-4;
  int patience = 10;
  int max_epochs = 2000;
};

struct AeConfig {
  int n_labels = 0;
  Geometry geometry;
  double dropout = 0.3;
  nn::AdamConfig adam;
  int batch_size = 32;
  ConvergenceRule convergence;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;
  nlohmann::json to_json() const;
  static AeConfig from_json(const nlohmann::json& j);
};

/// The label-conditioned autoencoder graph:
///   structure -> conv(relu) -> dropout -> conv stride 2 (relu) -> flatten
///   [flatten | labels] -> dense(relu) = embedding
///   embedding -> dense -> [relu structure part | sigmoid label head]
///   structure part -> reshape -> upsample x2 -> deconv(relu) -> deconv(sigmoid)
/// With n_labels == 0 the label input and label head are absent.
template <typename T>
class AeNet {
 public:
  struct Pass {
    nn::Trace<T> encoder;
    nn::Trace<T> fc_enc;
    nn::Trace<T> fc_dec;
    nn::Tensor<T> decoded;  // fc_dec output after the split activation
    nn::Trace<T> decoder;
    const nn::Tensor<T>& structure() const { return decoder.output(); }
    nn::Tensor<T> labels;
    const nn::Tensor<T>& embedding() const { return fc_enc.output(); }
  };

  AeNet() = default;
  AeNet(const Geometry& geometry, int n_labels, double dropout);

  const Geometry& geometry() const { return geometry_; }
  int n_labels() const { return n_labels_; }

  /// structure: [N, H, W, C]; labels: [N, n] (ignored when n == 0).
  Pass forward(const nn::Tensor<T>& structure, const nn::Tensor<T>& labels, bool train, std::uint64_t seed) const;
  /// Accumulates gradients of the loss with respect to every parameter.
  void backward(const Pass& pass, const nn::Tensor<T>& d_structure, const nn::Tensor<T>& d_labels,
                std::vector<nn::Tensor<T>>& grads) const;

  std::vector<nn::Tensor<T>*> params();
  std::vector<const nn::Tensor<T>*> params() const;
  std::vector<nn::Tensor<T>> zero_grads() const;

  void init(Rng& rng);

  /// Declared per-layer output shapes, for the shape audit.
  std::vector<std::pair<std::string, nn::Shape>> layer_shapes() const;

  nn::Sequential<T>& encoder() { return encoder_; }
  nn::Sequential<T>& fc_enc() { return fc_enc_; }
  nn::Sequential<T>& fc_dec() { return fc_dec_; }
  nn::Sequential<T>& decoder() { return decoder_; }
  const nn::Sequential<T>& encoder() const { return encoder_; }
  const nn::Sequential<T>& fc_enc() const { return fc_enc_; }
  const nn::Sequential<T>& fc_dec() const { return fc_dec_; }
  const nn::Sequential<T>& decoder() const { return decoder_; }

  nlohmann::json spec_json() const;
  std::uint64_t spec_hash() const;

  int input_features() const { return geometry_.structure_inputs() + n_labels_; }

 private:
  Geometry geometry_;
  int n_labels_ = 0;
  nn::Sequential<T> encoder_;
  nn::Sequential<T> fc_enc_;
  nn::Sequential<T> fc_dec_;
  nn::Sequential<T> decoder_;
};

struct Provenance {
  std::string kind = "scratch";  // scratch | transfer
  std::string parent_id;
};

/// One training pair. `label` is a vocabulary index, or nullopt for "none"
/// (all-zero label vector).
struct AeExample {
  Chunk chunk;
  std::optional<int> label;
};

struct TrainOptions {
  /// Called after every epoch; returning false stops training early.
  std::function<bool(int epoch, double loss)> on_epoch;
};

struct TrainSummary {
  int epochs = 0;
  bool converged = false;
  double final_loss = 0.0;
};

class AutoencoderModel;
TrainSummary train(AutoencoderModel& model, const std::vector<AeExample>& dataset, const TrainOptions& options);

class AutoencoderModel {
 public:
  AutoencoderModel() = default;

  const AeConfig& config() const { return config_; }
  const LabelVocabulary& vocabulary() const { return vocabulary_; }
  const AeNet<float>& net() const { return net_; }
  AeNet<float>& net() { return net_; }
  const std::vector<double>& loss_log() const { return loss_log_; }
  const Provenance& provenance() const { return provenance_; }
  bool trained() const { return !loss_log_.empty(); }
  /// Content hash of the weights; stable across save/load.
  std::string id() const;
  int epochs() const { return static_cast<int>(loss_log_.size()); }
  double final_loss() const { return loss_log_.empty() ? 0.0 : loss_log_.back(); }

  /// Writes `<prefix>.weights` and the `<prefix>.json` manifest.
  void save(const std::string& prefix) const;
  static AutoencoderModel load(const std::string& prefix, const LabelVocabulary* expected = nullptr);

 private:
  friend AutoencoderModel build(const AeConfig&, const LabelVocabulary&);
  friend TrainSummary train(AutoencoderModel&, const std::vector<AeExample>&, const TrainOptions&);
  friend AutoencoderModel transfer(const AutoencoderModel&, const AeConfig&, const LabelVocabulary&);

  AeConfig config_;
  LabelVocabulary vocabulary_;
  AeNet<float> net_;
  std::vector<double> loss_log_;
  Provenance provenance_;
};

/// Untrained model with freshly initialised weights. `vocabulary` must have
/// config.n_labels entries (empty for the no-labels variant).
AutoencoderModel build(const AeConfig& config, const LabelVocabulary& vocabulary = {});

/// Minimises the joint MSE over [structure | label head] against the input
/// pair with Adam until the convergence rule fires. Appends every epoch loss
/// to the model's log. Throws EmptyDataset or ShapeMismatch.
TrainSummary train(AutoencoderModel& model, const std::vector<AeExample>& dataset, const TrainOptions& options = {});

struct Reconstruction {
  std::vector<float> structure;  // 1920 values in [0, 1]
  std::vector<float> labels;     // n values in [0, 1]
};

/// Infer-mode pass. `label` selects the one-hot label input; nullopt feeds
/// an all-zero vector.
Reconstruction reconstruct(const AutoencoderModel& model, const Chunk& chunk, std::optional<int> label);

/// Batched infer-mode reconstruction.
std::vector<Reconstruction> reconstruct_batch(const AutoencoderModel& model, const std::vector<AeExample>& inputs);

struct LabelStrength {
  std::string name;
  double strength = 0.0;
};

struct Generation {
  LevelGrid grid;
  std::vector<LabelStrength> predicted_labels;  // strongest first
  std::vector<float> label_head;                // raw, in vocabulary order
  std::vector<float> structure;
};

/// Reconstructs `context` conditioned on a one-hot `desired_label`, decodes
/// the structure at `threshold` and reports the label head as the model's
/// account of what it produced. Throws NotTrained or UnknownLabel.
Generation generate(const AutoencoderModel& model, const Chunk& context, int desired_label, double threshold = 0.5);

/// Student-teacher initialisation: copies a trained no-labels parent into a
/// labeled architecture. Conv and deconv weights are copied verbatim; the FC
/// blocks shared by both shapes are copied and the rows/columns added for the
/// label features are drawn from N(0, 0.01^2). Throws IncompatibleParent.
AutoencoderModel transfer(const AutoencoderModel& parent, const AeConfig& config, const LabelVocabulary& vocabulary);

/// Converts labeled chunks (label index n meaning none) into training pairs.
std::vector<AeExample> to_ae_examples(const std::vector<LabeledChunk>& chunks, int n_labels);

}  // namespace xpcg::ae
