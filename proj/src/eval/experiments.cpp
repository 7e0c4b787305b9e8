#include "xpcg/eval/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "xpcg/error.hpp"
#include "xpcg/eval/folds.hpp"
#include "xpcg/eval/stats.hpp"
#include "xpcg/hash.hpp"
#include "xpcg/rng.hpp"

namespace xpcg::eval {
namespace {

using Clock = std::chrono::steady_clock;

Error invalid(const std::string& why) { return validation_error("InvalidConfig", why); }

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

nlohmann::json forest_to_json(const forest::ForestConfig& f) {
  return {{"forest_size", f.forest_size},
          {"max_depth", f.max_depth},
          {"features_per_split", f.features_per_split},
          {"min_samples_split", f.min_samples_split},
          {"max_replace_fraction", f.max_replace_fraction}};
}

forest::ForestConfig forest_from_json(const nlohmann::json& j, forest::ForestConfig f) {
  f.forest_size = j.value("forest_size", f.forest_size);
  f.max_depth = j.value("max_depth", f.max_depth);
  f.features_per_split = j.value("features_per_split", f.features_per_split);
  f.min_samples_split = j.value("min_samples_split", f.min_samples_split);
  f.max_replace_fraction = j.value("max_replace_fraction", f.max_replace_fraction);
  return f;
}

nlohmann::json training_json(double dropout, const nn::AdamConfig& adam, int batch, const ae::ConvergenceRule& r) {
  return {{"dropout", dropout},
          {"adam", {{"lr", adam.lr}, {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}}},
          {"batch_size", batch},
          {"convergence",
           {{"tolerance", r.tolerance}, {"patience", r.patience}, {"max_epochs", r.max_epochs}}}};
}

bool wants(const ExperimentConfig& config, const std::string& variant) {
  return config.variants.empty() ||
         std::find(config.variants.begin(), config.variants.end(), variant) != config.variants.end();
}

std::vector<int> annotation_labels(const Corpus& corpus, const LabelVocabulary& vocab) {
  std::vector<int> labels;
  labels.reserve(corpus.annotations.size());
  for (const auto& a : corpus.annotations) labels.push_back(vocab.index_of(a.label));
  return labels;
}

bool overlaps_any(const PatternAnnotation& a, const std::vector<PatternAnnotation>& others, bool same_label) {
  return std::any_of(others.begin(), others.end(), [&](const PatternAnnotation& o) {
    return o.level_id == a.level_id && (!same_label || o.label == a.label) && o.overlaps(a.x, a.y, a.w, a.h);
  });
}

std::string cache_key(const std::string& what, std::uint64_t corpus_seed, std::uint64_t fold_seed,
                      const ae::AeConfig& config, std::size_t data_hash) {
  return what + "/" + hex64(corpus_seed) + "/" + hex64(fold_seed) + "/" + hex64(fnv1a64(config.to_json().dump())) +
         "/" + hex64(data_hash);
}

std::size_t dataset_hash(const std::vector<ae::AeExample>& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : data) {
    const std::string bits = e.chunk.bits.to_string();
    h = fnv1a64(bits, h);
    h = fnv1a64(e.label ? std::to_string(*e.label) : "-", h);
  }
  return static_cast<std::size_t>(h);
}

/// Trains (or fetches) one model. `make` builds the untrained model.
template <typename Make>
ExperimentCache::Entry train_cached(ExperimentCache* cache, const std::string& key,
                                    const std::vector<ae::AeExample>& data, Make make) {
  if (cache) {
    if (const auto* hit = cache->find(key)) return *hit;
  }
  const auto t0 = Clock::now();
  auto model = std::make_shared<ae::AutoencoderModel>(make());
  ExperimentCache::Entry entry;
  entry.summary = ae::train(*model, data);
  entry.seconds = seconds_since(t0);
  entry.model = std::move(model);
  if (cache) cache->put(key, entry);
  return entry;
}

std::vector<double> chunk_errors(const ae::AutoencoderModel& model, const std::vector<LabeledChunk>& test) {
  std::vector<ae::AeExample> inputs;
  inputs.reserve(test.size());
  for (const auto& t : test) {
    std::optional<int> label;
    if (model.config().n_labels > 0) label = t.label_index;
    inputs.push_back({t.chunk, label});
  }
  const auto recon = ae::reconstruct_batch(model, inputs);
  std::vector<double> errors;
  errors.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    errors.push_back(structure_error(recon[i].structure, test[i].chunk.to_floats()));
  }
  return errors;
}

struct VariantRun {
  std::vector<double> errors;  // per held-out chunk, all folds
  std::vector<double> fold_means;
  std::vector<double> epochs;
  std::vector<double> final_loss;
  std::vector<double> seconds;
};

void record(VariantRun& run, const ExperimentCache::Entry& entry, const std::vector<LabeledChunk>& test) {
  const auto errors = chunk_errors(*entry.model, test);
  run.errors.insert(run.errors.end(), errors.begin(), errors.end());
  run.fold_means.push_back(mean_std(errors).mean);
  run.epochs.push_back(entry.summary.epochs);
  run.final_loss.push_back(entry.summary.final_loss);
  run.seconds.push_back(entry.seconds);
}

/// Folds over the oracle annotations, stratified by label.
FoldPlan annotation_folds(const Corpus& corpus, const LabelVocabulary& vocab, const ExperimentConfig& config,
                          std::uint64_t seed) {
  return make_folds(annotation_labels(corpus, vocab), config.folds, Rng::derive(seed, 1000));
}

std::uint64_t fold_seed_of(std::uint64_t seed, int fold) { return Rng::derive(seed, static_cast<std::uint64_t>(fold)); }

/// The labeled models of one fold. Without any hand label the labeled
/// variants reduce to the no-labels configuration and data.
struct LabeledSetup {
  LabelVocabulary vocab;
  ae::AeConfig config;
  std::vector<ae::AeExample> hand;
  std::vector<ae::AeExample> with_auto;
  bool degenerate = false;
};

LabeledSetup labeled_setup(const FoldData& data, const LabelVocabulary& vocab, const ae::AeConfig& base) {
  LabeledSetup s;
  s.degenerate = data.hand.empty();
  s.vocab = s.degenerate ? LabelVocabulary{} : vocab;
  s.config = base;
  s.config.n_labels = s.vocab.size();
  if (s.degenerate) {
    s.hand = data.pool;
    s.with_auto = data.pool;
    return s;
  }
  s.hand = ae::to_ae_examples(data.hand, vocab.size());
  s.with_auto = s.hand;
  const auto autos = ae::to_ae_examples(data.autolabeled, vocab.size());
  s.with_auto.insert(s.with_auto.end(), autos.begin(), autos.end());
  return s;
}

void add_comparison(ExperimentReport& report, const std::string& a, const std::string& b,
                    const std::map<std::string, VariantRun>& runs) {
  if (!runs.count(a) || !runs.count(b)) return;
  Comparison c;
  c.a = a;
  c.b = b;
  c.metric = "structure_error";
  try {
    c.test = wilcoxon_signed_rank(runs.at(a).errors, runs.at(b).errors);
  } catch (const Error& e) {
    report.warnings.push_back(a + " vs " + b + ": " + e.what());
    return;
  }
  report.comparisons.push_back(c);
}

void add_rows(ExperimentReport& report, const std::vector<std::string>& order,
              const std::map<std::string, VariantRun>& runs) {
  for (const auto& name : order) {
    auto it = runs.find(name);
    if (it == runs.end()) continue;
    Row row;
    row.variant = name;
    row.cells.push_back(make_cell("structure_error", it->second.errors));
    row.cells.push_back(make_cell("epochs", it->second.epochs));
    report.rows.push_back(row);
    report.details["variants"][name] = {{"fold_mean_error", it->second.fold_means},
                                        {"final_loss", it->second.final_loss}};
    report.timings[name] = it->second.seconds;
  }
}

nlohmann::json fold_json(int fold, const FoldData& d, bool degenerate) {
  return {{"fold", fold},
          {"hand_examples", d.hand.size()},
          {"hand_annotations", d.hand_annotations.size()},
          {"auto_annotations", d.auto_annotations},
          {"auto_examples", d.autolabeled.size()},
          {"pool", d.pool.size()},
          {"test", d.test.size()},
          {"degenerate", degenerate}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (experiment != "classifier" && experiment != "generator" && experiment != "transfer") {
    throw invalid("unknown experiment '" + experiment + "'");
  }
  if (folds < 2) throw invalid("folds must be >= 2");
  if (draws < 1) throw invalid("draws must be >= 1");
  if (!(hand_fraction >= 0.0 && hand_fraction <= 1.0)) throw invalid("hand_fraction must lie in [0, 1]");
  if (pool_stride < 1 || autolabel_stride < 1) throw invalid("strides must be >= 1");
  if (pool_rows.empty()) throw invalid("pool_rows must not be empty");
  const auto& known = experiment == "transfer" ? kTransferVariants : kGeneratorVariants;
  if (experiment != "classifier") {
    for (const auto& v : variants) {
      if (std::find(known.begin(), known.end(), v) == known.end()) throw invalid("unknown variant '" + v + "'");
    }
  }
  if (forest.forest_size < 1 || forest.max_depth < 1 || forest.features_per_split < 1) {
    throw invalid("invalid forest settings");
  }
  corpus.validate();
  autoencoder.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j = {{"experiment", experiment},
                      {"corpus", corpus.to_json()},
                      {"folds", folds},
                      {"draws", draws},
                      {"hand_fraction", hand_fraction},
                      {"variants", variants},
                      {"pool_stride", pool_stride},
                      {"pool_rows", pool_rows},
                      {"autolabel_stride", autolabel_stride},
                      {"forest", forest_to_json(forest)},
                      {"autoencoder", autoencoder.to_json()},
                      {"cnn", training_json(cnn.dropout, cnn.adam, cnn.batch_size, cnn.convergence)}};
  if (!corpus_dir.empty()) j["corpus_dir"] = corpus_dir;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (!j.is_object()) throw invalid("experiment config must be an object");
  try {
    c.experiment = j.value("experiment", c.experiment);
    if (j.contains("corpus")) c.corpus = CorpusSpec::from_json(j["corpus"]);
    c.corpus_dir = j.value("corpus_dir", c.corpus_dir);
    c.folds = j.value("folds", c.folds);
    c.draws = j.value("draws", c.draws);
    c.hand_fraction = j.value("hand_fraction", c.hand_fraction);
    c.variants = j.value("variants", c.variants);
    c.pool_stride = j.value("pool_stride", c.pool_stride);
    c.pool_rows = j.value("pool_rows", c.pool_rows);
    c.autolabel_stride = j.value("autolabel_stride", c.autolabel_stride);
    if (j.contains("forest")) c.forest = forest_from_json(j["forest"], c.forest);
    if (j.contains("autoencoder")) c.autoencoder = ae::AeConfig::from_json(j["autoencoder"]);
    if (j.contains("cnn")) {
      const auto t = ae::AeConfig::from_json(j["cnn"]);
      c.cnn.dropout = t.dropout;
      c.cnn.adam = t.adam;
      c.cnn.batch_size = t.batch_size;
      c.cnn.convergence = t.convergence;
    }
  } catch (const nlohmann::json::exception& e) {
    throw invalid(e.what());
  }
  c.validate();
  return c;
}

const ExperimentCache::Entry* ExperimentCache::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

void ExperimentCache::put(const std::string& key, Entry entry) { entries_[key] = std::move(entry); }

std::uint64_t draw_seed(std::uint64_t seed, int draw) {
  return Rng::derive(seed, 500 + static_cast<std::uint64_t>(draw));
}

std::vector<LabeledChunk> classifier_examples(const Corpus& corpus, std::uint64_t seed) {
  const auto vocab = corpus.vocabulary();
  auto examples = annotations_to_examples(corpus.annotations, corpus.levels, vocab);
  const int negatives = default_negative_count(examples, vocab.size());
  auto none = sample_negatives(corpus.levels, corpus.annotations, negatives, seed, vocab.none_index());
  examples.insert(examples.end(), none.examples.begin(), none.examples.end());
  return examples;
}

FoldData prepare_fold(const Corpus& corpus, const std::vector<std::size_t>& train_annotations,
                      const std::vector<std::size_t>& test_annotations, const ExperimentConfig& config,
                      std::uint64_t fold_seed) {
  const auto vocab = corpus.vocabulary();
  FoldData d;

  std::vector<PatternAnnotation> test_anns;
  for (auto i : test_annotations) test_anns.push_back(corpus.annotations[i]);
  d.test = annotations_to_examples(test_anns, corpus.levels, vocab);

  // Reveal a share of each label's training annotations as hand labels.
  std::vector<std::vector<std::size_t>> by_label(static_cast<std::size_t>(vocab.size()));
  for (auto i : train_annotations) {
    by_label[static_cast<std::size_t>(vocab.index_of(corpus.annotations[i].label))].push_back(i);
  }
  Rng reveal(Rng::derive(fold_seed, 4));
  std::vector<std::size_t> revealed;
  for (auto& group : by_label) {
    if (group.empty() || config.hand_fraction <= 0.0) continue;
    reveal.shuffle(std::span<std::size_t>(group));
    const auto want = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(config.hand_fraction * static_cast<double>(group.size()) + 1e-9)));
    revealed.insert(revealed.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(want));
  }
  std::sort(revealed.begin(), revealed.end());
  for (auto i : revealed) d.hand_annotations.push_back(corpus.annotations[i]);
  d.hand = annotations_to_examples(d.hand_annotations, corpus.levels, vocab);

  // No-labels pool: every window on the stride grid clear of test regions.
  for (const auto& level : corpus.levels) {
    for (int x = 0; x + kChunkSize <= level.grid.width(); x += config.pool_stride) {
      for (int y : config.pool_rows) {
        if (y < 0 || y + kChunkSize > level.grid.height()) continue;
        PatternAnnotation window{level.id, x, y, kChunkSize, kChunkSize, ""};
        if (overlaps_any(window, test_anns, false)) continue;
        d.pool.push_back({encode_chunk(level.grid, x, y), std::nullopt});
      }
    }
  }

  if (d.hand.empty()) return d;

  // Label propagation from a forest trained on the hand labels.
  std::vector<PatternAnnotation> known = d.hand_annotations;
  known.insert(known.end(), test_anns.begin(), test_anns.end());
  auto rf_data = d.hand;
  const auto negatives = sample_negatives(corpus.levels, known, default_negative_count(d.hand, vocab.size()),
                                          Rng::derive(fold_seed, 3), vocab.none_index());
  rf_data.insert(rf_data.end(), negatives.examples.begin(), negatives.examples.end());
  auto fc = config.forest;
  fc.seed = Rng::derive(fold_seed, 2);
  std::vector<PatternAnnotation> kept;
  try {
    const auto rf = forest::fit(rf_data, vocab, fc);
    for (auto& a : forest::autolabel(rf, corpus.levels, config.autolabel_stride)) {
      if (overlaps_any(a, test_anns, false) || overlaps_any(a, d.hand_annotations, true)) continue;
      kept.push_back(a);
    }
  } catch (const Error& e) {
    if (e.code() != "SingleClass" && e.code() != "InsufficientData") throw;
  }
  d.auto_annotations = static_cast<int>(kept.size());
  d.autolabeled = annotations_to_examples(kept, corpus.levels, vocab);
  return d;
}

ExperimentReport run_classifier_experiment(const Corpus& corpus, const ExperimentConfig& config,
                                           std::uint64_t seed) {
  const auto vocab = corpus.vocabulary();
  const auto examples = classifier_examples(corpus, Rng::derive(seed, 2000));
  if (examples.size() < static_cast<std::size_t>(config.folds) * 2) {
    throw Error(ErrorKind::Validation, "InsufficientData", "too few examples for the fold count");
  }
  std::vector<int> labels;
  for (const auto& e : examples) labels.push_back(e.label_index);
  const auto plan = make_folds(labels, config.folds, Rng::derive(seed, 1000));

  ExperimentReport report;
  report.experiment = "classifier";
  report.parameters = config.to_json();
  report.parameters["seed"] = seed;
  report.parameters["corpus_seed"] = corpus.seed;
  if (!plan.stratified) report.warnings.push_back("a class has fewer examples than folds; folds are unstratified");

  std::vector<double> rf_train, rf_test, cnn_train, cnn_test, rf_time, cnn_time;
  nlohmann::json folds = nlohmann::json::array();
  for (int f = 0; f < config.folds; ++f) {
    const auto fseed = fold_seed_of(seed, f);
    std::vector<LabeledChunk> train, test;
    for (auto i : plan.train_indices(f)) train.push_back(examples[i]);
    for (auto i : plan.test_indices(f)) test.push_back(examples[i]);

    auto t0 = Clock::now();
    auto fc = config.forest;
    fc.seed = Rng::derive(fseed, 2);
    const auto rf = forest::fit(train, vocab, fc);
    rf_train.push_back(forest::training_accuracy(rf, train));
    rf_test.push_back(forest::training_accuracy(rf, test));
    rf_time.push_back(seconds_since(t0));

    t0 = Clock::now();
    auto cc = config.cnn;
    cc.seed = Rng::derive(fseed, 5);
    CnnClassifier cnn(cc, vocab.size() + 1);
    const auto summary = cnn.fit(train);
    cnn_train.push_back(accuracy_of(cnn, train));
    cnn_test.push_back(accuracy_of(cnn, test));
    cnn_time.push_back(seconds_since(t0));
    folds.push_back({{"fold", f}, {"train", train.size()}, {"test", test.size()}, {"cnn_epochs", summary.epochs}});
  }
  report.rows.push_back({"random-forest", {make_cell("train_accuracy", rf_train), make_cell("test_accuracy", rf_test)}});
  report.rows.push_back({"cnn-baseline", {make_cell("train_accuracy", cnn_train), make_cell("test_accuracy", cnn_test)}});
  report.details["folds"] = folds;
  report.details["stratified"] = plan.stratified;
  report.details["examples"] = examples.size();
  report.timings = {{"random-forest", rf_time}, {"cnn-baseline", cnn_time}};
  return report;
}

ExperimentReport run_generator_experiment(const Corpus& corpus, const ExperimentConfig& config, std::uint64_t seed,
                                          ExperimentCache* cache) {
  const auto vocab = corpus.vocabulary();
  if (vocab.size() < 2) throw Error(ErrorKind::Validation, "InsufficientData", "need at least two labels");
  const auto plan = annotation_folds(corpus, vocab, config, seed);

  ExperimentReport report;
  report.experiment = "generator";
  report.parameters = config.to_json();
  report.parameters["seed"] = seed;
  report.parameters["corpus_seed"] = corpus.seed;
  if (!plan.stratified) report.warnings.push_back("a label has fewer annotations than folds; folds are unstratified");

  std::map<std::string, VariantRun> runs;
  nlohmann::json folds = nlohmann::json::array();
  for (int f = 0; f < config.folds; ++f) {
    const auto fseed = fold_seed_of(seed, f);
    const auto data = prepare_fold(corpus, plan.train_indices(f), plan.test_indices(f), config, fseed);
    auto base = config.autoencoder;
    base.seed = Rng::derive(fseed, 1);
    base.n_labels = 0;
    const auto setup = labeled_setup(data, vocab, base);
    folds.push_back(fold_json(f, data, setup.degenerate));

    if (wants(config, "no-labels")) {
      const auto e = train_cached(cache, cache_key("no-labels", corpus.seed, fseed, base, dataset_hash(data.pool)),
                                  data.pool, [&] { return ae::build(base); });
      record(runs["no-labels"], e, data.test);
    }
    if (wants(config, "no-auto-tag")) {
      const auto e = train_cached(cache, cache_key(setup.degenerate ? "no-labels" : "scratch", corpus.seed, fseed,
                                                   setup.config, dataset_hash(setup.hand)),
                                  setup.hand, [&] { return ae::build(setup.config, setup.vocab); });
      record(runs["no-auto-tag"], e, data.test);
    }
    if (wants(config, "full")) {
      const auto e = train_cached(cache, cache_key(setup.degenerate ? "no-labels" : "scratch", corpus.seed, fseed,
                                                   setup.config, dataset_hash(setup.with_auto)),
                                  setup.with_auto, [&] { return ae::build(setup.config, setup.vocab); });
      record(runs["full"], e, data.test);
    }
  }
  add_rows(report, kGeneratorVariants, runs);
  add_comparison(report, "full", "no-auto-tag", runs);
  add_comparison(report, "full", "no-labels", runs);
  report.details["folds"] = folds;
  return report;
}

ExperimentReport run_transfer_experiment(const Corpus& corpus, const ExperimentConfig& config, std::uint64_t seed,
                                         ExperimentCache* cache) {
  const auto vocab = corpus.vocabulary();
  if (vocab.size() < 1) throw Error(ErrorKind::Validation, "InsufficientData", "need at least one label");
  const auto plan = annotation_folds(corpus, vocab, config, seed);

  ExperimentReport report;
  report.experiment = "transfer";
  report.parameters = config.to_json();
  report.parameters["seed"] = seed;
  report.parameters["corpus_seed"] = corpus.seed;
  if (!plan.stratified) report.warnings.push_back("a label has fewer annotations than folds; folds are unstratified");

  std::map<std::string, VariantRun> runs;
  nlohmann::json folds = nlohmann::json::array();
  for (int f = 0; f < config.folds; ++f) {
    const auto fseed = fold_seed_of(seed, f);
    const auto data = prepare_fold(corpus, plan.train_indices(f), plan.test_indices(f), config, fseed);
    auto base = config.autoencoder;
    base.seed = Rng::derive(fseed, 1);
    base.n_labels = 0;
    const auto setup = labeled_setup(data, vocab, base);
    folds.push_back(fold_json(f, data, setup.degenerate));

    // The parent is needed by both transfer variants.
    const auto parent = train_cached(cache, cache_key("no-labels", corpus.seed, fseed, base, dataset_hash(data.pool)),
                                     data.pool, [&] { return ae::build(base); });
    if (wants(config, "no-labels")) record(runs["no-labels"], parent, data.test);

    const auto child = [&](const std::string& name, const std::vector<ae::AeExample>& dataset) {
      if (setup.degenerate) return parent;
      return train_cached(cache, cache_key(name, corpus.seed, fseed, setup.config, dataset_hash(dataset)), dataset,
                          [&] { return ae::transfer(*parent.model, setup.config, setup.vocab); });
    };
    if (wants(config, "transfer-no-auto")) record(runs["transfer-no-auto"], child("transfer", setup.hand), data.test);
    if (wants(config, "transfer-with-auto")) {
      record(runs["transfer-with-auto"], child("transfer", setup.with_auto), data.test);
    }
    if (wants(config, "full")) {
      const auto e = train_cached(cache, cache_key(setup.degenerate ? "no-labels" : "scratch", corpus.seed, fseed,
                                                   setup.config, dataset_hash(setup.with_auto)),
                                  setup.with_auto, [&] { return ae::build(setup.config, setup.vocab); });
      record(runs["full"], e, data.test);
    }
  }
  add_rows(report, kTransferVariants, runs);
  add_comparison(report, "transfer-with-auto", "transfer-no-auto", runs);
  add_comparison(report, "full", "transfer-with-auto", runs);
  add_comparison(report, "transfer-with-auto", "no-labels", runs);

  if (runs.count("full")) {
    double full_epochs = 0.0;
    for (double e : runs["full"].epochs) full_epochs += e;
    for (const char* name : {"transfer-no-auto", "transfer-with-auto"}) {
      if (!runs.count(name)) continue;
      double epochs = 0.0;
      for (double e : runs[name].epochs) epochs += e;
      const double ratio = full_epochs > 0.0 ? epochs / full_epochs : 0.0;
      report.checks.push_back({std::string(name) + " epochs / full epochs <= 0.1", ratio <= 0.1,
                               "ratio " + format_number(ratio)});
    }
  }
  report.details["folds"] = folds;
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& config, std::uint64_t seed, ExperimentCache* cache) {
  config.validate();
  const auto run_one = [&](const Corpus& corpus, std::uint64_t s) {
    if (config.experiment == "classifier") return run_classifier_experiment(corpus, config, s);
    if (config.experiment == "generator") return run_generator_experiment(corpus, config, s, cache);
    return run_transfer_experiment(corpus, config, s, cache);
  };

  if (!config.corpus_dir.empty()) return run_one(Corpus::load(config.corpus_dir), seed);

  std::vector<ExperimentReport> draws;
  for (int d = 0; d < config.draws; ++d) {
    const auto s = draw_seed(seed, d);
    draws.push_back(run_one(make_synthetic_corpus(config.corpus, s), s));
  }
  if (draws.size() == 1) return draws.front();

  // Rows hold one value per draw: that draw's mean.
  ExperimentReport report;
  report.experiment = config.experiment;
  report.parameters = config.to_json();
  report.parameters["seed"] = seed;
  for (const auto& proto : draws.front().rows) {
    Row row;
    row.variant = proto.variant;
    for (const auto& cell : proto.cells) {
      std::vector<double> values;
      for (const auto& r : draws) values.push_back(r.mean(proto.variant, cell.metric));
      row.cells.push_back(make_cell(cell.metric, values));
    }
    report.rows.push_back(row);
  }
  report.details["draws"] = nlohmann::json::array();
  report.timings["draws"] = nlohmann::json::array();
  for (std::size_t d = 0; d < draws.size(); ++d) {
    for (const auto& c : draws[d].checks) {
      report.checks.push_back({"draw " + std::to_string(d) + ": " + c.name, c.passed, c.detail});
    }
    for (const auto& w : draws[d].warnings) report.warnings.push_back("draw " + std::to_string(d) + ": " + w);
    report.details["draws"].push_back(draws[d].to_json());
    report.timings["draws"].push_back(draws[d].timings);
  }
  return report;
}

}  // namespace xpcg::eval
