#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "xpcg/autoencoder.hpp"
#include "xpcg/error.hpp"
#include "xpcg/eval/corpus.hpp"
#include "xpcg/eval/experiments.hpp"
#include "xpcg/eval/report.hpp"
#include "xpcg/forest.hpp"
#include "xpcg/http_api.hpp"
#include "xpcg/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xpcg;

namespace {

constexpr int kUsage = 2;
constexpr int kValidation = 3;
constexpr int kRuntime = 4;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("MissingFile", "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw validation_error("MalformedJson", path + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorKind::Runtime, "IoError", "cannot write " + path.string());
}

std::vector<PatternAnnotation> hand_only(const std::vector<PatternAnnotation>& all) {
  std::vector<PatternAnnotation> out;
  for (const auto& a : all) {
    if (a.origin == AnnotationOrigin::Hand) out.push_back(a);
  }
  return out;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? v : fallback;
}

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "json";
};

int synth_corpus(const std::string& spec_arg, const Common& c) {
  const auto spec = spec_arg == "default" ? eval::CorpusSpec::default_spec()
                                          : eval::CorpusSpec::from_json(read_json_file(spec_arg));
  const auto corpus = eval::make_synthetic_corpus(spec, c.seed);
  for (const auto& a : corpus.annotations) {
    const auto* level = find_level(corpus.levels, a.level_id);
    if (!level || !eval::rule_holds(level->grid, a)) {
      throw Error(ErrorKind::Runtime, "OracleViolation", "annotation on " + a.level_id + " fails its rule");
    }
  }
  corpus.save(c.out);
  std::cout << json{{"levels", corpus.levels.size()}, {"annotations", corpus.annotations.size()}, {"out", c.out}}.dump()
            << '\n';
  return 0;
}

int train_classifier(const std::string& corpus_dir, int negatives, const Common& c) {
  const auto corpus = eval::Corpus::load(corpus_dir);
  const auto vocab = corpus.vocabulary();
  const auto hand = hand_only(corpus.annotations);
  auto examples = annotations_to_examples(hand, corpus.levels, vocab);
  if (negatives < 0) negatives = default_negative_count(examples, vocab.size());
  const auto none = sample_negatives(corpus.levels, corpus.annotations, negatives, Rng::derive(c.seed, 1),
                                     vocab.none_index());
  examples.insert(examples.end(), none.examples.begin(), none.examples.end());
  forest::ForestConfig fc;
  fc.seed = c.seed;
  const auto model = forest::fit(examples, vocab, fc);
  fs::create_directories(c.out);
  model.save((fs::path(c.out) / "classifier.json").string());
  const json summary = {{"examples", examples.size()},
                        {"negatives", none.examples.size()},
                        {"negatives_short", none.short_supply},
                        {"training_accuracy", forest::training_accuracy(model, examples)}};
  write_file(fs::path(c.out) / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump() << '\n';
  return 0;
}

int autolabel(const std::string& corpus_dir, const std::string& model_path, int stride, const Common& c) {
  const auto corpus = eval::Corpus::load(corpus_dir);
  const auto vocab = corpus.vocabulary();
  const auto model = forest::ForestModel::load(model_path, &vocab);
  const auto found = forest::autolabel(model, corpus.levels, stride);
  auto merged = hand_only(corpus.annotations);
  const auto hand_count = merged.size();
  for (const auto& a : found) {
    const bool duplicate = std::any_of(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(hand_count),
                                       [&](const PatternAnnotation& h) {
                                         return h.level_id == a.level_id && h.label == a.label &&
                                                h.overlaps(a.x, a.y, a.w, a.h);
                                       });
    if (!duplicate) merged.push_back(a);
  }
  write_file(fs::path(c.out) / "auto_annotations.json", annotations_to_json(found).dump(2) + "\n");
  write_file(fs::path(c.out) / "annotations.json", annotations_to_json(merged).dump(2) + "\n");
  std::cout << json{{"auto", found.size()}, {"merged", merged.size()}}.dump() << '\n';
  return 0;
}

int train_generator(const std::string& corpus_dir, const std::string& annotations_path, const std::string& mode,
                    const std::string& parent_prefix, const std::string& config_path, int max_epochs,
                    const Common& c) {
  auto corpus = eval::Corpus::load(corpus_dir);
  if (!annotations_path.empty()) corpus.annotations = annotations_from_json(read_json_file(annotations_path));
  const auto vocab = corpus.vocabulary();
  ae::AeConfig cfg = config_path.empty() ? ae::AeConfig{} : ae::AeConfig::from_json(read_json_file(config_path));
  if (max_epochs > 0) cfg.convergence.max_epochs = max_epochs;
  cfg.seed = c.seed;

  std::vector<ae::AeExample> data;
  ae::AutoencoderModel model;
  if (mode == "no-labels") {
    cfg.n_labels = 0;
    for (const auto& level : corpus.levels) {
      for (int x = 0; x + kChunkSize <= level.grid.width(); x += 8) {
        for (int y : {0, 3, 6}) {
          if (y + kChunkSize <= level.grid.height()) data.push_back({encode_chunk(level.grid, x, y), std::nullopt});
        }
      }
    }
    model = ae::build(cfg);
  } else {
    cfg.n_labels = vocab.size();
    data = ae::to_ae_examples(annotations_to_examples(corpus.annotations, corpus.levels, vocab), vocab.size());
    if (mode == "transfer") {
      if (parent_prefix.empty()) throw validation_error("MissingParent", "--parent is required for transfer");
      model = ae::transfer(ae::AutoencoderModel::load(parent_prefix), cfg, vocab);
    } else {
      model = ae::build(cfg, vocab);
    }
  }
  const auto summary = ae::train(model, data);
  fs::create_directories(c.out);
  model.save((fs::path(c.out) / "generator").string());
  std::string csv = "epoch,loss\n";
  for (std::size_t i = 0; i < model.loss_log().size(); ++i) {
    csv += std::to_string(i + 1) + "," + eval::format_number(model.loss_log()[i]) + "\n";
  }
  write_file(fs::path(c.out) / "loss.csv", csv);
  std::cout << json{{"mode", mode},
                    {"examples", data.size()},
                    {"epochs", summary.epochs},
                    {"converged", summary.converged},
                    {"final_loss", summary.final_loss},
                    {"model", model.id()}}
                   .dump()
            << '\n';
  return 0;
}

int generate(const std::string& model_prefix, const std::string& level_path, int x, int y, const std::string& label,
             double threshold, const Common& c) {
  const auto model = ae::AutoencoderModel::load(model_prefix);
  const auto idx = model.vocabulary().find(label);
  if (!idx) throw validation_error("UnknownLabel", "label '" + label + "' is not in the model vocabulary");
  const auto grid = read_level_file(level_path);
  const auto g = ae::generate(model, encode_chunk(grid, x, y), *idx, threshold);
  json labels = json::array();
  for (const auto& p : g.predicted_labels) labels.push_back({{"name", p.name}, {"strength", p.strength}});
  const json out = {{"tiles", serialize_level(g.grid)}, {"predicted_labels", labels}, {"label_head", g.label_head}};
  write_file(fs::path(c.out) / "generated.lvl", serialize_level(g.grid));
  write_file(fs::path(c.out) / "generation.json", out.dump(2) + "\n");
  if (c.format == "table") {
    std::cout << serialize_level(g.grid);
    for (const auto& p : g.predicted_labels) std::cout << p.name << "  " << eval::format_number(p.strength) << '\n';
  } else {
    std::cout << out.dump() << '\n';
  }
  return 0;
}

int evaluate(const std::string& config_path, const Common& c) {
  const auto config = eval::ExperimentConfig::from_json(read_json_file(config_path));
  const auto report = eval::run_experiment(config, c.seed);
  const auto table = eval::render_table(report);
  write_file(fs::path(c.out) / "report.json", report.to_json().dump(2) + "\n");
  write_file(fs::path(c.out) / "report.txt", table);
  write_file(fs::path(c.out) / "timings.json", report.timings.dump(2) + "\n");
  std::cout << (c.format == "table" ? table : report.to_json().dump(2) + "\n");
  return 0;
}

int serve(service::ServiceConfig config, const std::string& host, int port) {
  service::Service svc(std::move(config));
  std::cerr << "listening on " << host << ":" << port << '\n';
  if (service::serve(svc, host, port) != 0) {
    throw Error(ErrorKind::Runtime, "BindFailed", "cannot listen on port " + std::to_string(port));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pattern-labeled tile level generation: corpus synthesis, training, generation and evaluation"};
  app.require_subcommand(1);

  Common c;
  const auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", c.seed, "RNG seed")->required(); };
  const auto add_out = [&](CLI::App* sub) { sub->add_option("--out", c.out, "Output directory")->required(); };
  const auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", c.format, "Report format")->check(CLI::IsMember({"json", "table"}));
  };

  std::string spec = "default";
  auto* synth = app.add_subcommand("synth-corpus", "Write a synthetic oracle-labeled corpus");
  synth->add_option("--spec", spec, "'default' or a corpus spec JSON file");
  add_seed(synth);
  add_out(synth);

  std::string corpus_dir;
  int negatives = -1;
  auto* tc = app.add_subcommand("train-classifier", "Fit the random forest on hand annotations");
  tc->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  tc->add_option("--negatives", negatives, "None examples to sample (default: mean per label)");
  add_seed(tc);
  add_out(tc);

  std::string model_path;
  int stride = 2;
  auto* al = app.add_subcommand("autolabel", "Label every level window with a trained forest");
  al->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  al->add_option("--model", model_path, "classifier.json")->required();
  al->add_option("--stride", stride, "Window stride")->check(CLI::PositiveNumber);
  add_out(al);

  std::string annotations_path, mode = "full", parent, ae_config;
  int max_epochs = 0;
  auto* tg = app.add_subcommand("train-generator", "Train the autoencoder");
  tg->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  tg->add_option("--annotations", annotations_path, "Annotations to train on (default: the corpus')");
  tg->add_option("--mode", mode, "full | no-labels | transfer")->check(CLI::IsMember({"full", "no-labels", "transfer"}));
  tg->add_option("--parent", parent, "No-labels model prefix for transfer");
  tg->add_option("--config", ae_config, "Autoencoder config JSON");
  tg->add_option("--max-epochs", max_epochs, "Override the epoch cap");
  add_seed(tg);
  add_out(tg);

  std::string level_path, label;
  int x = 0, y = 0;
  double threshold = 0.5;
  auto* gen = app.add_subcommand("generate", "Generate a labeled 8x8 chunk from a context window");
  gen->add_option("--model", model_path, "Generator model prefix")->required();
  gen->add_option("--level", level_path, "Context level file")->required();
  gen->add_option("--x", x, "Window column")->required();
  gen->add_option("--y", y, "Window row")->required();
  gen->add_option("--label", label, "Desired pattern label")->required();
  gen->add_option("--threshold", threshold, "Decode threshold")->check(CLI::Range(0.0, 1.0));
  add_out(gen);
  add_format(gen);

  std::string config_path;
  auto* ev = app.add_subcommand("evaluate", "Run an experiment and write its report");
  ev->add_option("--config", config_path, "Experiment config JSON")->required();
  add_seed(ev);
  add_out(ev);
  add_format(ev);

  service::ServiceConfig sc;
  sc.data_dir = env_or("XPCG_DATA_DIR", "data");
  sc.max_parallel_jobs = std::atoi(env_or("XPCG_MAX_PARALLEL_JOBS", "1").c_str());
  int port = std::atoi(env_or("XPCG_PORT", "8080").c_str());
  std::string host = env_or("XPCG_HOST", "127.0.0.1");
  int serve_epochs = 0;
  auto* sv = app.add_subcommand("serve", "Run the REST service");
  sv->add_option("--port", port, "Port");
  sv->add_option("--host", host, "Bind address");
  sv->add_option("--data-dir", sc.data_dir, "Session storage directory");
  sv->add_option("--max-parallel-jobs", sc.max_parallel_jobs, "Worker threads")->check(CLI::PositiveNumber);
  sv->add_option("--max-epochs", serve_epochs, "Override the generator epoch cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*synth) return synth_corpus(spec, c);
    if (*tc) return train_classifier(corpus_dir, negatives, c);
    if (*al) return autolabel(corpus_dir, model_path, stride, c);
    if (*tg) return train_generator(corpus_dir, annotations_path, mode, parent, ae_config, max_epochs, c);
    if (*gen) return generate(model_path, level_path, x, y, label, threshold, c);
    if (*ev) return evaluate(config_path, c);
    if (*sv) {
      if (serve_epochs > 0) sc.autoencoder.convergence.max_epochs = serve_epochs;
      return serve(sc, host, port);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << '\n';
    return e.kind() == ErrorKind::Runtime ? kRuntime : kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
