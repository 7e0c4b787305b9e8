#include <doctest.h>

#include <map>

#include "xpcg/error.hpp"
#include "xpcg/eval/experiments.hpp"
#include "xpcg/eval/folds.hpp"

using namespace xpcg;
using namespace xpcg::eval;

namespace {

ExperimentConfig tiny(const std::string& experiment) {
  ExperimentConfig c;
  c.experiment = experiment;
  c.corpus.levels = 4;
  c.corpus.width = 100;
  c.corpus.patterns = {{"staircase", 8}, {"gap", 8}, {"enemy-pair", 8}};
  c.forest.forest_size = 20;
  c.autoencoder.convergence.max_epochs = 3;
  c.cnn.convergence.max_epochs = 3;
  return c;
}

std::vector<double> values(const ExperimentReport& r, const std::string& variant, const std::string& metric) {
  const auto* row = r.find(variant);
  REQUIRE(row != nullptr);
  const auto* cell = row->find(metric);
  REQUIRE(cell != nullptr);
  return cell->values;
}

bool overlaps(const PatternAnnotation& a, const Chunk& c) {
  return c.origin && c.origin->level_id == a.level_id && a.overlaps(c.origin->x, c.origin->y, 8, 8);
}

}  // namespace

TEST_CASE("experiment config json") {
  auto c = tiny("generator");
  c.hand_fraction = 0.15;
  c.variants = {"full", "no-labels"};
  const auto back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());

  const auto partial = ExperimentConfig::from_json({{"experiment", "transfer"}, {"autoencoder", {{"convergence", {{"max_epochs", 7}}}}}});
  CHECK(partial.experiment == "transfer");
  CHECK(partial.autoencoder.convergence.max_epochs == 7);
  CHECK(partial.folds == 3);

  auto bad = tiny("nonsense");
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = tiny("generator");
  bad.variants = {"full", "made-up"};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = tiny("generator");
  bad.folds = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = tiny("generator");
  bad.hand_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("prepare_fold keeps test regions out of training data") {
  const auto cfg = tiny("generator");
  const auto corpus = make_synthetic_corpus(cfg.corpus, 3);
  std::vector<int> labels;
  for (const auto& a : corpus.annotations) labels.push_back(corpus.vocabulary().index_of(a.label));
  const auto plan = make_folds(labels, 3, 5);
  for (double hf : {1.0, 0.15, 0.0}) {
    auto c = cfg;
    c.hand_fraction = hf;
    const auto d = prepare_fold(corpus, plan.train_indices(0), plan.test_indices(0), c, 77);
    std::vector<PatternAnnotation> test;
    for (auto i : plan.test_indices(0)) test.push_back(corpus.annotations[i]);
    CHECK(d.test.size() >= test.size());
    CHECK(!d.pool.empty());
    for (const auto& e : d.pool) {
      for (const auto& t : test) CHECK_FALSE(overlaps(t, e.chunk));
    }
    for (const auto& e : d.autolabeled) {
      for (const auto& t : test) CHECK_FALSE(overlaps(t, e.chunk));
    }

    std::map<std::string, int> train_count, hand_count;
    for (auto i : plan.train_indices(0)) ++train_count[corpus.annotations[i].label];
    for (const auto& a : d.hand_annotations) ++hand_count[a.label];
    for (const auto& [label, n] : train_count) {
      CAPTURE(label);
      CAPTURE(hf);
      if (hf <= 0.0) {
        CHECK(hand_count[label] == 0);
      } else {
        CHECK(hand_count[label] == std::max(1, static_cast<int>(std::floor(hf * n + 1e-9))));
      }
    }
    if (hf <= 0.0) {
      CHECK(d.hand.empty());
      CHECK(d.autolabeled.empty());
    }
    const auto again = prepare_fold(corpus, plan.train_indices(0), plan.test_indices(0), c, 77);
    CHECK(again.hand_annotations == d.hand_annotations);
    CHECK(again.auto_annotations == d.auto_annotations);
  }
}

TEST_CASE("classifier experiment") {
  const auto cfg = tiny("classifier");
  const auto corpus = make_synthetic_corpus(cfg.corpus, 4);
  const auto a = run_classifier_experiment(corpus, cfg, 1);
  const auto b = run_classifier_experiment(corpus, cfg, 1);
  CHECK(a.to_json().dump() == b.to_json().dump());
  for (const auto* v : {"random-forest", "cnn-baseline"}) {
    CHECK(values(a, v, "train_accuracy").size() == 3);
    CHECK(values(a, v, "test_accuracy").size() == 3);
    for (double x : values(a, v, "test_accuracy")) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  }
  CHECK(a.mean("random-forest", "train_accuracy") >= 0.84);
  CHECK(a.details["stratified"] == true);
  CHECK(a.timings.contains("random-forest"));

  const auto re = recompute(ExperimentReport::from_json(a.to_json()));
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    for (std::size_t c = 0; c < a.rows[i].cells.size(); ++c) {
      CHECK(std::abs(re.rows[i].cells[c].mean - a.rows[i].cells[c].mean) < 1e-9);
      CHECK(std::abs(re.rows[i].cells[c].std - a.rows[i].cells[c].std) < 1e-9);
    }
  }
}

TEST_CASE("generator experiment with no hand labels collapses onto no-labels") {
  auto cfg = tiny("generator");
  cfg.hand_fraction = 0.0;
  const auto corpus = make_synthetic_corpus(cfg.corpus, 5);
  const auto r = run_generator_experiment(corpus, cfg, 2);
  const auto base = values(r, "no-labels", "structure_error");
  CHECK(!base.empty());
  CHECK(values(r, "full", "structure_error") == base);
  CHECK(values(r, "no-auto-tag", "structure_error") == base);
  CHECK(values(r, "full", "epochs") == values(r, "no-labels", "epochs"));
  for (const auto& f : r.details["folds"]) CHECK(f["degenerate"] == true);
}

TEST_CASE("generator experiment shape and cache reuse") {
  auto cfg = tiny("generator");
  const auto corpus = make_synthetic_corpus(cfg.corpus, 6);
  ExperimentCache cache;
  const auto a = run_generator_experiment(corpus, cfg, 3, &cache);
  for (const auto& v : kGeneratorVariants) {
    CHECK(values(a, v, "epochs").size() == 3);
    for (double e : values(a, v, "structure_error")) {
      CHECK(e >= 0.0);
      CHECK(e <= 1920.0);
    }
  }
  CHECK(values(a, "full", "structure_error").size() == values(a, "no-labels", "structure_error").size());
  REQUIRE(a.comparisons.size() == 2);
  for (const auto& c : a.comparisons) {
    CHECK(c.a == "full");
    CHECK(c.test.test == "wilcoxon-signed-rank");
  }
  const auto b = run_generator_experiment(corpus, cfg, 3, &cache);
  CHECK(a.to_json().dump() == b.to_json().dump());
  const auto c = run_generator_experiment(corpus, cfg, 3);
  CHECK(a.to_json().dump() == c.to_json().dump());
}

TEST_CASE("transfer experiment") {
  auto cfg = tiny("transfer");
  const auto corpus = make_synthetic_corpus(cfg.corpus, 7);
  const auto r = run_transfer_experiment(corpus, cfg, 4);
  for (const auto& v : kTransferVariants) CHECK(r.find(v) != nullptr);
  CHECK(r.comparisons.size() == 3);
  int ratio_checks = 0;
  for (const auto& c : r.checks) ratio_checks += c.name.find("epochs / full epochs") != std::string::npos;
  CHECK(ratio_checks == 2);
}

TEST_CASE("several draws aggregate per-draw means") {
  auto cfg = tiny("classifier");
  cfg.draws = 2;
  const auto r = run_experiment(cfg, 9);
  REQUIRE(r.details["draws"].size() == 2);
  std::vector<double> means;
  for (const auto& d : r.details["draws"]) {
    means.push_back(ExperimentReport::from_json(d).mean("random-forest", "test_accuracy"));
  }
  CHECK(values(r, "random-forest", "test_accuracy") == means);
  CHECK(draw_seed(9, 0) != draw_seed(9, 1));
}
