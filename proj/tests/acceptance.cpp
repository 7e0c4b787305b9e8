// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Exits nonzero when any criterion fails. An argument restricts the
// run to criteria whose name contains it.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "feedback_fixture.hpp"
#include "grad_fixture.hpp"
#include "rank_oracle.hpp"
#include "xpcg/autoencoder.hpp"
#include "xpcg/eval/corpus.hpp"
#include "xpcg/eval/experiments.hpp"
#include "xpcg/eval/rank_tests.hpp"
#include "xpcg/eval/stats.hpp"
#include "xpcg/forest.hpp"
#include "xpcg/service.hpp"

using namespace xpcg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 1;

struct Outcome {
  bool passed = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    passed = passed && ok;
    notes.push_back(std::string(ok ? "" : "!") + what);
  }
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

void log(const std::string& msg) {
  static const auto t0 = std::chrono::steady_clock::now();
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "[" << static_cast<int>(t) << "s] " << msg << std::endl;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every regular file under dir, keyed by relative path.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("xpcg-accept-" + std::to_string(::getpid()) + "-" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

eval::ExperimentReport draw_report(const eval::ExperimentReport& r, std::size_t d) {
  return eval::ExperimentReport::from_json(r.details["draws"][d]);
}

const eval::Comparison* comparison(const eval::ExperimentReport& r, const std::string& a, const std::string& b) {
  for (const auto& c : r.comparisons) {
    if (c.a == a && c.b == b) return &c;
  }
  return nullptr;
}

Outcome gradients() {
  Outcome o;
  double worst = 0.0;
  for (const auto& c : gradfix::layer_cases()) {
    const auto r = gradfix::check_layer(c.spec, c.in, 17);
    worst = std::max(worst, r.max_relative_error);
    if (!(r.checked > 0 && r.max_relative_error < 1e-4)) o.require(false, std::string(c.name) + " " + num(r.max_relative_error));
  }
  o.require(worst < 1e-4, std::to_string(gradfix::layer_cases().size()) + " layer kinds max rel " + num(worst));
  for (int n : {0, 2}) {
    const auto r = gradfix::check_mini_autoencoder(n);
    o.require(r.checked > 100 && r.max_relative_error < 1e-4,
              "mini autoencoder n=" + std::to_string(n) + " max rel " + num(r.max_relative_error));
  }
  return o;
}

Outcome metric_arithmetic() {
  Outcome o;
  std::vector<float> target(1920, 0.0f), pred(1920, 0.0f);
  target[5] = target[700] = 1.0f;
  bool exact = eval::structure_error(pred, pred) == 0;
  auto k = target;
  for (int i = 0; i < 37; ++i) k[static_cast<std::size_t>(100 + i)] = 1.0f - k[static_cast<std::size_t>(100 + i)];
  exact = exact && eval::structure_error(k, target) == 37;
  std::vector<float> inverse(1920);
  for (std::size_t i = 0; i < 1920; ++i) inverse[i] = 1.0f - target[i];
  exact = exact && eval::structure_error(inverse, target) == 1920;
  o.require(exact, "structure_error 0/k/1920");

  Rng rng(3);
  int cases = 0, mismatches = 0;
  const auto draw = [&](std::size_t n, int levels) {
    std::vector<double> v(n);
    for (auto& x : v) x = static_cast<double>(rng.below(static_cast<std::uint64_t>(levels)));
    return v;
  };
  const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
  for (int trial = 0; trial < 400; ++trial) {
    for (std::size_t n = 5; n <= 8; ++n) {
      const auto a = draw(n, 2 + static_cast<int>(rng.below(8)));
      const auto b = draw(n, 2 + static_cast<int>(rng.below(8)));
      double w = 0;
      const double p = oracle::brute_signed_rank(a, b, &w);
      const auto r = eval::wilcoxon_signed_rank(a, b);
      ++cases;
      if (r.zero_differences) {
        mismatches += r.p_value != 1.0;
      } else {
        mismatches += !(r.exact && close(r.statistic, w) && close(r.p_value, p));
      }
    }
    for (std::size_t n1 = 1; n1 <= 8; ++n1) {
      const std::size_t n2 = 1 + rng.below(8);
      const int levels = 2 + static_cast<int>(rng.below(10));
      const auto a = draw(n1, levels);
      const auto b = draw(n2, levels);
      double u = 0;
      const double p = oracle::brute_mann_whitney(a, b, &u);
      const auto r = eval::mann_whitney_u(a, b);
      ++cases;
      mismatches += !(r.exact && close(r.statistic, u) && close(r.p_value, p));
    }
  }
  o.require(mismatches == 0, "rank tests vs enumeration " + std::to_string(cases - mismatches) + "/" +
                                 std::to_string(cases));
  return o;
}

Outcome classifier_regime() {
  Outcome o;
  eval::ExperimentConfig c;
  c.experiment = "classifier";
  c.draws = 3;
  const auto r = eval::run_experiment(c, kSeed);
  double min_train = 1.0;
  int wins = 0;
  std::string per_draw;
  for (std::size_t d = 0; d < 3; ++d) {
    const auto dr = draw_report(r, d);
    for (double v : dr.find("random-forest")->find("train_accuracy")->values) min_train = std::min(min_train, v);
    const double rf = dr.mean("random-forest", "test_accuracy");
    const double cnn = dr.mean("cnn-baseline", "test_accuracy");
    wins += rf > cnn;
    per_draw += " " + num(rf) + "/" + num(cnn);
  }
  o.require(min_train >= 0.84, "min RF train acc over folds " + num(min_train) + " >= 0.84");
  o.require(wins >= 2, "RF test > CNN test in " + std::to_string(wins) + "/3 draws (rf/cnn:" + per_draw + ")");
  return o;
}

Outcome generator_direction(eval::ExperimentCache& cache) {
  Outcome o;
  eval::ExperimentConfig dense;
  dense.experiment = "generator";
  dense.hand_fraction = 1.0;
  log("generator experiment, all hand labels");
  const auto d = eval::run_experiment(dense, kSeed, &cache);
  int min_labeled = 1 << 30;
  for (const auto& f : d.details["folds"]) min_labeled = std::min(min_labeled, f["hand_examples"].get<int>());
  const double d_full = d.mean("full", "structure_error");
  const double d_none = d.mean("no-labels", "structure_error");
  o.require(min_labeled >= 38, "labeled examples per fold >= " + std::to_string(min_labeled));
  o.require(d_full < d_none, "dense full " + num(d_full) + " < no-labels " + num(d_none));

  auto sparse = dense;
  sparse.hand_fraction = 0.15;
  log("generator experiment, 15% hand labels");
  const auto s = eval::run_experiment(sparse, kSeed, &cache);
  const double s_full = s.mean("full", "structure_error");
  const double s_noauto = s.mean("no-auto-tag", "structure_error");
  const double ratio = s_noauto / std::max(s_full, 1e-12);
  o.require(ratio >= 3.0, "sparse no-auto-tag/full " + num(s_noauto) + "/" + num(s_full) + " = " + num(ratio) + " >= 3");
  const auto* cmp = comparison(s, "full", "no-auto-tag");
  const double p = cmp ? cmp->test.p_value : 1.0;
  o.require(cmp && p < 0.01, "signed-rank p " + num(p) + " < 0.01");
  return o;
}

// Full and transfer generator jobs on the same session data.
double service_epoch_ratio(const eval::Corpus& corpus, std::string* detail) {
  service::ServiceConfig sc;
  sc.data_dir = scratch("svc-ratio").string();
  service::Service svc(sc);
  const std::string sid = svc.create_session({{"seed", kSeed}})["id"];
  std::map<std::string, std::string> remap;
  for (const auto& l : corpus.levels) {
    std::string text = serialize_level(l.grid);
    remap[l.id] = svc.upload_level(sid, {{"text", text}})["id"];
  }
  svc.put_vocabulary(sid, {{"names", corpus.vocabulary().names()}});
  auto anns = corpus.annotations;
  for (auto& a : anns) a.level_id = remap.at(a.level_id);
  svc.post_annotations(sid, {{"annotations", annotations_to_json(anns)}});
  const auto run = [&](const char* mode) {
    const auto job = svc.wait_job(sid, svc.train_generator(sid, mode)["job"]["id"]);
    return job["state"] == "done" ? job["result"]["epochs"].get<double>() : -1.0;
  };
  const double full = run("full");
  const double transfer = run("transfer");
  fs::remove_all(sc.data_dir);
  *detail = num(transfer) + "/" + num(full);
  return full > 0 && transfer >= 0 ? transfer / full : 1e9;
}

Outcome transfer_direction(eval::ExperimentCache& cache) {
  Outcome o;
  eval::ExperimentConfig c;
  c.experiment = "transfer";
  c.hand_fraction = 0.15;
  c.draws = 6;
  log("transfer experiment, 6 draws");
  const auto r = eval::run_experiment(c, kSeed, &cache);
  const double twa = r.mean("transfer-with-auto", "structure_error");
  const double tna = r.mean("transfer-no-auto", "structure_error");
  o.require(twa <= tna, "transfer-with-auto " + num(twa) + " <= transfer-no-auto " + num(tna));
  int ordered = 0;
  std::string per_draw;
  for (std::size_t d = 0; d < 6; ++d) {
    const auto dr = draw_report(r, d);
    const double f = dr.mean("full", "structure_error");
    const double t = dr.mean("transfer-with-auto", "structure_error");
    const double n = dr.mean("no-labels", "structure_error");
    ordered += f <= t && t <= n;
    per_draw += " " + num(f) + "/" + num(t) + "/" + num(n);
  }
  o.require(ordered >= 4, "full <= transfer-with-auto <= no-labels in " + std::to_string(ordered) +
                              "/6 draws (f/t/n:" + per_draw + ")");
  const double full_epochs = r.mean("full", "epochs");
  for (const char* v : {"transfer-no-auto", "transfer-with-auto"}) {
    const double ratio = r.mean(v, "epochs") / full_epochs;
    o.require(ratio <= 0.1, std::string(v) + " epochs/full " + num(ratio) + " <= 0.1");
  }
  log("service full vs transfer jobs");
  std::string detail;
  const double sr = service_epoch_ratio(eval::make_synthetic_corpus(c.corpus, eval::draw_seed(kSeed, 0)), &detail);
  o.require(sr <= 0.1, "service transfer/full epochs " + detail + " = " + num(sr) + " <= 0.1");
  return o;
}

Outcome incremental_contract() {
  Outcome o;
  int size_ok = 0, cap_ok = 0, corrected = 0, kept = 0;
  for (int i = 0; i < 100; ++i) {
    const auto f = fixture::make_feedback(static_cast<std::uint64_t>(i));
    size_ok += f.update.model.trees().size() == 100;
    cap_ok += f.update.replaced.size() <= 20;
    corrected += f.corrected();
    kept += f.probes_kept();
  }
  o.require(size_ok == 100, "forest size 100 in " + std::to_string(size_ok) + "/100");
  o.require(cap_ok == 100, "<= 20 trees replaced in " + std::to_string(cap_ok) + "/100");
  o.require(corrected >= 95, "corrected example fixed in " + std::to_string(corrected) + "/100 (need 95)");
  o.require(kept >= 90, "probes kept in " + std::to_string(kept) + "/100 (need 90)");
  return o;
}

Outcome determinism() {
  Outcome o;
  const auto root = scratch("det");
  eval::CorpusSpec spec;
  spec.levels = 4;
  spec.width = 100;
  spec.patterns = {{"staircase", 8}, {"gap", 8}, {"enemy-pair", 8}};

  const auto corpus = eval::make_synthetic_corpus(spec, 7);
  corpus.save((root / "c1").string());
  eval::make_synthetic_corpus(spec, 7).save((root / "c2").string());
  o.require(tree(root / "c1") == tree(root / "c2"), "corpus");

  const auto vocab = corpus.vocabulary();
  const auto examples = eval::classifier_examples(corpus, 3);
  forest::ForestConfig fc;
  fc.seed = 11;
  const auto f1 = forest::fit(examples, vocab, fc);
  const auto f2 = forest::fit(examples, vocab, fc);
  f1.save((root / "f1.json").string());
  f2.save((root / "f2.json").string());
  o.require(slurp(root / "f1.json") == slurp(root / "f2.json"), "forest");

  o.require(annotations_to_json(forest::autolabel(f1, corpus.levels, 2)) ==
                annotations_to_json(forest::autolabel(f2, corpus.levels, 2)),
            "autolabel");

  const LabeledChunk flip{examples.front().chunk, vocab.none_index()};
  const auto u1 = forest::incremental_update(f1, {flip}, examples);
  const auto u2 = forest::incremental_update(f2, {flip}, examples);
  o.require(u1.replaced == u2.replaced && u1.model.to_json() == u2.model.to_json(), "incremental update");

  const auto data = ae::to_ae_examples(annotations_to_examples(corpus.annotations, corpus.levels, vocab), vocab.size());
  ae::AeConfig ac;
  ac.n_labels = vocab.size();
  ac.seed = 5;
  ac.convergence.max_epochs = 5;
  for (const char* name : {"a1", "a2"}) {
    auto m = ae::build(ac, vocab);
    ae::train(m, data);
    fs::create_directories(root / name);
    m.save((root / name / "generator").string());
  }
  o.require(tree(root / "a1") == tree(root / "a2"), "autoencoder training");

  eval::ExperimentConfig ec;
  ec.corpus = spec;
  ec.forest.forest_size = 20;
  ec.autoencoder.convergence.max_epochs = 3;
  ec.cnn.convergence.max_epochs = 3;
  bool experiments = true;
  for (const char* kind : {"classifier", "generator", "transfer"}) {
    ec.experiment = kind;
    experiments = experiments && eval::run_experiment(ec, 9).to_json().dump() == eval::run_experiment(ec, 9).to_json().dump();
  }
  o.require(experiments, "experiment reports");

  // crash-restart: a fresh service on the same directory answers identically
  service::ServiceConfig sc;
  sc.data_dir = (root / "svc").string();
  sc.autoencoder.convergence.max_epochs = 10;
  std::string sid;
  std::vector<std::string> ids;
  std::vector<json> probes, before;
  {
    service::Service svc(sc);
    sid = svc.create_session({{"seed", 4}})["id"];
    std::map<std::string, std::string> remap;
    for (const auto& l : corpus.levels) {
      remap[l.id] = svc.upload_level(sid, {{"text", serialize_level(l.grid)}})["id"];
      ids.push_back(remap[l.id]);
    }
    svc.put_vocabulary(sid, {{"names", vocab.names()}});
    auto anns = corpus.annotations;
    for (auto& a : anns) a.level_id = remap.at(a.level_id);
    svc.post_annotations(sid, {{"annotations", annotations_to_json(anns)}});
    svc.wait_job(sid, svc.train_classifier(sid)["job"]["id"]);
    svc.wait_job(sid, svc.train_generator(sid, "full")["job"]["id"]);
    Rng rng(8);
    for (int i = 0; i < 50; ++i) {
      probes.push_back({{"level", ids[rng.below(ids.size())]},
                        {"x", static_cast<int>(rng.below(93))},
                        {"y", static_cast<int>(rng.below(7))},
                        {"label", vocab.names()[rng.below(vocab.size())]}});
    }
    for (const auto& p : probes) before.push_back({svc.predict(sid, p), svc.generate(sid, p)});
  }
  service::Service restarted(sc);
  int same = 0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    same += json{restarted.predict(sid, probes[i]), restarted.generate(sid, probes[i])} == before[i];
  }
  o.require(same == 50, "service restart " + std::to_string(same) + "/50 probes identical");
  fs::remove_all(root);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string only = argc > 1 ? argv[1] : "";
  eval::ExperimentCache cache;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradients},
      {"metric arithmetic", metric_arithmetic},
      {"incremental retrain contract", incremental_contract},
      {"determinism and persistence", determinism},
      {"classifier regime", classifier_regime},
      {"generator variants direction", [&] { return generator_direction(cache); }},
      {"transfer direction", [&] { return transfer_direction(cache); }},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (name.find(only) == std::string::npos) continue;
    log(name);
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.require(false, std::string("threw: ") + e.what());
    }
    std::string notes;
    for (const auto& n : o.notes) notes += (notes.empty() ? "" : "; ") + n;
    std::cout << (o.passed ? "PASS " : "FAIL ") << name << ": " << notes << std::endl;
    failed += !o.passed;
  }
  return failed == 0 ? 0 : 1;
}
