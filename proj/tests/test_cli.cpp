#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "xpcg/eval/corpus.hpp"
#include "xpcg/eval/experiments.hpp"

using namespace xpcg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(XPCG_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path workdir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("xpcg-cli-" + std::to_string(::getpid()) + "-" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("usage errors") {
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("synth-corpus --seed 1").code == 2);
  CHECK(cli("evaluate --config x.json --seed 1 --out /tmp/x --format yaml").code == 2);
  CHECK(cli("--help").code == 0);
}

TEST_CASE("synth-corpus writes an oracle-consistent corpus") {
  const auto d = workdir("synth");
  const auto r = cli("synth-corpus --spec default --seed 1 --out " + (d / "a").string());
  REQUIRE(r.code == 0);
  const auto corpus = eval::Corpus::load((d / "a").string());
  CHECK(corpus.levels.size() == 20);
  CHECK(corpus.annotations.size() == 120);
  for (const auto& a : corpus.annotations) {
    const auto* level = find_level(corpus.levels, a.level_id);
    REQUIRE(level != nullptr);
    CHECK(eval::rule_holds(level->grid, a));
  }
  REQUIRE(cli("synth-corpus --spec default --seed 1 --out " + (d / "b").string()).code == 0);
  CHECK(slurp(d / "a" / "annotations.json") == slurp(d / "b" / "annotations.json"));
  for (const auto& l : corpus.levels) {
    CHECK(slurp(d / "a" / "levels" / (l.id + ".lvl")) == slurp(d / "b" / "levels" / (l.id + ".lvl")));
  }

  write(d / "bad.json", R"({"levels": 0})");
  CHECK(cli("synth-corpus --spec " + (d / "bad.json").string() + " --seed 1 --out " + (d / "c").string()).code == 3);
  CHECK(cli("synth-corpus --spec " + (d / "missing.json").string() + " --seed 1 --out " + (d / "c").string()).code ==
        3);
  fs::remove_all(d);
}

TEST_CASE("train, autolabel, generate") {
  const auto d = workdir("pipe");
  const auto s = [&](const std::string& x) { return (d / x).string(); };
  write(d / "spec.json",
        R"({"levels": 3, "width": 80, "patterns": [{"pattern": "staircase", "count": 6}, {"pattern": "gap", "count": 6}, {"pattern": "enemy-pair", "count": 6}]})");
  REQUIRE(cli("synth-corpus --spec " + s("spec.json") + " --seed 4 --out " + s("corpus")).code == 0);

  auto r = cli("train-classifier --corpus " + s("corpus") + " --seed 2 --out " + s("cls"));
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["training_accuracy"].get<double>() >= 0.9);
  CHECK(fs::exists(d / "cls" / "classifier.json"));

  r = cli("autolabel --corpus " + s("corpus") + " --model " + s("cls/classifier.json") + " --stride 4 --out " +
           s("auto"));
  REQUIRE(r.code == 0);
  const auto merged = annotations_from_json(json::parse(slurp(d / "auto" / "annotations.json")));
  CHECK(merged.size() == json::parse(r.out)["merged"].get<std::size_t>());
  CHECK(merged.size() >= 18);

  r = cli("train-generator --corpus " + s("corpus") + " --annotations " + s("auto/annotations.json") +
           " --mode full --max-epochs 3 --seed 3 --out " + s("full"));
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["epochs"] == 3);
  CHECK(slurp(d / "full" / "loss.csv").rfind("epoch,loss\n", 0) == 0);

  REQUIRE(cli("train-generator --corpus " + s("corpus") + " --mode no-labels --max-epochs 2 --seed 3 --out " +
               s("parent"))
              .code == 0);
  CHECK(cli("train-generator --corpus " + s("corpus") + " --mode transfer --max-epochs 2 --seed 3 --out " + s("tr"))
            .code == 3);
  REQUIRE(cli("train-generator --corpus " + s("corpus") + " --mode transfer --parent " + s("parent/generator") +
               " --max-epochs 2 --seed 3 --out " + s("tr"))
              .code == 0);

  const auto corpus = eval::Corpus::load(s("corpus"));
  const auto level = s("corpus/levels/" + corpus.levels[0].id + ".lvl");
  r = cli("generate --model " + s("full/generator") + " --level " + level + " --x 8 --y 2 --label gap --out " +
           s("gen"));
  REQUIRE(r.code == 0);
  const auto g = json::parse(r.out);
  CHECK(g["predicted_labels"].size() == 3);
  CHECK(read_level_file(s("gen/generated.lvl")).width() == 8);
  CHECK(cli("generate --model " + s("tr/generator") + " --level " + level +
             " --x 8 --y 2 --label gap --format table --out " + s("gen2"))
            .code == 0);
  CHECK(cli("generate --model " + s("full/generator") + " --level " + level +
             " --x 8 --y 2 --label pipe --out " + s("gen3"))
            .code == 3);
  CHECK(cli("generate --model " + s("full/generator") + " --level " + level +
             " --x 78 --y 2 --label gap --out " + s("gen3"))
            .code == 3);
  fs::remove_all(d);
}

TEST_CASE("evaluate is deterministic") {
  const auto d = workdir("eval");
  eval::ExperimentConfig c;
  c.experiment = "classifier";
  c.corpus.levels = 4;
  c.corpus.width = 100;
  c.corpus.patterns = {{"staircase", 8}, {"gap", 8}, {"enemy-pair", 8}};
  c.forest.forest_size = 20;
  c.cnn.convergence.max_epochs = 3;
  write(d / "config.json", c.to_json().dump());
  const auto cfg = (d / "config.json").string();
  REQUIRE(cli("evaluate --config " + cfg + " --seed 7 --out " + (d / "a").string()).code == 0);
  REQUIRE(cli("evaluate --config " + cfg + " --seed 7 --format table --out " + (d / "b").string()).code == 0);
  CHECK(slurp(d / "a" / "report.json") == slurp(d / "b" / "report.json"));
  CHECK(slurp(d / "a" / "report.txt") == slurp(d / "b" / "report.txt"));
  const auto report = json::parse(slurp(d / "a" / "report.json"));
  CHECK(report.contains("rows"));
  CHECK(fs::exists(d / "a" / "timings.json"));
  write(d / "bad.json", R"({"experiment": "nonsense"})");
  CHECK(cli("evaluate --config " + (d / "bad.json").string() + " --seed 7 --out " + (d / "c").string()).code == 3);
  fs::remove_all(d);
}
