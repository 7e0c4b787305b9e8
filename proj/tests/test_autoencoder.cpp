#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "xpcg/autoencoder.hpp"
#include "xpcg/error.hpp"
#include "xpcg/eval/corpus.hpp"
#include "xpcg/eval/stats.hpp"

using namespace xpcg;

namespace {

ae::AeConfig config(int n, int max_epochs, std::uint64_t seed = 1) {
  ae::AeConfig c;
  c.n_labels = n;
  c.convergence.max_epochs = max_epochs;
  c.seed = seed;
  return c;
}

LabelVocabulary vocab(int n) {
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("p" + std::to_string(i));
  return LabelVocabulary(names);
}

std::vector<ae::AeExample> corpus_examples(int count, std::uint64_t seed, int n_labels) {
  auto spec = eval::CorpusSpec::default_spec();
  spec.levels = 3;
  spec.width = 100;
  spec.patterns = {{"staircase", 6}, {"gap", 6}, {"enemy-pair", 6}};
  const auto c = eval::make_synthetic_corpus(spec, seed);
  std::vector<ae::AeExample> out;
  Rng rng(seed);
  while (static_cast<int>(out.size()) < count) {
    const auto& level = c.levels[rng.below(c.levels.size())];
    const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(level.grid.width() - 7)));
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(level.grid.height() - 7)));
    std::optional<int> label;
    if (n_labels > 0 && rng.chance(0.7)) label = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_labels)));
    out.push_back({encode_chunk(level.grid, x, y), label});
  }
  return out;
}

std::string code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

bool same(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

}  // namespace

TEST_CASE("input width and embedding size") {
  for (int n : {0, 3, 21}) {
    CAPTURE(n);
    const auto m = ae::build(config(n, 1), vocab(n));
    CHECK(m.net().input_features() == 1920 + n);
    CHECK(m.net().fc_enc().output_shape() == nn::Shape{512});
    CHECK(m.net().fc_enc().input_shape() == nn::Shape{512 + n});
    CHECK(m.net().fc_dec().output_shape() == nn::Shape{512 + n});
    CHECK(m.net().encoder().output_shape() == nn::Shape{4, 4, 32});
    CHECK(m.net().decoder().output_shape() == nn::Shape{8, 8, 30});
  }
  CHECK(ae::build(config(0, 1)).net().input_features() == 1920);
  CHECK(ae::build(config(21, 1), vocab(21)).net().input_features() == 1941);
}

TEST_CASE("declared layer shapes match computed shapes") {
  const auto m = ae::build(config(4, 1), vocab(4));
  const auto shapes = m.net().layer_shapes();
  REQUIRE(!shapes.empty());
  Rng rng(1);
  nn::Tensor<float> s({1, 8, 8, 30});
  nn::Tensor<float> l({1, 4});
  const auto pass = m.net().forward(s, l, false, 0);
  CHECK(pass.embedding().shape() == nn::Shape{1, 512});
  CHECK(pass.structure().shape() == nn::Shape{1, 8, 8, 30});
  CHECK(pass.labels.shape() == nn::Shape{1, 4});
  for (std::size_t i = 0; i + 1 < pass.encoder.acts.size(); ++i) {
    CHECK(std::vector<int>(pass.encoder.acts[i + 1].shape().begin() + 1, pass.encoder.acts[i + 1].shape().end()) ==
          m.net().encoder().layer(i).output_shape());
  }
  for (std::size_t i = 0; i + 1 < pass.decoder.acts.size(); ++i) {
    CHECK(std::vector<int>(pass.decoder.acts[i + 1].shape().begin() + 1, pass.decoder.acts[i + 1].shape().end()) ==
          m.net().decoder().layer(i).output_shape());
  }
}

TEST_CASE("config validation and label count") {
  CHECK_THROWS_AS(ae::build(config(2, 1), vocab(3)), Error);
  auto bad = config(0, 1);
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = config(0, 1);
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  auto m = ae::build(config(0, 1));
  CHECK(code_of([&] { ae::train(m, {}); }) == "EmptyDataset");
}

TEST_CASE("memorizes a single repeated chunk") {
  const auto c = eval::make_synthetic_corpus(eval::CorpusSpec::default_spec(), 4);
  const auto& ann = c.annotations.front();
  const auto ex = annotation_to_examples(ann, find_level(c.levels, ann.level_id)->grid, c.vocabulary());
  const Chunk chunk = ex.front().chunk;
  const int label = ex.front().label_index;

  auto m = ae::build(config(3, 400, 2), c.vocabulary());
  std::vector<ae::AeExample> data(32, ae::AeExample{chunk, label});
  const auto summary = ae::train(m, data);
  CHECK(summary.epochs == m.epochs());
  for (double l : m.loss_log()) CHECK(std::isfinite(l));

  const auto r = ae::reconstruct(m, chunk, label);
  CHECK(eval::structure_error(r.structure, chunk.to_floats()) == 0);
  for (float v : r.structure) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  const auto g = ae::generate(m, chunk, label);
  CHECK(g.grid == decode_chunk(chunk));
  REQUIRE(g.predicted_labels.size() == 3);
  CHECK(g.predicted_labels.front().name == c.vocabulary().name_of(label));
  for (std::size_t i = 1; i < g.predicted_labels.size(); ++i) {
    CHECK(g.predicted_labels[i - 1].strength >= g.predicted_labels[i].strength);
  }
  std::set<std::string> names;
  for (const auto& p : g.predicted_labels) names.insert(p.name);
  const auto v = c.vocabulary();
  CHECK(names == std::set<std::string>(v.names().begin(), v.names().end()));
  CHECK(g.label_head.size() == 3);

  CHECK(code_of([&] { ae::generate(m, chunk, 3); }) == "UnknownLabel");
  CHECK(code_of([&] { ae::generate(ae::build(config(3, 1), c.vocabulary()), chunk, 0); }) == "NotTrained");
}

TEST_CASE("training is deterministic") {
  const auto data = corpus_examples(70, 3, 2);
  auto a = ae::build(config(2, 6, 9), vocab(2));
  auto b = ae::build(config(2, 6, 9), vocab(2));
  ae::train(a, data);
  ae::train(b, data);
  CHECK(a.loss_log() == b.loss_log());
  CHECK(a.id() == b.id());

  auto c = ae::build(config(2, 6, 10), vocab(2));
  ae::train(c, data);
  CHECK(c.id() != a.id());

  // running minimum of the epoch loss never rises
  double best = INFINITY;
  for (double l : a.loss_log()) {
    CHECK(std::isfinite(l));
    CHECK(l >= 0.0);
    best = std::min(best, l);
  }
  CHECK(best <= a.loss_log().front());
}

TEST_CASE("on_epoch can stop training") {
  auto m = ae::build(config(0, 50), {});
  ae::TrainOptions opt;
  opt.on_epoch = [](int epoch, double) { return epoch < 3; };
  const auto s = ae::train(m, corpus_examples(20, 5, 0), opt);
  CHECK(s.epochs == 3);
  CHECK_FALSE(s.converged);
}

TEST_CASE("save and load") {
  auto m = ae::build(config(2, 3, 4), vocab(2));
  ae::train(m, corpus_examples(40, 6, 2));
  const auto prefix = (std::filesystem::temp_directory_path() / "xpcg_ae_test").string();
  m.save(prefix);
  const auto v = vocab(2);
  const auto back = ae::AutoencoderModel::load(prefix, &v);
  CHECK(back.id() == m.id());
  CHECK(back.loss_log() == m.loss_log());
  for (const auto& e : corpus_examples(10, 8, 2)) {
    const auto x = ae::reconstruct(m, e.chunk, e.label);
    const auto y = ae::reconstruct(back, e.chunk, e.label);
    CHECK(same(x.structure, y.structure));
    CHECK(same(x.labels, y.labels));
  }
  const LabelVocabulary other({"q0", "q1"});
  CHECK_THROWS_AS(ae::AutoencoderModel::load(prefix, &other), Error);
  std::filesystem::remove(prefix + ".weights");
  std::filesystem::remove(prefix + ".json");
}

TEST_CASE("transfer copies the parent") {
  auto parent = ae::build(config(0, 3, 7));
  ae::train(parent, corpus_examples(40, 9, 0));
  const auto child = ae::transfer(parent, config(3, 10, 8), vocab(3));
  CHECK(child.provenance().kind == "transfer");
  CHECK(child.provenance().parent_id == parent.id());
  CHECK_FALSE(child.trained());

  const auto& p = parent.net();
  const auto& c = child.net();
  const auto pe = p.encoder().params();
  const auto ce = c.encoder().params();
  REQUIRE(pe.size() == ce.size());
  for (std::size_t i = 0; i < pe.size(); ++i) CHECK(*pe[i] == *ce[i]);
  const auto pd = p.decoder().params();
  const auto cd = c.decoder().params();
  for (std::size_t i = 0; i < pd.size(); ++i) CHECK(*pd[i] == *cd[i]);

  // fc_enc weights are [in, out]; the first 512 input rows are the parent's
  const auto& pw = *p.fc_enc().params()[0];
  const auto& cw = *c.fc_enc().params()[0];
  REQUIRE(cw.dim(0) == 515);
  for (std::size_t i = 0; i < pw.size(); ++i) CHECK(pw[i] == cw[i]);
  CHECK(*p.fc_enc().params()[1] == *c.fc_enc().params()[1]);

  const auto& pdw = *p.fc_dec().params()[0];
  const auto& cdw = *c.fc_dec().params()[0];
  REQUIRE(cdw.dim(1) == 515);
  double ss = 0.0;
  int extra = 0;
  for (int r = 0; r < 512; ++r) {
    for (int col = 0; col < 515; ++col) {
      const float v = cdw[static_cast<std::size_t>(r * 515 + col)];
      if (col < 512) {
        CHECK(v == pdw[static_cast<std::size_t>(r * 512 + col)]);
      } else {
        ss += static_cast<double>(v) * v;
        ++extra;
      }
    }
  }
  CHECK(std::sqrt(ss / extra) == doctest::Approx(0.01).epsilon(0.15));

  // structure output before fine-tuning stays within the perturbation bound
  const auto probe = corpus_examples(32, 11, 0);
  nn::Tensor<float> batch({32, 8, 8, 30});
  for (std::size_t i = 0; i < probe.size(); ++i) probe[i].chunk.write_floats(batch.values().subspan(i * 1920, 1920));
  const auto a = p.forward(batch, nn::Tensor<float>({32, 0}), false, 0);
  const auto b = c.forward(batch, nn::Tensor<float>({32, 3}), false, 0);
  double diff = 0.0;
  const std::size_t count = batch.size();
  for (std::size_t i = 0; i < count; ++i) diff += std::abs(a.structure()[i] - b.structure()[i]);
  CHECK(diff / static_cast<double>(count) < 0.05);

  auto wrong = config(3, 1);
  wrong.geometry.filters1 = 16;
  CHECK(code_of([&] { ae::transfer(parent, wrong, vocab(3)); }) == "IncompatibleParent");
  auto labeled = ae::build(config(2, 1), vocab(2));
  CHECK(code_of([&] { ae::transfer(labeled, config(3, 1), vocab(3)); }) == "NotTrained");
  ae::train(labeled, corpus_examples(8, 2, 2));
  CHECK(code_of([&] { ae::transfer(labeled, config(3, 1), vocab(3)); }) == "IncompatibleParent");
}

TEST_CASE("to_ae_examples maps none to no label") {
  std::vector<LabeledChunk> in(3);
  in[0].label_index = 0;
  in[1].label_index = 2;
  in[2].label_index = 1;
  const auto out = ae::to_ae_examples(in, 2);
  CHECK(out[0].label == 0);
  CHECK_FALSE(out[1].label.has_value());
  CHECK(out[2].label == 1);
}
