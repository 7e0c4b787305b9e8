#pragma once

// Seeded feedback fixtures for the incremental retrain contract. Fixture s
// builds a small synthetic corpus, holds out 30% of its annotations, fits a
// forest on the rest plus none windows, and picks one misclassified held-out
// window (or clear none window) as the designer's correction. Draws with no
// misclassified candidate are rejected and redrawn from the next sub-seed.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "xpcg/eval/corpus.hpp"
#include "xpcg/forest.hpp"
#include "xpcg/rng.hpp"

namespace fixture {

struct Feedback {
  std::uint64_t seed = 0;
  int attempts = 0;
  xpcg::forest::ForestModel before;
  xpcg::forest::UpdateResult update;
  xpcg::LabeledChunk correction;
  std::vector<xpcg::LabeledChunk> probes;  // correct before the update
  std::vector<xpcg::LabeledChunk> all;

  bool corrected() const { return update.model.predict(correction.chunk).label_index == correction.label_index; }
  bool probes_kept() const {
    return std::all_of(probes.begin(), probes.end(), [&](const xpcg::LabeledChunk& p) {
      return update.model.predict(p.chunk).label_index == p.label_index;
    });
  }
};

inline xpcg::eval::CorpusSpec feedback_corpus_spec() {
  xpcg::eval::CorpusSpec spec;
  spec.levels = 8;
  spec.width = 120;
  spec.patterns = {{"staircase", 20}, {"gap", 20}, {"enemy-pair", 20}};
  return spec;
}

inline Feedback make_feedback(std::uint64_t seed, int probe_count = 50) {
  using namespace xpcg;
  Feedback f;
  f.seed = seed;
  for (std::uint64_t sub = 0;; ++sub) {
    ++f.attempts;
    const auto s = Rng::derive(seed, sub);
    const auto corpus = eval::make_synthetic_corpus(feedback_corpus_spec(), Rng::derive(s, 0));
    const auto vocab = corpus.vocabulary();

    std::vector<std::size_t> order(corpus.annotations.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(Rng::derive(s, 1));
    rng.shuffle(std::span<std::size_t>(order));
    const std::size_t held = order.size() * 3 / 10;
    std::vector<PatternAnnotation> train, test;
    for (std::size_t i = 0; i < order.size(); ++i) {
      (i < held ? test : train).push_back(corpus.annotations[order[i]]);
    }

    auto examples = annotations_to_examples(train, corpus.levels, vocab);
    const int nneg = default_negative_count(examples, vocab.size());
    auto neg = sample_negatives(corpus.levels, corpus.annotations, nneg, Rng::derive(s, 2), vocab.none_index());
    examples.insert(examples.end(), neg.examples.begin(), neg.examples.end());

    forest::ForestConfig fc;
    fc.seed = Rng::derive(s, 3);
    auto model = forest::fit(examples, vocab, fc);

    auto candidates = annotations_to_examples(test, corpus.levels, vocab);
    auto clear = sample_negatives(corpus.levels, corpus.annotations, 40, Rng::derive(s, 4), vocab.none_index());
    candidates.insert(candidates.end(), clear.examples.begin(), clear.examples.end());
    std::erase_if(candidates, [&](const LabeledChunk& c) {
      return model.predict(c.chunk).label_index == c.label_index;
    });
    if (candidates.empty()) continue;

    f.correction = candidates[rng.below(candidates.size())];
    std::vector<std::size_t> idx(examples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t i = 0; i < idx.size() && static_cast<int>(f.probes.size()) < probe_count; ++i) {
      const auto& e = examples[idx[i]];
      if (model.predict(e.chunk).label_index == e.label_index) f.probes.push_back(e);
    }
    f.update = forest::incremental_update(model, {f.correction}, examples);
    f.before = std::move(model);
    f.all = std::move(examples);
    return f;
  }
}

}  // namespace fixture
