#include <cmath>

#include "doctest.h"
#include "semlogue/corpus.hpp"
#include "semlogue/gradcheck.hpp"
#include "semlogue/model.hpp"
#include "semlogue/rng.hpp"

using namespace semlogue;

namespace {

ModelConfig tiny(Architecture arch = Architecture::kEncoderDecoder) {
  ModelConfig c;
  c.vocab_size = 30;
  c.embed_dim = 8;
  c.heads = 2;
  c.ff_dim = 16;
  c.architecture = arch;
  c.max_source_len = 32;
  c.max_target_len = 16;
  return c;
}

std::vector<int> random_seq(Rng& rng, std::size_t len, std::size_t vocab) {
  std::vector<int> s(len);
  for (auto& x : s) x = static_cast<int>(Vocab::kSep + 1 + rng.below(vocab - Vocab::kSep - 1));
  return s;
}

double mean_ce(const Model& m, const SourceBatch& src, const TargetBatch& tgt) {
  Tape tape;
  tape.set_grad_enabled(false);
  Var logits = m.forward_logits(tape, src, tgt);
  Var flat = ops::reshape(logits, {tgt.batch * tgt.len, m.config().vocab_size});
  const Tensor& ce = ops::softmax_cross_entropy(flat, tgt.targets).value();
  double total = 0.0;
  for (std::size_t b = 0; b < tgt.batch; ++b) {
    double row = 0.0;
    for (std::size_t t = 0; t < tgt.len; ++t) row += ce[b * tgt.len + t];
    total += row / static_cast<double>(tgt.real_length(b));
  }
  return total / static_cast<double>(tgt.batch);
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig c = tiny();
  c.heads = 3;
  CHECK_THROWS(Model{c});
  c = tiny();
  c.max_target_len = 0;
  CHECK_THROWS(Model{c});
  c = tiny(Architecture::kDecoderOnly);
  CHECK(model_config_to_json(model_config_from_json(model_config_to_json(c))) == model_config_to_json(c));
}

TEST_CASE("encode shape, batch independence, all-pad rows") {
  Model m(tiny());
  Rng rng(1);
  std::vector<std::vector<int>> seqs{random_seq(rng, 7, 30), random_seq(rng, 4, 30)};
  auto src = make_source_batch(seqs, 32);
  const Tensor h = m.encode(src);
  CHECK(h.shape() == Shape{2, 7, 8});

  std::vector<std::vector<int>> swapped{seqs[1], seqs[0]};
  const Tensor hs = m.encode(make_source_batch(swapped, 32));
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t k = 0; k < 8; ++k) CHECK(hs[t * 8 + k] == doctest::Approx(h[(7 + t) * 8 + k]).epsilon(1e-12));
  }

  // an all-pad row has defined output and does not disturb the real row
  std::vector<std::vector<int>> with_empty{seqs[0], {}};
  const Tensor he = m.encode(make_source_batch(with_empty, 32));
  CHECK(he.all_finite());
  for (std::size_t i = 0; i < 7 * 8; ++i) CHECK(he[i] == doctest::Approx(h[i]).epsilon(1e-12));
}

TEST_CASE("long sources are truncated from the left and counted") {
  Model m(tiny());
  Rng rng(2);
  std::vector<std::vector<int>> seqs{random_seq(rng, 40, 30)};
  SourceBatch raw;
  raw.batch = 1;
  raw.len = 40;
  raw.ids = seqs[0];
  const Tensor h = m.encode(raw);
  CHECK(h.shape() == Shape{1, 32, 8});
  CHECK(m.truncation_count() == 1);
  std::vector<std::vector<int>> tail{std::vector<int>(seqs[0].end() - 32, seqs[0].end())};
  CHECK(m.encode(make_source_batch(tail, 32)) == h);
}

TEST_CASE("teacher forcing: normalization and causality") {
  for (auto arch : {Architecture::kEncoderDecoder, Architecture::kDecoderOnly}) {
    Model m(tiny(arch));
    Rng rng(3);
    std::vector<std::vector<int>> srcs{random_seq(rng, 6, 30), random_seq(rng, 3, 30)};
    std::vector<std::vector<int>> golds{random_seq(rng, 5, 30), random_seq(rng, 2, 30)};
    auto src = make_source_batch(srcs, 32);
    auto tgt = make_target_batch(golds, 16);
    Tape tape;
    const Tensor p = m.forward_teacher_forced(tape, src, tgt).value();
    CHECK(p.shape() == Shape{2, tgt.len, 30});
    for (std::size_t r = 0; r < 2 * tgt.len; ++r) {
      double s = 0.0;
      for (std::size_t v = 0; v < 30; ++v) s += p[r * 30 + v];
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
    // edit gold token at position 3 (input position 4): outputs at <= 3 unchanged
    golds[0][3] = golds[0][3] == 10 ? 11 : 10;
    auto tgt2 = make_target_batch(golds, 16);
    Tape t2;
    const Tensor q = m.forward_teacher_forced(t2, src, tgt2).value();
    for (std::size_t t = 0; t <= 3; ++t) {
      for (std::size_t v = 0; v < 30; ++v) CHECK(q[t * 30 + v] == p[t * 30 + v]);
    }
    bool changed = false;
    for (std::size_t v = 0; v < 30; ++v) changed |= q[4 * 30 + v] != p[4 * 30 + v];
    CHECK(changed);
  }
}

TEST_CASE("greedy decoding is bounded and deterministic") {
  for (auto arch : {Architecture::kEncoderDecoder, Architecture::kDecoderOnly}) {
    Model m(tiny(arch));
    Rng rng(4);
    std::vector<std::vector<int>> srcs{random_seq(rng, 6, 30), random_seq(rng, 2, 30)};
    auto src = make_source_batch(srcs, 32);
    auto a = m.generate_greedy(src, 10), b = m.generate_greedy(src, 10);
    CHECK(a == b);
    for (const auto& s : a) CHECK(s.size() <= 10);
    CHECK_THROWS(m.generate_greedy(src, 17));
    const std::vector<std::size_t> caps{3, 0};
    auto c = m.generate_greedy(src, caps);
    CHECK(c[0].size() <= 3);
    CHECK(c[1].empty());
  }
}

TEST_CASE("greedy output is a fixed point under teacher forcing") {
  Model m(tiny());
  Rng rng(5);
  std::vector<std::vector<int>> srcs{random_seq(rng, 6, 30)};
  auto src = make_source_batch(srcs, 32);
  auto out = m.generate_greedy(src, 12);
  auto tgt = make_target_batch(out, 16);
  Tape tape;
  const Tensor p = m.forward_teacher_forced(tape, src, tgt).value();
  for (std::size_t t = 0; t < out[0].size(); ++t) {
    std::size_t best = 0;
    for (std::size_t v = 1; v < 30; ++v) best = p[t * 30 + v] > p[t * 30 + best] ? v : best;
    CHECK(static_cast<int>(best) == out[0][t]);
  }
}

TEST_CASE("loss is permutation invariant over the batch") {
  Model m(tiny());
  Rng rng(6);
  std::vector<std::vector<int>> srcs, golds;
  for (int i = 0; i < 5; ++i) {
    srcs.push_back(random_seq(rng, 2 + rng.below(6), 30));
    golds.push_back(random_seq(rng, 1 + rng.below(6), 30));
  }
  const double base = mean_ce(m, make_source_batch(srcs, 32), make_target_batch(golds, 16));
  std::vector<std::size_t> order{3, 0, 4, 1, 2};
  std::vector<std::vector<int>> s2, g2;
  for (auto i : order) {
    s2.push_back(srcs[i]);
    g2.push_back(golds[i]);
  }
  CHECK(std::abs(mean_ce(m, make_source_batch(s2, 32), make_target_batch(g2, 16)) - base) < 1e-9);
}

TEST_CASE("every parameter receives gradient at init") {
  for (auto arch : {Architecture::kEncoderDecoder, Architecture::kDecoderOnly}) {
    Model m(tiny(arch));
    Rng rng(7);
    std::vector<std::vector<int>> srcs, golds;
    for (int i = 0; i < 4; ++i) {
      srcs.push_back(random_seq(rng, 5, 30));
      golds.push_back(random_seq(rng, 4, 30));
    }
    auto src = make_source_batch(srcs, 32);
    auto tgt = make_target_batch(golds, 16);
    Tape tape;
    Var logits = m.forward_logits(tape, src, tgt);
    Var loss = ops::mean(ops::softmax_cross_entropy(ops::reshape(logits, {4 * tgt.len, 30}), tgt.targets));
    auto params = m.parameter_ptrs();
    auto grads = tape.backward(loss, params);
    for (std::size_t i = 0; i < params.size(); ++i) {
      double mag = 0.0;
      for (double g : grads[i].values()) mag += std::abs(g);
      INFO(params[i]->name);
      CHECK(mag > 0.0);
    }
  }
}

TEST_CASE("whole-model finite difference check") {
  for (auto arch : {Architecture::kEncoderDecoder, Architecture::kDecoderOnly}) {
    ModelConfig c = tiny(arch);
    c.vocab_size = 12;
    c.embed_dim = 4;
    c.ff_dim = 6;
    Model m(c);
    std::vector<std::vector<int>> srcs{{5, 6, 7}, {8, 9}}, golds{{10, 11}, {6}};
    auto src = make_source_batch(srcs, 32);
    auto tgt = make_target_batch(golds, 16);
    auto params = m.parameter_ptrs();
    auto report = grad_check(
        [&](Tape& t) {
          Var logits = m.forward_logits(t, src, tgt);
          return ops::mean(ops::softmax_cross_entropy(ops::reshape(logits, {2 * tgt.len, 12}), tgt.targets));
        },
        params);
    INFO("max rel " << report.max_rel_diff);
    CHECK(report.passed);
  }
}
