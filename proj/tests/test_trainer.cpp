#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "semlogue/synthetic.hpp"
#include "semlogue/trainer.hpp"

using namespace semlogue;
namespace fs = std::filesystem;

namespace {

struct Data {
  Vocab vocab;
  std::vector<EncodedExample> train, val;
};

Data small_data(std::size_t dialogues = 30, std::uint64_t seed = 4) {
  const auto ds = synthetic_paraphrase_corpus(dialogues, seed);
  const auto split = split_dialogues(ds, seed);
  const auto tr = make_examples(split.train, 3), va = make_examples(split.validation, 3);
  Data d{build_vocab(tr, 8000, 1), {}, {}};
  d.train = encode_examples(tr, d.vocab);
  d.val = encode_examples(va, d.vocab);
  return d;
}

ModelConfig small_model(const Vocab& v) {
  ModelConfig c;
  c.vocab_size = v.size();
  c.embed_dim = 8;
  c.ff_dim = 16;
  c.max_source_len = 64;
  c.max_target_len = 32;
  return c;
}

TrainConfig quick(LossVariant v, std::size_t steps) {
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch_size = 8;
  tc.epochs = 50;
  tc.max_steps = steps;
  tc.validate_each_epoch = false;
  tc.eval_max_len = 16;
  tc.loss.variant = v;
  return tc;
}

bool same_bits(const std::vector<Parameter>& a, const std::vector<Parameter>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].value.shape() != b[i].value.shape()) return false;
    const auto& x = a[i].value.values();
    const auto& y = b[i].value.values();
    if (std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("semlogue_test_" + name); }

}  // namespace

TEST_CASE("adam first step moves each entry by about lr") {
  Parameter p{"w", Tensor::from({1.0, -2.0, 0.5})};
  std::vector<Parameter*> ps{&p};
  const std::vector<Tensor> g{Tensor::from({0.5, -3.0, 0.0})};
  Adam adam(0.1);
  adam.step(ps, g);
  CHECK(adam.steps() == 1);
  CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p.value[1] == doctest::Approx(-1.9).epsilon(1e-6));
  CHECK(p.value[2] == 0.5);
  // second step, same gradient: bias correction keeps the step at lr
  adam.step(ps, g);
  CHECK(p.value[0] == doctest::Approx(0.8).epsilon(1e-6));
  CHECK_THROWS(adam.step(ps, std::vector<Tensor>{}));
}

TEST_CASE("clip_global_norm") {
  std::vector<Tensor> g{Tensor::from({3.0}), Tensor::from({4.0})};
  CHECK(clip_global_norm(g, 1.0) == 5.0);
  CHECK(g[0][0] == doctest::Approx(0.6));
  CHECK(g[1][0] == doctest::Approx(0.8));
  std::vector<Tensor> small{Tensor::from({0.3, 0.4})};
  CHECK(clip_global_norm(small, 1.0) == doctest::Approx(0.5));
  CHECK(small[0][0] == 0.3);
}

TEST_CASE("train config json round trip") {
  TrainConfig tc = quick(LossVariant::kSemTextualLogue, 7);
  tc.loss.lambda = 0.25;
  tc.provider.kind = ProviderKind::kIntrinsic;
  const auto back = train_config_from_json(train_config_to_json(tc));
  CHECK(train_config_to_json(back) == train_config_to_json(tc));
  CHECK(back.loss.variant == LossVariant::kSemTextualLogue);
  TrainConfig bad;
  bad.lr = 0.0;
  CHECK_THROWS(bad.validate());
  bad = TrainConfig{};
  bad.loss.lambda = 1.5;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("training lowers the loss") {
  const auto d = small_data();
  Model m(small_model(d.vocab));
  Trainer t(quick(LossVariant::kCe, 60), m, d.vocab);
  RunLog log;
  t.train(d.train, {}, log);
  REQUIRE(log.steps.size() == 60);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 5; ++i) {
    head += log.steps[i].loss.l_ce;
    tail += log.steps[55 + i].loss.l_ce;
  }
  CHECK(tail < head);
  CHECK(log.steps.back().step == 60);
}

TEST_CASE("score variants log contanic within [0, 1]") {
  const auto d = small_data();
  for (auto v : all_loss_variants()) {
    Model m(small_model(d.vocab));
    Trainer t(quick(v, 4), m, d.vocab);
    RunLog log;
    t.train(d.train, {}, log);
    for (const auto& s : log.steps) {
      CHECK(s.loss.contanic >= 0.0);
      CHECK(s.loss.contanic <= 1.0);
      CHECK(s.loss.l_total == doctest::Approx(s.loss.recompose(t.config().loss)).epsilon(1e-12));
      if (v == LossVariant::kCe) CHECK(s.loss.contanic == 0.0);
    }
    CHECK((t.estimator() != nullptr) == uses_estimator(v));
  }
}

TEST_CASE("run log jsonl") {
  const auto d = small_data();
  Model m(small_model(d.vocab));
  auto tc = quick(LossVariant::kSemTextualLogue, 0);
  tc.epochs = 1;
  tc.validate_each_epoch = true;
  Trainer t(tc, m, d.vocab);
  RunLog log;
  t.train(d.train, d.val, log);
  REQUIRE(log.epochs.size() == 1);
  REQUIRE(log.epochs[0].validation.has_value());
  const auto text = log.to_jsonl(false);
  std::size_t lines = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("step") != j.contains("validation"));
    CHECK_FALSE(j.contains("wall_seconds"));
    ++lines;
  }
  CHECK(lines == log.steps.size() + 1);
  CHECK(log.to_jsonl(true).find("wall_seconds") != std::string::npos);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto d = small_data();
  Model m(small_model(d.vocab));
  Trainer t(quick(LossVariant::kSemTextualLogue, 5), m, d.vocab);
  RunLog log;
  t.train(d.train, {}, log);
  const auto path = temp_path("roundtrip.ckpt");
  const Checkpoint saved = t.checkpoint();
  save_checkpoint(saved, path);
  const Checkpoint loaded = load_checkpoint(path, &d.vocab);
  CHECK(same_bits(saved.model_params, loaded.model_params));
  CHECK(same_bits(saved.estimator_params, loaded.estimator_params));
  CHECK(loaded.step == 5);
  CHECK(loaded.adam_steps == 5);
  CHECK(loaded.vocab_tokens == d.vocab.tokens());
  CHECK(train_config_to_json(loaded.train_config) == train_config_to_json(saved.train_config));
  REQUIRE(loaded.adam_m.size() == saved.adam_m.size());
  for (std::size_t i = 0; i < saved.adam_v.size(); ++i) CHECK(loaded.adam_v[i].values() == saved.adam_v[i].values());
  const Model back = model_from_checkpoint(loaded);
  CHECK(same_bits(back.parameters(), m.parameters()));
  fs::remove(path);
}

TEST_CASE("damaged or mismatched checkpoints are refused") {
  const auto d = small_data();
  Model m(small_model(d.vocab));
  Trainer t(quick(LossVariant::kCe, 1), m, d.vocab);
  RunLog log;
  t.train(d.train, {}, log);
  const auto path = temp_path("damaged.ckpt");
  save_checkpoint(t.checkpoint(), path);
  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  auto write = [&](const std::string& b) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << b;
  };
  auto message = [&]() -> std::string {
    try {
      load_checkpoint(path);
    } catch (const CheckpointError& e) {
      return e.what();
    }
    return "";
  };

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  write(flipped);
  CHECK(message().find("checksum") != std::string::npos);

  write(bytes.substr(0, bytes.size() - 100));
  CHECK_FALSE(message().empty());

  std::string versioned = bytes;
  versioned[8] = 2;
  write(versioned);
  CHECK(message().find("version 2") != std::string::npos);

  write("not a checkpoint");
  CHECK(message().find("not a checkpoint") != std::string::npos);

  write(bytes);
  const Vocab other = small_data(12, 99).vocab;
  CHECK_THROWS_AS(load_checkpoint(path, &other), CheckpointError);
  CHECK_NOTHROW(load_checkpoint(path, &d.vocab));
  fs::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
}

TEST_CASE("resume after k steps reproduces the uninterrupted run") {
  const auto d = small_data();
  for (auto v : {LossVariant::kCe, LossVariant::kSemTextualLogue}) {
    const std::size_t k = 7, extra = 10;  // k falls mid-epoch
    Model full_model(small_model(d.vocab));
    Trainer full(quick(v, k + extra), full_model, d.vocab);
    RunLog full_log;
    full.train(d.train, {}, full_log);

    Model first_model(small_model(d.vocab));
    Trainer first(quick(v, k), first_model, d.vocab);
    RunLog first_log;
    first.train(d.train, {}, first_log);
    const auto path = temp_path("resume.ckpt");
    save_checkpoint(first.checkpoint(), path);

    const Checkpoint ckpt = load_checkpoint(path, &d.vocab);
    Model resumed_model = model_from_checkpoint(ckpt);
    Trainer resumed(quick(v, k + extra), resumed_model, d.vocab);
    resumed.restore(ckpt);
    RunLog resumed_log;
    resumed.train(d.train, {}, resumed_log);
    fs::remove(path);

    REQUIRE(resumed_log.steps.size() == extra);
    for (std::size_t i = 0; i < extra; ++i) {
      CHECK(resumed_log.steps[i].step == full_log.steps[k + i].step);
      CHECK(resumed_log.steps[i].loss.l_total == full_log.steps[k + i].loss.l_total);
    }
    CHECK(same_bits(resumed_model.parameters(), full_model.parameters()));
  }
}

TEST_CASE("non-finite loss raises NumericError with a dump") {
  const auto d = small_data();
  Model m(small_model(d.vocab));
  m.parameter("out.w").value[0] = std::nan("");
  Trainer t(quick(LossVariant::kCe, 1), m, d.vocab);
  const std::vector<EncodedExample> batch(d.train.begin(), d.train.begin() + 2);
  try {
    t.step(batch);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.dump().at("step") == 1);
    CHECK(e.dump().at("examples").size() == 2);
  }
}

TEST_CASE("evaluate_corpus on echoed gold") {
  const std::vector<ScoreInput> items{{"<u> a cheap hotel </u>", "the hotel is cheap", "the hotel is cheap"},
                                      {"<u> a taxi please </u>", "where are you going ?", "where are you going ?"}};
  HashedProvider p(1 << 12);
  const auto r = evaluate_generations(items, p, {});
  CHECK(r.mean("ss") == doctest::Approx(1.0));
  CHECK(r.mean("bleu") == doctest::Approx(1.0));
  CHECK(r.mean("rougeL") == doctest::Approx(1.0));
  CHECK(r.mean("embedding") == doctest::Approx(100.0));
}

TEST_CASE("generate and evaluate a trained model") {
  const auto d = small_data();
  Model m(small_model(d.vocab));
  const auto gen = generate_responses(m, d.vocab, d.val, 10, 4);
  REQUIRE(gen.size() == d.val.size());
  for (std::size_t i = 0; i < gen.size(); ++i) {
    CHECK(gen[i].gold == d.val[i].gold_text);
    CHECK(tokenize(gen[i].generated).size() <= 10);
  }
  HashedProvider p(1 << 12);
  EvalOptions eo;
  eo.max_len = 10;
  const auto r = evaluate_corpus(m, d.vocab, d.val, p, eo);
  CHECK(r.count == d.val.size());
  for (const auto& name : r.metric_names) {
    CHECK(std::isfinite(r.mean(name)));
  }
}

TEST_CASE("synthetic corpus has paraphrase sets") {
  CHECK(synthetic_min_paraphrases() >= 3);
  const auto a = synthetic_paraphrase_corpus(50, 1), b = synthetic_paraphrase_corpus(50, 1);
  REQUIRE(a.size() == 50);
  CHECK(dialogue_to_json(a[7]) == dialogue_to_json(b[7]));
  std::set<std::string> ids;
  for (const auto& dlg : a) {
    ids.insert(dlg.dialogue_id);
    CHECK(dlg.turns.size() >= 2);
    CHECK(dlg.turns.front().speaker == Speaker::kUser);
  }
  CHECK(ids.size() == 50);
}
