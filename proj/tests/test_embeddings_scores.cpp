#include <cmath>
#include <set>

#include "doctest.h"
#include "semlogue/corpus.hpp"
#include "semlogue/embeddings.hpp"
#include "semlogue/model.hpp"
#include "semlogue/scores.hpp"
#include "semlogue/rng.hpp"

using namespace semlogue;

namespace {

double norm(const EmbeddingVector& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("hashed provider basics") {
  HashedProvider p(1 << 16);
  const std::vector<std::string> texts{"good day", "", "good day"};
  auto v = p.embed(texts);
  REQUIRE(v.size() == 3);
  CHECK(v[0] == v[2]);
  CHECK(norm(v[1]) == 0.0);
  CHECK(norm(v[0]) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine(v[0], v[2]) == doctest::Approx(1.0));
  const double partial = cosine(hashed_embed("nice to see you"), hashed_embed("nice to meet you"));
  CHECK(partial > 0.0);
  CHECK(partial < 1.0);
}

TEST_CASE("hashed provider: disjoint collision-free pair has cosine 0") {
  const std::size_t dim = 1 << 16;
  HashedProvider p(dim);
  // enumerate word pairs until neither text shares a bucket with the other
  const std::vector<std::string> words{"alpha", "bravo", "charlie", "delta", "echo", "foxtrot",
                                       "golf", "hotel", "india", "juliet"};
  bool found = false;
  for (std::size_t i = 0; i < words.size() && !found; ++i) {
    for (std::size_t j = 0; j < words.size() && !found; ++j) {
      const std::string a = words[i] + " " + words[j];
      const std::string b = words[(i + 3) % 10] + " " + words[(j + 5) % 10];
      if (a.find(words[(i + 3) % 10]) != std::string::npos) continue;
      if (a.find(words[(j + 5) % 10]) != std::string::npos) continue;
      std::set<std::size_t> buckets;
      for (const auto& f : p.features(a)) buckets.insert(f.bucket);
      bool clash = false;
      for (const auto& f : p.features(b)) clash |= buckets.count(f.bucket) > 0;
      if (clash) continue;
      found = true;
      CHECK(cosine(p.embed_one(a), p.embed_one(b)) == 0.0);
      CHECK(semantic_similarity(a, b, p) == 0.0);
    }
  }
  CHECK(found);
}

TEST_CASE("embed is order-equivariant and norms are 1 or 0") {
  HashedProvider p(4096);
  Rng rng(2);
  const std::vector<std::string> pool{"book a taxi", "", "the hotel is cheap", "train at 9", "thanks !"};
  std::vector<std::string> texts(pool.begin(), pool.end());
  auto base = p.embed(texts);
  rng.shuffle(texts);
  auto shuffled = p.embed(texts);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (pool[j] == texts[i]) CHECK(shuffled[i] == base[j]);
    }
    const double n = norm(shuffled[i]);
    CHECK((texts[i].empty() ? n == 0.0 : std::abs(n - 1.0) < 1e-12));
  }
}

TEST_CASE("cosine") {
  const std::vector<double> a{1, 0}, b{0, 1}, c{1, 1}, z{0, 0};
  CHECK(cosine(a, a) == 1.0);
  CHECK(cosine(a, b) == 0.0);
  CHECK(cosine(c, a) == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(cosine(z, a) == 0.0);
  const std::vector<double> three{1, 2, 3};
  CHECK_THROWS_AS(cosine(a, three), std::invalid_argument);
}

TEST_CASE("context relevance and semantic similarity") {
  HashedProvider p(1 << 16);
  CHECK(context_relevance("book a room", "book a room", p) == doctest::Approx(1.0));
  CHECK(context_relevance("<u> book a room </u>", "book a room", p) == doctest::Approx(1.0));
  CHECK(context_relevance("book a room", "", p) == 0.0);
  CHECK(semantic_similarity("a b c", "b c d", p) == semantic_similarity("b c d", "a b c", p));

  // a provider with a fixed negative cosine
  struct Opposite final : EmbeddingProvider {
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override {
      std::vector<EmbeddingVector> out;
      double s = 1.0;
      for (std::size_t i = 0; i < texts.size(); ++i, s = -s) out.push_back({s, 0.0});
      return out;
    }
    std::size_t dim() const override { return 2; }
    std::string name() const override { return "opposite"; }
  } opposite;
  CHECK(context_relevance("x", "y", opposite) == 0.0);
}

TEST_CASE("contanic") {
  const ContanicWeights w{0.3, 0.7};
  CHECK(contanic(0.8, 0.6, w) == doctest::Approx(0.66).epsilon(1e-12));
  CHECK(contanic(1, 1, w) == w.alpha + w.beta);
  CHECK(contanic(0.4, 0.9, {0.0, 0.7}) == 0.7 * 0.9);
  CHECK(contanic_target(1, 1, {0.8, 0.8}) == 1.0);
  CHECK_THROWS(ContanicWeights{0, 0}.validate());
  CHECK_THROWS(ContanicWeights{-0.1, 1}.validate());

  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double cr = rng.uniform(), ss = rng.uniform(), d = rng.uniform(0, 0.1);
    const double a = rng.uniform();
    const ContanicWeights unit{a, 1 - a};
    const double c = contanic(cr, ss, unit);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0 + 1e-15);
    CHECK(contanic(std::min(cr + d, 1.0), ss, unit) >= c);
    CHECK(contanic(cr, std::min(ss + d, 1.0), unit) >= c);
  }
}

TEST_CASE("score_batch is exact and repeatable") {
  HashedProvider p(1 << 16);
  const std::vector<ScoreInput> items{{"<u> i want a cheap hotel </u>", "the cheap hotel is nice", "a cheap hotel"},
                                      {"<u> hi </u>", "hello", "hello"}};
  const ContanicWeights w{0.3, 0.7};
  auto a = score_batch(items, p, w), b = score_batch(items, p, w);
  for (std::size_t i = 0; i < items.size(); ++i) {
    CHECK(a[i].contanic == w.alpha * a[i].cr + w.beta * a[i].ss);
    CHECK(a[i].cr == b[i].cr);
    CHECK(a[i].ss == b[i].ss);
    CHECK(a[i].cr == context_relevance(items[i].context, items[i].generated, p));
  }
  CHECK(a[1].ss == doctest::Approx(1.0));
}

TEST_CASE("remote provider against the echo server") {
  const std::size_t dim = 64;
  EchoEmbeddingServer server(dim);
  server.start("127.0.0.1", 0);
  RemoteConfig cfg;
  cfg.endpoint = server.endpoint();
  cfg.max_batch = 100;
  RemoteProvider remote(cfg, dim);
  HashedProvider local(dim);

  std::vector<std::string> texts;
  for (int i = 0; i < 250; ++i) texts.push_back("text number " + std::to_string(i));
  auto got = remote.embed(texts);
  CHECK(remote.requests_sent() == 3);
  CHECK(server.requests_served() == 3);
  REQUIRE(got.size() == 250);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto expect = local.embed_one(texts[i]);
    for (std::size_t k = 0; k < dim; ++k) REQUIRE(got[i][k] == doctest::Approx(expect[k]).epsilon(1e-15));
  }

  RemoteProvider wrong_dim(cfg, 32);
  const std::vector<std::string> one{"x"};
  try {
    wrong_dim.embed(one);
    FAIL("expected dim mismatch");
  } catch (const EmbeddingError& e) {
    CHECK(e.kind() == EmbeddingErrorKind::kDimMismatch);
    CHECK(e.endpoint() == cfg.endpoint);
  }
  server.stop();

  RemoteConfig dead = cfg;
  dead.retries = 1;
  dead.timeout_seconds = 1;
  RemoteProvider gone(dead, dim);
  try {
    gone.embed(one);
    FAIL("expected transport error");
  } catch (const EmbeddingError& e) {
    CHECK(e.batch_index() == 0);
    CHECK(gone.requests_sent() == 2);
  }
}

TEST_CASE("provider kinds") {
  CHECK(parse_provider_kind("remote") == ProviderKind::kRemote);
  CHECK_THROWS(parse_provider_kind("bert"));
  ProviderConfig cfg;
  CHECK(make_provider(cfg)->dim() == (1u << 16));
  cfg.kind = ProviderKind::kIntrinsic;
  CHECK_THROWS(make_provider(cfg));
}

TEST_CASE("intrinsic provider pools a snapshot of the model") {
  const Vocab vocab = Vocab::build(std::vector<std::vector<std::string>>{{"a", "cheap", "hotel", "taxi", "please"}}, 50, 1);
  for (auto arch : {Architecture::kEncoderDecoder, Architecture::kDecoderOnly}) {
    ModelConfig c;
    c.vocab_size = vocab.size();
    c.embed_dim = 8;
    c.ff_dim = 16;
    c.max_source_len = 16;
    c.max_target_len = 16;
    c.architecture = arch;
    Model m(c);
    IntrinsicProvider p(m, vocab);
    CHECK(p.dim() == 8);
    const std::vector<std::string> texts{"a cheap hotel", "a cheap hotel", "taxi please", ""};
    const auto v = p.embed(texts);
    REQUIRE(v.size() == 4);
    CHECK(v[0] == v[1]);
    CHECK(v[0] != v[2]);
    for (const auto& e : v) {
      CHECK(e.size() == 8);
      for (double x : e) CHECK(std::isfinite(x));
    }
    // batch composition does not change a text's vector
    CHECK(p.embed(std::vector<std::string>{"taxi please"})[0] == v[2]);

    // later model edits are invisible until refresh
    for (double& x : m.parameter("tok_emb").value.values()) x *= 2.0;
    CHECK(p.embed(texts)[0] == v[0]);
    p.refresh(m);
    CHECK(p.embed(texts)[0] != v[0]);
  }
  ProviderConfig cfg;
  cfg.kind = ProviderKind::kIntrinsic;
  CHECK_THROWS_AS(make_provider(cfg), std::invalid_argument);
}
