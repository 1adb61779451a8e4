#include "semlogue/scores.hpp"

#include <algorithm>
#include <cmath>

#include "semlogue/corpus.hpp"

namespace semlogue {

void ContanicWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(alpha + beta > 0.0)) {
    throw std::invalid_argument("contanic weights need alpha >= 0, beta >= 0, alpha + beta > 0");
  }
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine: dimension mismatch " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {
double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

double pair_score(const std::string& a, const std::string& b, const EmbeddingProvider& provider) {
  const std::vector<std::string> texts{a, b};
  const auto vecs = provider.embed(texts);
  return clamp01(cosine(vecs[0], vecs[1]));
}
}  // namespace

double context_relevance(const std::string& context_text, const std::string& generated_text,
                         const EmbeddingProvider& provider, bool strip_context_tags) {
  return pair_score(strip_context_tags ? strip_tags(context_text) : context_text, generated_text,
                    provider);
}

double semantic_similarity(const std::string& gold_text, const std::string& generated_text,
                           const EmbeddingProvider& provider) {
  return pair_score(gold_text, generated_text, provider);
}

double contanic(double cr, double ss, const ContanicWeights& weights) {
  return weights.alpha * cr + weights.beta * ss;
}

double contanic_target(double cr, double ss, const ContanicWeights& weights) {
  return std::min(contanic(cr, ss, weights), 1.0);
}

std::vector<ScoreTriple> score_batch(std::span<const ScoreInput> items,
                                     const EmbeddingProvider& provider,
                                     const ContanicWeights& weights, bool strip_context_tags) {
  weights.validate();
  std::vector<std::string> texts;
  texts.reserve(items.size() * 3);
  for (const auto& it : items) {
    texts.push_back(strip_context_tags ? strip_tags(it.context) : it.context);
    texts.push_back(it.gold);
    texts.push_back(it.generated);
  }
  const auto vecs = provider.embed(texts);
  std::vector<ScoreTriple> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    ScoreTriple s;
    s.cr = clamp01(cosine(vecs[3 * i], vecs[3 * i + 2]));
    s.ss_cosine = cosine(vecs[3 * i + 1], vecs[3 * i + 2]);
    s.ss = clamp01(s.ss_cosine);
    s.contanic = contanic(s.cr, s.ss, weights);
    out.push_back(s);
  }
  return out;
}

}  // namespace semlogue
