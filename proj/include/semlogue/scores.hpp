#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semlogue/embeddings.hpp"

namespace semlogue {

// Weights combining context relevance (alpha) and semantic similarity (beta).
struct ContanicWeights {
  double alpha = 0.3;
  double beta = 0.7;

  void validate() const;
};

struct ScoreTriple {
  double cr = 0.0;
  double ss = 0.0;
  double contanic = 0.0;
  double ss_cosine = 0.0;  // unclamped cosine behind ss
};

// dot(a,b)/(|a||b|), 0 when either norm vanishes.
double cosine(std::span<const double> a, std::span<const double> b);

double context_relevance(const std::string& context_text, const std::string& generated_text,
                         const EmbeddingProvider& provider, bool strip_context_tags = true);
double semantic_similarity(const std::string& gold_text, const std::string& generated_text,
                           const EmbeddingProvider& provider);

// alpha*cr + beta*ss; not clamped (see contanic_target).
double contanic(double cr, double ss, const ContanicWeights& weights);
// Contanic clamped to [0, 1] for use as a loss weight or regression target.
double contanic_target(double cr, double ss, const ContanicWeights& weights);

struct ScoreInput {
  std::string context;
  std::string gold;
  std::string generated;
};

// Scores a batch with one provider call.
std::vector<ScoreTriple> score_batch(std::span<const ScoreInput> items,
                                     const EmbeddingProvider& provider,
                                     const ContanicWeights& weights, bool strip_context_tags = true);

}  // namespace semlogue
