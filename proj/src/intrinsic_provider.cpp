#include <algorithm>

#include "semlogue/corpus.hpp"
#include "semlogue/embeddings.hpp"
#include "semlogue/model.hpp"

namespace semlogue {

IntrinsicProvider::IntrinsicProvider(const Model& model, const Vocab& vocab)
    : snapshot_(std::make_unique<Model>(model)), vocab_(&vocab) {}

IntrinsicProvider::~IntrinsicProvider() = default;

std::size_t IntrinsicProvider::dim() const { return snapshot_->config().embed_dim; }

void IntrinsicProvider::refresh(const Model& model) { *snapshot_ = model; }

std::vector<EmbeddingVector> IntrinsicProvider::embed(std::span<const std::string> texts) const {
  const std::size_t d = dim();
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  if (texts.empty()) return out;
  const auto& cfg = snapshot_->config();
  for (const auto& text : texts) {
    const std::vector<std::vector<int>> seq{vocab_->encode(text)};
    const SourceBatch batch = make_source_batch(seq, cfg.max_source_len);
    EmbeddingVector v(d, 0.0);
    std::size_t n = 0;
    if (cfg.architecture == Architecture::kEncoderDecoder) {
      const Tensor states = snapshot_->encode(batch);
      for (std::size_t t = 0; t < batch.len; ++t) {
        if (batch.ids[t] == Vocab::kPad) continue;
        for (std::size_t k = 0; k < d; ++k) v[k] += states[t * d + k];
        ++n;
      }
    } else {
      // no encoder: pool raw token embeddings
      const Tensor& table = snapshot_->parameters().front().value;
      for (int id : batch.ids) {
        if (id == Vocab::kPad) continue;
        for (std::size_t k = 0; k < d; ++k) v[k] += table[static_cast<std::size_t>(id) * d + k];
        ++n;
      }
    }
    if (n > 0) {
      for (double& x : v) x /= static_cast<double>(n);
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace semlogue
