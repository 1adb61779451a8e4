#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "semlogue/autodiff.hpp"

namespace semlogue {

enum class Architecture { kEncoderDecoder, kDecoderOnly };

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t encoder_layers = 1;
  std::size_t decoder_layers = 1;
  std::size_t heads = 2;
  std::size_t ff_dim = 64;
  std::size_t max_source_len = 256;
  std::size_t max_target_len = 256;
  Architecture architecture = Architecture::kEncoderDecoder;
  std::uint64_t seed = 17;

  void validate() const;
};

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Right-padded token ids, row-major [batch x len].
struct SourceBatch {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<int> ids;
};

// Teacher-forcing pair: inputs start with bos, targets end with eos; padded
// target slots hold -1.
struct TargetBatch {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<int> inputs;
  std::vector<int> targets;

  std::size_t real_length(std::size_t row) const;
};

// Sequences longer than max_len keep their last max_len tokens; `truncated`
// (optional) counts how many sequences were cut. Empty sequences become a
// single pad, which attention masks out.
SourceBatch make_source_batch(std::span<const std::vector<int>> seqs, std::size_t max_len,
                              std::size_t* truncated = nullptr);
// Gold responses are cut to max_len - 1 tokens so bos/eos fit.
TargetBatch make_target_batch(std::span<const std::vector<int>> golds, std::size_t max_len);

// Micro transformer: pre-norm encoder-decoder, or a decoder-only stack that
// reads [context, sep, response]. Sinusoidal positions.
class Model {
 public:
  explicit Model(ModelConfig config);
  Model(const Model& other);
  Model& operator=(const Model& other);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter*> parameter_ptrs();
  Parameter& parameter(std::string_view name);
  std::size_t parameter_count() const;

  // Encoder hidden states [batch x src_len x embed_dim]. Encoder-decoder only.
  Var encode(Tape& tape, const SourceBatch& source) const;
  Tensor encode(const SourceBatch& source) const;

  // Next-token logits [batch x tgt_len x vocab] under teacher forcing.
  Var forward_logits(Tape& tape, const SourceBatch& source, const TargetBatch& target) const;
  // softmax of forward_logits.
  Var forward_teacher_forced(Tape& tape, const SourceBatch& source, const TargetBatch& target) const;

  // Greedy argmax decoding (lowest id wins ties); returned sequences exclude
  // bos and eos. max_len <= max_target_len.
  std::vector<std::vector<int>> generate_greedy(const SourceBatch& source, std::size_t max_len) const;
  std::vector<std::vector<int>> generate_greedy(const SourceBatch& source,
                                                std::span<const std::size_t> max_lens) const;

  std::size_t truncation_count() const { return truncations_.load(); }

 private:
  struct LayerNormIdx {
    std::size_t gamma, beta;
  };
  struct AttentionIdx {
    std::size_t wq, bq, wk, wv, bv, wo, bo;
  };
  struct FeedForwardIdx {
    std::size_t w1, b1, w2, b2;
  };
  struct EncoderLayerIdx {
    LayerNormIdx ln1;
    AttentionIdx attn;
    LayerNormIdx ln2;
    FeedForwardIdx ff;
  };
  struct DecoderLayerIdx {
    LayerNormIdx ln1;
    AttentionIdx self_attn;
    LayerNormIdx ln2;
    AttentionIdx cross_attn;
    LayerNormIdx ln3;
    FeedForwardIdx ff;
  };

  std::size_t add_param(std::string name, Shape shape, std::size_t fan_in);
  LayerNormIdx add_layer_norm(const std::string& prefix);
  AttentionIdx add_attention(const std::string& prefix);
  FeedForwardIdx add_feed_forward(const std::string& prefix);
  void initialize();

  std::vector<Var> bind(Tape& tape) const;
  Var embed_tokens(Tape& tape, const std::vector<Var>& p, std::span<const int> ids,
                   std::span<const std::size_t> positions) const;
  Var attention(const std::vector<Var>& p, const AttentionIdx& w, Var query, Var memory,
                std::size_t batch, std::size_t q_len, std::size_t k_len, Var mask) const;
  Var feed_forward(const std::vector<Var>& p, const FeedForwardIdx& w, Var x) const;
  Var layer_norm(const std::vector<Var>& p, const LayerNormIdx& w, Var x) const;

  SourceBatch clip_source(const SourceBatch& source) const;
  Var encode_bound(Tape& tape, const std::vector<Var>& p, const SourceBatch& source) const;
  // Final decoder states [batch*tgt_len x d].
  Var decode_bound(Tape& tape, const std::vector<Var>& p, Var memory, const SourceBatch& source,
                   std::span<const int> inputs, std::size_t batch, std::size_t tgt_len) const;
  Var decoder_only_bound(Tape& tape, const std::vector<Var>& p, const SourceBatch& source,
                         std::span<const int> inputs, std::size_t batch, std::size_t tgt_len) const;
  Var hidden_states(Tape& tape, const std::vector<Var>& p, const SourceBatch& source,
                    std::span<const int> inputs, std::size_t batch, std::size_t tgt_len,
                    Var* cached_memory) const;

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::size_t tok_emb_ = 0;
  std::vector<EncoderLayerIdx> encoder_;
  LayerNormIdx encoder_norm_{};
  std::vector<DecoderLayerIdx> decoder_;
  std::vector<EncoderLayerIdx> causal_;
  LayerNormIdx decoder_norm_{};
  std::size_t out_w_ = 0, out_b_ = 0;
  std::vector<std::size_t> fan_in_;  // construction only
  mutable std::atomic<std::size_t> truncations_{0};
};

// Sinusoidal position encoding row for `position`.
void sinusoidal_position(std::size_t position, std::span<double> row);

}  // namespace semlogue
