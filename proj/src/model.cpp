#include "semlogue/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "semlogue/corpus.hpp"
#include "semlogue/rng.hpp"

namespace semlogue {

namespace {
constexpr double kMasked = -1e9;
}

void ModelConfig::validate() const {
  if (vocab_size == 0) throw std::invalid_argument("model config: vocab_size must be positive");
  if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
    throw std::invalid_argument("model config: embed_dim must be a positive multiple of heads");
  }
  if (ff_dim == 0) throw std::invalid_argument("model config: ff_dim must be positive");
  if (max_source_len < 1 || max_target_len < 1) {
    throw std::invalid_argument("model config: sequence lengths must be at least 1");
  }
  if (decoder_layers == 0) throw std::invalid_argument("model config: need at least one decoder layer");
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers},
          {"heads", c.heads},
          {"ff_dim", c.ff_dim},
          {"max_source_len", c.max_source_len},
          {"max_target_len", c.max_target_len},
          {"architecture",
           c.architecture == Architecture::kEncoderDecoder ? "encoder-decoder" : "decoder-only"},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
  c.heads = j.value("heads", c.heads);
  c.ff_dim = j.value("ff_dim", c.ff_dim);
  c.max_source_len = j.value("max_source_len", c.max_source_len);
  c.max_target_len = j.value("max_target_len", c.max_target_len);
  const auto arch = j.value("architecture", std::string("encoder-decoder"));
  if (arch == "encoder-decoder") {
    c.architecture = Architecture::kEncoderDecoder;
  } else if (arch == "decoder-only") {
    c.architecture = Architecture::kDecoderOnly;
  } else {
    throw std::invalid_argument("unknown architecture \"" + arch + "\"");
  }
  c.seed = j.value("seed", c.seed);
  return c;
}

std::size_t TargetBatch::real_length(std::size_t row) const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < len; ++t) n += targets[row * len + t] >= 0 ? 1 : 0;
  return n;
}

SourceBatch make_source_batch(std::span<const std::vector<int>> seqs, std::size_t max_len,
                              std::size_t* truncated) {
  if (seqs.empty()) throw std::invalid_argument("make_source_batch: empty batch");
  if (max_len == 0) throw std::invalid_argument("make_source_batch: max_len must be positive");
  SourceBatch b;
  b.batch = seqs.size();
  for (const auto& s : seqs) b.len = std::max(b.len, std::min(s.size(), max_len));
  b.len = std::max<std::size_t>(b.len, 1);
  b.ids.assign(b.batch * b.len, Vocab::kPad);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = seqs[i];
    const std::size_t keep = std::min(s.size(), max_len);
    if (keep < s.size() && truncated) ++*truncated;
    std::copy(s.end() - static_cast<std::ptrdiff_t>(keep), s.end(), b.ids.begin() + i * b.len);
  }
  return b;
}

TargetBatch make_target_batch(std::span<const std::vector<int>> golds, std::size_t max_len) {
  if (golds.empty()) throw std::invalid_argument("make_target_batch: empty batch");
  if (max_len < 1) throw std::invalid_argument("make_target_batch: max_len must be positive");
  TargetBatch b;
  b.batch = golds.size();
  for (const auto& g : golds) b.len = std::max(b.len, std::min(g.size(), max_len - 1) + 1);
  b.inputs.assign(b.batch * b.len, Vocab::kPad);
  b.targets.assign(b.batch * b.len, -1);
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const std::size_t n = std::min(golds[i].size(), max_len - 1);
    b.inputs[i * b.len] = Vocab::kBos;
    for (std::size_t t = 0; t < n; ++t) {
      b.inputs[i * b.len + t + 1] = golds[i][t];
      b.targets[i * b.len + t] = golds[i][t];
    }
    b.targets[i * b.len + n] = Vocab::kEos;
  }
  return b;
}

void sinusoidal_position(std::size_t position, std::span<double> row) {
  const std::size_t d = row.size();
  for (std::size_t i = 0; i < d; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
    row[i] = std::sin(static_cast<double>(position) * freq);
    if (i + 1 < d) row[i + 1] = std::cos(static_cast<double>(position) * freq);
  }
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t d = config_.embed_dim;
  tok_emb_ = add_param("tok_emb", {config_.vocab_size, d}, d);
  if (config_.architecture == Architecture::kEncoderDecoder) {
    for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
      const std::string pre = "enc." + std::to_string(l) + ".";
      EncoderLayerIdx layer;
      layer.ln1 = add_layer_norm(pre + "ln1");
      layer.attn = add_attention(pre + "attn");
      layer.ln2 = add_layer_norm(pre + "ln2");
      layer.ff = add_feed_forward(pre + "ff");
      encoder_.push_back(layer);
    }
    encoder_norm_ = add_layer_norm("enc.ln_f");
    for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
      const std::string pre = "dec." + std::to_string(l) + ".";
      DecoderLayerIdx layer;
      layer.ln1 = add_layer_norm(pre + "ln1");
      layer.self_attn = add_attention(pre + "self_attn");
      layer.ln2 = add_layer_norm(pre + "ln2");
      layer.cross_attn = add_attention(pre + "cross_attn");
      layer.ln3 = add_layer_norm(pre + "ln3");
      layer.ff = add_feed_forward(pre + "ff");
      decoder_.push_back(layer);
    }
  } else {
    for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
      const std::string pre = "dec." + std::to_string(l) + ".";
      EncoderLayerIdx layer;
      layer.ln1 = add_layer_norm(pre + "ln1");
      layer.attn = add_attention(pre + "self_attn");
      layer.ln2 = add_layer_norm(pre + "ln2");
      layer.ff = add_feed_forward(pre + "ff");
      causal_.push_back(layer);
    }
  }
  decoder_norm_ = add_layer_norm("dec.ln_f");
  out_w_ = add_param("out.w", {d, config_.vocab_size}, d);
  out_b_ = add_param("out.b", {config_.vocab_size}, d);
  initialize();
}

Model::Model(const Model& other)
    : config_(other.config_),
      params_(other.params_),
      tok_emb_(other.tok_emb_),
      encoder_(other.encoder_),
      encoder_norm_(other.encoder_norm_),
      decoder_(other.decoder_),
      causal_(other.causal_),
      decoder_norm_(other.decoder_norm_),
      out_w_(other.out_w_),
      out_b_(other.out_b_),
      truncations_(other.truncations_.load()) {}

Model& Model::operator=(const Model& other) {
  if (this == &other) return *this;
  config_ = other.config_;
  params_ = other.params_;
  tok_emb_ = other.tok_emb_;
  encoder_ = other.encoder_;
  encoder_norm_ = other.encoder_norm_;
  decoder_ = other.decoder_;
  causal_ = other.causal_;
  decoder_norm_ = other.decoder_norm_;
  out_w_ = other.out_w_;
  out_b_ = other.out_b_;
  truncations_ = other.truncations_.load();
  return *this;
}

// fan_in 0 means a layer-norm parameter.
std::size_t Model::add_param(std::string name, Shape shape, std::size_t fan_in) {
  Parameter p;
  p.name = std::move(name);
  p.value = Tensor(std::move(shape));
  params_.push_back(std::move(p));
  fan_in_.push_back(fan_in);
  return params_.size() - 1;
}

Model::LayerNormIdx Model::add_layer_norm(const std::string& prefix) {
  LayerNormIdx w;
  w.gamma = add_param(prefix + ".gamma", {config_.embed_dim}, 0);
  w.beta = add_param(prefix + ".beta", {config_.embed_dim}, 0);
  return w;
}

Model::AttentionIdx Model::add_attention(const std::string& prefix) {
  const std::size_t d = config_.embed_dim;
  AttentionIdx w;
  w.wq = add_param(prefix + ".wq", {d, d}, d);
  w.bq = add_param(prefix + ".bq", {d}, d);
  w.wk = add_param(prefix + ".wk", {d, d}, d);
  w.wv = add_param(prefix + ".wv", {d, d}, d);
  w.bv = add_param(prefix + ".bv", {d}, d);
  w.wo = add_param(prefix + ".wo", {d, d}, d);
  w.bo = add_param(prefix + ".bo", {d}, d);
  return w;
}

Model::FeedForwardIdx Model::add_feed_forward(const std::string& prefix) {
  const std::size_t d = config_.embed_dim, f = config_.ff_dim;
  FeedForwardIdx w;
  w.w1 = add_param(prefix + ".w1", {d, f}, d);
  w.b1 = add_param(prefix + ".b1", {f}, d);
  w.w2 = add_param(prefix + ".w2", {f, d}, f);
  w.b2 = add_param(prefix + ".b2", {d}, f);
  return w;
}

void Model::initialize() {
  Rng rng(derive_seed(config_.seed, 0x6d6f64656cULL));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (fan_in_[i] == 0) {
      const bool beta = p.name.ends_with(".beta");
      p.value.fill(beta ? 0.0 : 1.0);
      continue;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in_[i]));
    for (double& x : p.value.values()) x = rng.uniform(-bound, bound);
  }
  fan_in_.clear();
}

std::vector<Parameter*> Model::parameter_ptrs() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

Parameter& Model::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<Var> Model::bind(Tape& tape) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(tape.leaf(p));
  return vars;
}

Var Model::embed_tokens(Tape& tape, const std::vector<Var>& p, std::span<const int> ids,
                        std::span<const std::size_t> positions) const {
  const std::size_t d = config_.embed_dim;
  Var x = ops::scale(ops::embedding(p[tok_emb_], ids), std::sqrt(static_cast<double>(d)));
  Tensor pe({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    sinusoidal_position(positions[i], pe.data().subspan(i * d, d));
  }
  return ops::add(x, tape.constant(std::move(pe)));
}

Var Model::layer_norm(const std::vector<Var>& p, const LayerNormIdx& w, Var x) const {
  return ops::layer_norm(x, p[w.gamma], p[w.beta]);
}

Var Model::feed_forward(const std::vector<Var>& p, const FeedForwardIdx& w, Var x) const {
  Var h = ops::relu(ops::add(ops::matmul(x, p[w.w1]), p[w.b1]));
  return ops::add(ops::matmul(h, p[w.w2]), p[w.b2]);
}

Var Model::attention(const std::vector<Var>& p, const AttentionIdx& w, Var query, Var memory,
                     std::size_t batch, std::size_t q_len, std::size_t k_len, Var mask) const {
  const std::size_t d = config_.embed_dim, h = config_.heads, dh = d / h;
  static constexpr std::array<std::size_t, 4> kSplit{0, 2, 1, 3};
  static constexpr std::array<std::size_t, 4> kSplitT{0, 2, 3, 1};

  Var q = ops::add(ops::matmul(query, p[w.wq]), p[w.bq]);
  Var k = ops::matmul(memory, p[w.wk]);
  Var v = ops::add(ops::matmul(memory, p[w.wv]), p[w.bv]);
  q = ops::reshape(ops::permute(ops::reshape(q, {batch, q_len, h, dh}), kSplit), {batch * h, q_len, dh});
  k = ops::reshape(ops::permute(ops::reshape(k, {batch, k_len, h, dh}), kSplitT), {batch * h, dh, k_len});
  v = ops::reshape(ops::permute(ops::reshape(v, {batch, k_len, h, dh}), kSplit), {batch * h, k_len, dh});

  Var scores = ops::scale(ops::matmul(q, k), 1.0 / std::sqrt(static_cast<double>(dh)));
  scores = ops::add(ops::reshape(scores, {batch, h, q_len, k_len}), mask);
  Var weights = ops::reshape(ops::softmax(scores), {batch * h, q_len, k_len});
  Var ctx = ops::matmul(weights, v);
  ctx = ops::reshape(ops::permute(ops::reshape(ctx, {batch, h, q_len, dh}), kSplit), {batch * q_len, d});
  return ops::add(ops::matmul(ctx, p[w.wo]), p[w.bo]);
}

SourceBatch Model::clip_source(const SourceBatch& source) const {
  if (source.batch == 0 || source.ids.size() != source.batch * source.len) {
    throw std::invalid_argument("source batch is malformed");
  }
  for (int id : source.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw std::invalid_argument("token id " + std::to_string(id) + " outside vocabulary of " +
                                  std::to_string(config_.vocab_size));
    }
  }
  if (source.len <= config_.max_source_len) return source;
  std::vector<std::vector<int>> rows(source.batch);
  for (std::size_t b = 0; b < source.batch; ++b) {
    for (std::size_t t = 0; t < source.len; ++t) {
      const int id = source.ids[b * source.len + t];
      if (id != Vocab::kPad) rows[b].push_back(id);
    }
  }
  std::size_t cut = 0;
  SourceBatch clipped = make_source_batch(rows, config_.max_source_len, &cut);
  truncations_ += cut;
  return clipped;
}

Var Model::encode_bound(Tape& tape, const std::vector<Var>& p, const SourceBatch& source) const {
  const std::size_t B = source.batch, S = source.len;
  std::vector<std::size_t> positions(B * S);
  for (std::size_t i = 0; i < B * S; ++i) positions[i] = i % S;
  Var x = embed_tokens(tape, p, source.ids, positions);

  Tensor mask({B, 1, 1, S}, 0.0);
  for (std::size_t i = 0; i < B * S; ++i) {
    if (source.ids[i] == Vocab::kPad) mask[i] = kMasked;
  }
  Var m = tape.constant(std::move(mask));
  for (const auto& layer : encoder_) {
    Var n = layer_norm(p, layer.ln1, x);
    x = ops::add(x, attention(p, layer.attn, n, n, B, S, S, m));
    x = ops::add(x, feed_forward(p, layer.ff, layer_norm(p, layer.ln2, x)));
  }
  return layer_norm(p, encoder_norm_, x);
}

Var Model::decode_bound(Tape& tape, const std::vector<Var>& p, Var memory, const SourceBatch& source,
                        std::span<const int> inputs, std::size_t batch, std::size_t tgt_len) const {
  const std::size_t B = batch, T = tgt_len, S = source.len;
  std::vector<std::size_t> positions(B * T);
  for (std::size_t i = 0; i < B * T; ++i) positions[i] = i % T;
  Var y = embed_tokens(tape, p, inputs, positions);

  Tensor causal({1, 1, T, T}, 0.0);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = i + 1; j < T; ++j) causal[i * T + j] = kMasked;
  }
  Tensor cross({B, 1, 1, S}, 0.0);
  for (std::size_t i = 0; i < B * S; ++i) {
    if (source.ids[i] == Vocab::kPad) cross[i] = kMasked;
  }
  Var self_mask = tape.constant(std::move(causal));
  Var cross_mask = tape.constant(std::move(cross));
  for (const auto& layer : decoder_) {
    Var n = layer_norm(p, layer.ln1, y);
    y = ops::add(y, attention(p, layer.self_attn, n, n, B, T, T, self_mask));
    y = ops::add(y, attention(p, layer.cross_attn, layer_norm(p, layer.ln2, y), memory, B, T, S, cross_mask));
    y = ops::add(y, feed_forward(p, layer.ff, layer_norm(p, layer.ln3, y)));
  }
  return layer_norm(p, decoder_norm_, y);
}

Var Model::decoder_only_bound(Tape& tape, const std::vector<Var>& p, const SourceBatch& source,
                              std::span<const int> inputs, std::size_t batch,
                              std::size_t tgt_len) const {
  const std::size_t B = batch, S = source.len, T = tgt_len, L = S + T;
  // Context is left-aligned against the separator: [pad.., ctx.., sep, y..].
  std::vector<int> ids(B * L, Vocab::kPad);
  std::vector<std::size_t> positions(B * L, 0);
  Tensor mask({B, 1, L, L}, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t real = 0;
    while (real < S && source.ids[b * S + real] != Vocab::kPad) ++real;
    const std::size_t pad = S - real;
    for (std::size_t t = 0; t < real; ++t) ids[b * L + pad + t] = source.ids[b * S + t];
    for (std::size_t t = 0; t < T; ++t) {
      const int id = inputs[b * T + t];
      ids[b * L + S + t] = (t == 0 && id == Vocab::kBos) ? Vocab::kSep : id;
    }
    for (std::size_t t = pad; t < L; ++t) positions[b * L + t] = t - pad;
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        if (j > i || j < pad) mask[((b * L) + i) * L + j] = kMasked;
      }
    }
  }
  Var x = embed_tokens(tape, p, ids, positions);
  Var m = tape.constant(std::move(mask));
  for (const auto& layer : causal_) {
    Var n = layer_norm(p, layer.ln1, x);
    x = ops::add(x, attention(p, layer.attn, n, n, B, L, L, m));
    x = ops::add(x, feed_forward(p, layer.ff, layer_norm(p, layer.ln2, x)));
  }
  x = layer_norm(p, decoder_norm_, x);
  Var tail = ops::slice(ops::reshape(x, {B, L, config_.embed_dim}), 1, S, T);
  return ops::reshape(tail, {B * T, config_.embed_dim});
}

Var Model::hidden_states(Tape& tape, const std::vector<Var>& p, const SourceBatch& source,
                         std::span<const int> inputs, std::size_t batch, std::size_t tgt_len,
                         Var* cached_memory) const {
  if (config_.architecture == Architecture::kDecoderOnly) {
    return decoder_only_bound(tape, p, source, inputs, batch, tgt_len);
  }
  Var memory = cached_memory && cached_memory->valid() ? *cached_memory : encode_bound(tape, p, source);
  if (cached_memory) *cached_memory = memory;
  return decode_bound(tape, p, memory, source, inputs, batch, tgt_len);
}

Var Model::encode(Tape& tape, const SourceBatch& source) const {
  if (config_.architecture != Architecture::kEncoderDecoder) {
    throw std::logic_error("encode: decoder-only model has no encoder");
  }
  const SourceBatch src = clip_source(source);
  auto p = bind(tape);
  Var h = encode_bound(tape, p, src);
  return ops::reshape(h, {src.batch, src.len, config_.embed_dim});
}

Tensor Model::encode(const SourceBatch& source) const {
  Tape tape;
  tape.set_grad_enabled(false);
  return encode(tape, source).value();
}

Var Model::forward_logits(Tape& tape, const SourceBatch& source, const TargetBatch& target) const {
  if (target.batch != source.batch || target.inputs.size() != target.batch * target.len ||
      target.targets.size() != target.inputs.size()) {
    throw std::invalid_argument("target batch does not match source batch");
  }
  if (target.len > config_.max_target_len) {
    throw std::invalid_argument("target length " + std::to_string(target.len) + " exceeds maximum " +
                                std::to_string(config_.max_target_len));
  }
  for (int id : target.inputs) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw std::invalid_argument("target id " + std::to_string(id) + " outside vocabulary");
    }
  }
  const SourceBatch src = clip_source(source);
  auto p = bind(tape);
  Var h = hidden_states(tape, p, src, target.inputs, target.batch, target.len, nullptr);
  Var logits = ops::add(ops::matmul(h, p[out_w_]), p[out_b_]);
  return ops::reshape(logits, {target.batch, target.len, config_.vocab_size});
}

Var Model::forward_teacher_forced(Tape& tape, const SourceBatch& source,
                                  const TargetBatch& target) const {
  return ops::softmax(forward_logits(tape, source, target));
}

std::vector<std::vector<int>> Model::generate_greedy(const SourceBatch& source,
                                                     std::size_t max_len) const {
  std::vector<std::size_t> caps(source.batch, max_len);
  return generate_greedy(source, caps);
}

std::vector<std::vector<int>> Model::generate_greedy(const SourceBatch& source,
                                                     std::span<const std::size_t> max_lens) const {
  if (max_lens.size() != source.batch) throw std::invalid_argument("one length cap per example required");
  std::size_t longest = 0;
  for (auto cap : max_lens) longest = std::max(longest, cap);
  if (longest > config_.max_target_len) {
    throw std::invalid_argument("max_len " + std::to_string(longest) + " exceeds maximum target length " +
                                std::to_string(config_.max_target_len));
  }
  const SourceBatch src = clip_source(source);
  const std::size_t B = src.batch, V = config_.vocab_size, d = config_.embed_dim;
  std::vector<std::vector<int>> out(B);
  std::vector<bool> done(B, false);
  for (std::size_t b = 0; b < B; ++b) done[b] = max_lens[b] == 0;

  Tape tape;
  tape.set_grad_enabled(false);
  auto p = bind(tape);
  Var memory;
  std::vector<int> prefix(B, Vocab::kBos);
  for (std::size_t step = 0; step < longest; ++step) {
    if (std::all_of(done.begin(), done.end(), [](bool x) { return x; })) break;
    const std::size_t T = step + 1;
    Var h = hidden_states(tape, p, src, prefix, B, T, &memory);
    Var last = ops::reshape(ops::slice(ops::reshape(h, {B, T, d}), 1, T - 1, 1), {B, d});
    const Tensor& logits = ops::add(ops::matmul(last, p[out_w_]), p[out_b_]).value();

    std::vector<int> next(B * (T + 1), Vocab::kPad);
    for (std::size_t b = 0; b < B; ++b) {
      std::copy_n(prefix.begin() + b * T, T, next.begin() + b * (T + 1));
      int token = Vocab::kPad;
      if (!done[b]) {
        const double* row = logits.data().data() + b * V;
        std::size_t best = 0;
        for (std::size_t j = 1; j < V; ++j) {
          if (row[j] > row[best]) best = j;
        }
        token = static_cast<int>(best);
        if (token == Vocab::kEos) {
          done[b] = true;
        } else {
          out[b].push_back(token);
          if (out[b].size() >= max_lens[b]) done[b] = true;
        }
      }
      next[b * (T + 1) + T] = token;
    }
    prefix = std::move(next);
  }
  return out;
}

}  // namespace semlogue
