#include "semlogue/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "semlogue/rng.hpp"

namespace semlogue {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian doubles");

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip norm must be positive");
  if (window == 0) throw std::invalid_argument("context window must be positive");
  if (eval_max_len == 0) throw std::invalid_argument("eval max length must be positive");
  if (provider.dim == 0) throw std::invalid_argument("provider dim must be positive");
  loss.validate();
  dialuation.validate();
}

json train_config_to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"max_steps", c.max_steps},
          {"clip_norm", c.clip_norm},
          {"window", c.window},
          {"decode_slack", c.decode_slack},
          {"loss", loss_config_to_json(c.loss)},
          {"provider", provider_config_to_json(c.provider)},
          {"delta_c", c.dialuation.delta_c},
          {"delta_ss", c.dialuation.delta_ss},
          {"eval_max_len", c.eval_max_len},
          {"validate_each_epoch", c.validate_each_epoch}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.window = j.value("window", c.window);
  c.decode_slack = j.value("decode_slack", c.decode_slack);
  if (j.contains("loss")) c.loss = loss_config_from_json(j["loss"]);
  if (j.contains("provider")) c.provider = provider_config_from_json(j["provider"]);
  c.dialuation.delta_c = j.value("delta_c", c.dialuation.delta_c);
  c.dialuation.delta_ss = j.value("delta_ss", c.dialuation.delta_ss);
  c.eval_max_len = j.value("eval_max_len", c.eval_max_len);
  c.validate_each_epoch = j.value("validate_each_epoch", c.validate_each_epoch);
  return c;
}

std::vector<EncodedExample> encode_examples(std::span<const TrainingExample> examples, const Vocab& vocab) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    out.push_back({vocab.encode(ex.context_text), vocab.encode(ex.gold_text), ex.context_text, ex.gold_text,
                   ex.dialogue_id, ex.turn_index});
  }
  return out;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::span<Parameter* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->value.shape(), 0.0);
      v_.emplace_back(p->value.shape(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("adam: parameter set changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->requires_grad) continue;
    auto& w = params[i]->value.values();
    auto& m = m_[i].values();
    auto& v = v_[i].values();
    const auto& g = grads[i].values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

void Adam::restore(std::uint64_t t, std::vector<Tensor> m, std::vector<Tensor> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g.values()) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) {
      for (double& x : g.values()) x *= s;
    }
  }
  return norm;
}

namespace {

json report_summary(const ScoreReport& r) {
  json means = json::object();
  for (std::size_t i = 0; i < r.metric_names.size(); ++i) means[r.metric_names[i]] = r.means[i];
  means["distinct1"] = r.distinct_1;
  means["distinct2"] = r.distinct_2;
  return {{"count", r.count}, {"means", means}};
}

}  // namespace

std::string RunLog::to_jsonl(bool with_wall_clock) const {
  std::ostringstream out;
  std::size_t next = 0;
  auto flush_until = [&](std::size_t epoch_limit, bool all) {
    for (; next < steps.size() && (all || steps[next].epoch <= epoch_limit); ++next) {
      json j = loss_breakdown_to_json(steps[next].loss, steps[next].step, variant);
      j["epoch"] = steps[next].epoch;
      j["type"] = "step";
      out << j.dump() << '\n';
    }
  };
  for (const auto& e : epochs) {
    flush_until(e.epoch, false);
    json j = {{"type", "epoch"}, {"epoch", e.epoch}};
    if (with_wall_clock) j["wall_seconds"] = e.wall_seconds;
    if (e.validation) j["validation"] = report_summary(*e.validation);
    out << j.dump() << '\n';
  }
  flush_until(0, true);
  return out.str();
}

void RunLog::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_jsonl();
}

// ---- checkpoints ----

namespace {

constexpr char kMagic[8] = {'S', 'E', 'M', 'L', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_tensor(std::string& out, const Tensor& t) {
  out.append(reinterpret_cast<const char*>(t.values().data()), t.size() * sizeof(double));
}

class Reader {
 public:
  Reader(std::string_view data, std::string path) : data_(data), path_(std::move(path)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor tensor(const Shape& shape) {
    Tensor t(shape);
    const auto raw = bytes(t.size() * sizeof(double));
    std::memcpy(t.values().data(), raw.data(), raw.size());
    return t;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CheckpointError(path_ + ": truncated checkpoint");
  }
  std::string_view data_;
  std::string path_;
  std::size_t pos_ = 0;
};

json shapes_of(std::span<const Parameter> params) {
  json out = json::array();
  for (const auto& p : params) out.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  return out;
}

std::vector<Parameter> read_params(Reader& r, const json& specs) {
  std::vector<Parameter> out;
  for (const auto& s : specs) {
    Parameter p;
    p.name = s.at("name").get<std::string>();
    p.value = r.tensor(s.at("shape").get<Shape>());
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  json header = {{"model_config", model_config_to_json(c.model_config)},
                 {"train_config", train_config_to_json(c.train_config)},
                 {"vocab", c.vocab_tokens},
                 {"vocab_hash", c.vocab_hash},
                 {"step", c.step},
                 {"epoch", c.epoch},
                 {"batch_in_epoch", c.batch_in_epoch},
                 {"model_params", shapes_of(c.model_params)},
                 {"estimator_params", shapes_of(c.estimator_params)},
                 {"adam_steps", c.adam_steps},
                 {"adam_slots", c.adam_m.size()}};
  const std::string h = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  for (const auto& p : c.model_params) put_tensor(out, p.value);
  for (const auto& p : c.estimator_params) put_tensor(out, p.value);
  for (const auto& m : c.adam_m) put_tensor(out, m);
  for (const auto& v : c.adam_v) put_tensor(out, v);
  put<std::uint64_t>(out, fnv1a(out));

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw CheckpointError("cannot write " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const Vocab* expected_vocab) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (data.size() < sizeof(kMagic) + 4 + 8 + 8 || data.compare(0, sizeof(kMagic), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(where + ": not a checkpoint file");
  }
  const std::string_view body(data.data(), data.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, data.data() + body.size(), 8);
  Reader r(body, where);
  r.bytes(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(where + ": checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  if (fnv1a(body) != stored) throw CheckpointError(where + ": checksum mismatch (file corrupted)");

  Checkpoint c;
  try {
    const auto header = json::parse(r.bytes(r.get<std::uint64_t>()));
    c.model_config = model_config_from_json(header.at("model_config"));
    c.train_config = train_config_from_json(header.at("train_config"));
    c.vocab_tokens = header.at("vocab").get<std::vector<std::string>>();
    c.vocab_hash = header.at("vocab_hash").get<std::uint64_t>();
    c.step = header.at("step");
    c.epoch = header.at("epoch");
    c.batch_in_epoch = header.at("batch_in_epoch");
    c.adam_steps = header.at("adam_steps");
    c.model_params = read_params(r, header.at("model_params"));
    c.estimator_params = read_params(r, header.at("estimator_params"));
    const std::size_t slots = header.at("adam_slots");
    std::vector<Shape> shapes;
    for (const auto& p : c.model_params) shapes.push_back(p.value.shape());
    for (const auto& p : c.estimator_params) shapes.push_back(p.value.shape());
    if (slots != 0 && slots != shapes.size()) throw CheckpointError(where + ": optimizer state does not match parameters");
    for (std::size_t i = 0; i < slots; ++i) c.adam_m.push_back(r.tensor(shapes[i]));
    for (std::size_t i = 0; i < slots; ++i) c.adam_v.push_back(r.tensor(shapes[i]));
  } catch (const json::exception& e) {
    throw CheckpointError(where + ": malformed header: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(where + ": " + e.what());
  }
  if (r.remaining() != 0) throw CheckpointError(where + ": trailing bytes after payload");
  if (Vocab::from_tokens(c.vocab_tokens).hash() != c.vocab_hash) {
    throw CheckpointError(where + ": stored vocabulary does not match its hash");
  }
  if (expected_vocab && expected_vocab->hash() != c.vocab_hash) {
    throw CheckpointError(where + ": vocabulary hash differs from the current vocabulary");
  }
  return c;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model m(ckpt.model_config);
  auto& params = m.parameters();
  if (params.size() != ckpt.model_params.size()) throw CheckpointError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != ckpt.model_params[i].name || params[i].value.shape() != ckpt.model_params[i].value.shape()) {
      throw CheckpointError("checkpoint parameter " + ckpt.model_params[i].name + " does not fit the model");
    }
    params[i].value = ckpt.model_params[i].value;
  }
  return m;
}

// ---- evaluation ----

namespace {

SourceBatch source_of(const Model& model, std::span<const EncodedExample> batch) {
  std::vector<std::vector<int>> seqs;
  seqs.reserve(batch.size());
  for (const auto& ex : batch) seqs.push_back(ex.source);
  return make_source_batch(seqs, model.config().max_source_len);
}

}  // namespace

std::vector<ScoreInput> generate_responses(const Model& model, const Vocab& vocab,
                                           std::span<const EncodedExample> examples, std::size_t max_len,
                                           std::size_t batch_size) {
  max_len = std::min(max_len, model.config().max_target_len);
  std::vector<ScoreInput> out;
  out.reserve(examples.size());
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const auto batch = examples.subspan(start, std::min(batch_size, examples.size() - start));
    const auto decoded = model.generate_greedy(source_of(model, batch), max_len);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      out.push_back({batch[i].context_text, batch[i].gold_text, vocab.decode(decoded[i])});
    }
  }
  return out;
}

ScoreReport evaluate_corpus(const Model& model, const Vocab& vocab, std::span<const EncodedExample> examples,
                            const EmbeddingProvider& provider, const EvalOptions& options) {
  const auto items = generate_responses(model, vocab, examples, options.max_len, options.batch_size);
  return evaluate_generations(items, provider, options.weights);
}

// ---- trainer ----

Trainer::Trainer(TrainConfig config, Model& model, const Vocab& vocab)
    : config_(std::move(config)), model_(model), vocab_(vocab), adam_(config_.lr) {
  config_.validate();
  if (model_.config().vocab_size != vocab_.size()) {
    throw std::invalid_argument("model vocab_size " + std::to_string(model_.config().vocab_size) +
                                " does not match vocabulary of " + std::to_string(vocab_.size()));
  }
  if (uses_estimator(config_.loss.variant)) {
    estimator_ = std::make_unique<BaselineEstimator>(vocab_.size(), derive_seed(config_.seed, 0x627365ULL));
  }
  if (needs_scores(config_.loss.variant) || config_.validate_each_epoch) {
    provider_ = make_provider(config_.provider, &model_, &vocab_);
  }
}

Trainer::~Trainer() = default;

std::vector<Parameter*> Trainer::all_parameters() {
  auto params = model_.parameter_ptrs();
  if (estimator_) {
    for (auto* p : estimator_->parameter_ptrs()) params.push_back(p);
  }
  return params;
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t n, std::size_t epoch) const {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(config_.seed, 0x65706f6368ULL + epoch));
  rng.shuffle(order);
  return order;
}

std::vector<double> Trainer::contanic_targets(std::span<const EncodedExample> batch,
                                              const SourceBatch& source) const {
  std::vector<std::size_t> caps;
  caps.reserve(batch.size());
  for (const auto& ex : batch) {
    caps.push_back(std::min(ex.gold.size() + config_.decode_slack, model_.config().max_target_len));
  }
  const auto decoded = model_.generate_greedy(source, caps);
  std::vector<ScoreInput> items;
  items.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    items.push_back({batch[i].context_text, batch[i].gold_text, vocab_.decode(decoded[i])});
  }
  const auto w = config_.loss.target_weights();
  const auto triples = score_batch(items, *provider_, w, config_.provider.strip_tags);
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& t : triples) out.push_back(std::clamp(contanic_target(t.cr, t.ss, w), 0.0, 1.0));
  return out;
}

LossBreakdown Trainer::step(std::span<const EncodedExample> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  std::vector<std::vector<int>> golds;
  golds.reserve(batch.size());
  for (const auto& ex : batch) golds.push_back(ex.gold);
  const SourceBatch src = source_of(model_, batch);
  const TargetBatch tgt = make_target_batch(golds, model_.config().max_target_len);

  std::vector<double> contanic;
  if (needs_scores(config_.loss.variant)) contanic = contanic_targets(batch, src);

  Tape tape;
  auto result = compute_loss(tape, model_, estimator_.get(), src, tgt, config_.loss, contanic);
  const auto& b = result.breakdown;
  auto fail = [&](const std::string& why) {
    json dump = {{"step", step_ + 1},
                 {"epoch", epoch_},
                 {"reason", why},
                 {"loss", loss_breakdown_to_json(b, step_ + 1, config_.loss.variant)},
                 {"contanic", contanic},
                 {"examples", json::array()}};
    for (const auto& ex : batch) {
      dump["examples"].push_back({{"dialogue_id", ex.dialogue_id},
                                  {"turn_index", ex.turn_index},
                                  {"context", ex.context_text},
                                  {"gold", ex.gold_text}});
    }
    throw NumericError("non-finite " + why + " at step " + std::to_string(step_ + 1), std::move(dump));
  };
  for (double v : {b.l_ce, b.l_scl, b.l_bse, b.l_total}) {
    if (!std::isfinite(v)) fail("loss");
  }

  auto params = all_parameters();
  auto grads = tape.backward(result.total, params);
  for (const auto& g : grads) {
    if (!g.all_finite()) fail("gradient");
  }
  clip_global_norm(grads, config_.clip_norm);
  adam_.step(params, grads);
  ++step_;
  return b;
}

void Trainer::train(std::span<const EncodedExample> train_set, std::span<const EncodedExample> validation,
                    RunLog& log) {
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  log.variant = config_.loss.variant;
  const std::size_t n = train_set.size();
  const std::size_t batches = (n + config_.batch_size - 1) / config_.batch_size;
  while (epoch_ < config_.epochs) {
    if (config_.max_steps && step_ >= config_.max_steps) return;
    const auto started = std::chrono::steady_clock::now();
    const auto order = epoch_order(n, epoch_);
    std::vector<EncodedExample> batch;
    for (; batch_in_epoch_ < batches; ++batch_in_epoch_) {
      if (config_.max_steps && step_ >= config_.max_steps) return;
      batch.clear();
      const std::size_t first = batch_in_epoch_ * config_.batch_size;
      for (std::size_t i = first; i < std::min(n, first + config_.batch_size); ++i) batch.push_back(train_set[order[i]]);
      StepLog entry{0, epoch_, step(batch)};
      entry.step = step_;
      log.steps.push_back(entry);
      if (on_step) on_step(entry);
    }
    batch_in_epoch_ = 0;
    EpochLog e;
    e.epoch = epoch_;
    if (config_.validate_each_epoch && !validation.empty()) {
      EvalOptions opts;
      opts.weights = {config_.loss.weights, config_.dialuation, config_.provider.strip_tags};
      opts.max_len = config_.eval_max_len;
      e.validation = evaluate_corpus(model_, vocab_, validation, *provider_, opts);
    }
    e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (auto* intrinsic = dynamic_cast<IntrinsicProvider*>(provider_.get())) intrinsic->refresh(model_);
    ++epoch_;
    log.epochs.push_back(std::move(e));
    if (on_epoch) on_epoch(log.epochs.back());
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.model_config = model_.config();
  c.train_config = config_;
  c.vocab_tokens = vocab_.tokens();
  c.vocab_hash = vocab_.hash();
  c.step = step_;
  c.epoch = epoch_;
  c.batch_in_epoch = batch_in_epoch_;
  c.model_params = model_.parameters();
  if (estimator_) c.estimator_params = estimator_->parameters();
  c.adam_steps = adam_.steps();
  c.adam_m = adam_.first_moments();
  c.adam_v = adam_.second_moments();
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  if (c.vocab_hash != vocab_.hash()) throw CheckpointError("checkpoint vocabulary differs from the trainer's");
  Model restored = model_from_checkpoint(c);
  model_ = restored;
  if (estimator_) {
    auto& ep = estimator_->parameters();
    if (ep.size() != c.estimator_params.size()) throw CheckpointError("checkpoint has no matching estimator state");
    for (std::size_t i = 0; i < ep.size(); ++i) {
      if (ep[i].value.shape() != c.estimator_params[i].value.shape()) throw CheckpointError("estimator shape mismatch");
      ep[i].value = c.estimator_params[i].value;
    }
  }
  adam_.restore(c.adam_steps, c.adam_m, c.adam_v);
  step_ = c.step;
  epoch_ = c.epoch;
  batch_in_epoch_ = c.batch_in_epoch;
  // the intrinsic snapshot is only reproducible at an epoch boundary
  if (auto* intrinsic = dynamic_cast<IntrinsicProvider*>(provider_.get()); intrinsic && batch_in_epoch_ == 0) {
    intrinsic->refresh(model_);
  }
}

}  // namespace semlogue
