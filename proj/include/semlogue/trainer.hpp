#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "semlogue/corpus.hpp"
#include "semlogue/embeddings.hpp"
#include "semlogue/losses.hpp"
#include "semlogue/metrics.hpp"
#include "semlogue/model.hpp"

namespace semlogue {

struct TrainConfig {
  double lr = 3e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  std::uint64_t seed = 17;
  std::size_t max_steps = 0;  // 0: no cap
  double clip_norm = 1.0;
  std::size_t window = 3;
  std::size_t decode_slack = 8;  // Contanic decodes stop at gold length + slack
  LossConfig loss{};
  ProviderConfig provider{};
  DialuationWeights dialuation{};
  std::size_t eval_max_len = 64;
  bool validate_each_epoch = true;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EncodedExample {
  std::vector<int> source;
  std::vector<int> gold;
  std::string context_text;
  std::string gold_text;
  std::string dialogue_id;
  std::size_t turn_index = 0;
};

std::vector<EncodedExample> encode_examples(std::span<const TrainingExample> examples, const Vocab& vocab);

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(std::span<Parameter* const> params, std::span<const Tensor> grads);
  std::uint64_t steps() const { return t_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(std::uint64_t t, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Scales grads in place so their global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_global_norm(std::span<Tensor> grads, double max_norm);

struct StepLog {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  LossBreakdown loss;
};

struct EpochLog {
  std::size_t epoch = 0;
  double wall_seconds = 0.0;
  std::optional<ScoreReport> validation;
};

struct RunLog {
  LossVariant variant = LossVariant::kCe;
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;

  // JSON lines; wall-clock fields are omitted unless asked for so that runs
  // can be compared byte for byte.
  std::string to_jsonl(bool with_wall_clock = true) const;
  void write(const std::filesystem::path& path) const;
};

class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, nlohmann::json dump)
      : std::runtime_error(what), dump_(std::move(dump)) {}
  const nlohmann::json& dump() const { return dump_; }

 private:
  nlohmann::json dump_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  std::vector<std::string> vocab_tokens;
  std::uint64_t vocab_hash = 0;
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  std::size_t batch_in_epoch = 0;
  std::vector<Parameter> model_params;
  std::vector<Parameter> estimator_params;
  std::uint64_t adam_steps = 0;
  std::vector<Tensor> adam_m, adam_v;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Refuses files with another version, a bad checksum, or (when `expected_vocab`
// is given) a different vocabulary.
Checkpoint load_checkpoint(const std::filesystem::path& path, const Vocab* expected_vocab = nullptr);
Model model_from_checkpoint(const Checkpoint& ckpt);

struct EvalOptions {
  EvalWeights weights{};
  std::size_t max_len = 64;
  std::size_t batch_size = 32;
};

std::vector<ScoreInput> generate_responses(const Model& model, const Vocab& vocab,
                                           std::span<const EncodedExample> examples, std::size_t max_len,
                                           std::size_t batch_size = 32);
ScoreReport evaluate_corpus(const Model& model, const Vocab& vocab, std::span<const EncodedExample> examples,
                            const EmbeddingProvider& provider, const EvalOptions& options);

class Trainer {
 public:
  Trainer(TrainConfig config, Model& model, const Vocab& vocab);
  ~Trainer();

  const TrainConfig& config() const { return config_; }
  Model& model() { return model_; }
  BaselineEstimator* estimator() { return estimator_.get(); }
  const EmbeddingProvider& provider() const { return *provider_; }
  std::uint64_t step_count() const { return step_; }

  // Runs until `epochs` are done or `max_steps` is reached, appending to log.
  void train(std::span<const EncodedExample> train_set, std::span<const EncodedExample> validation,
             RunLog& log);
  // One optimizer update on the given examples.
  LossBreakdown step(std::span<const EncodedExample> batch);

  // Contanic loss targets for a batch (detached, clamped to [0, 1]).
  std::vector<double> contanic_targets(std::span<const EncodedExample> batch, const SourceBatch& source) const;

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

  // Called after every optimizer step.
  std::function<void(const StepLog&)> on_step;
  // Called once an epoch (and its validation) is complete; checkpoint() taken
  // here resumes at the next epoch.
  std::function<void(const EpochLog&)> on_epoch;

 private:
  std::vector<Parameter*> all_parameters();
  std::vector<std::size_t> epoch_order(std::size_t n, std::size_t epoch) const;

  TrainConfig config_;
  Model& model_;
  const Vocab& vocab_;
  std::unique_ptr<BaselineEstimator> estimator_;
  std::unique_ptr<EmbeddingProvider> provider_;
  Adam adam_;
  std::uint64_t step_ = 0;
  std::size_t epoch_ = 0;
  std::size_t batch_in_epoch_ = 0;
};

}  // namespace semlogue
