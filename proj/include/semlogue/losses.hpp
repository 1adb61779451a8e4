#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "semlogue/autodiff.hpp"
#include "semlogue/model.hpp"
#include "semlogue/scores.hpp"

namespace semlogue {

enum class LossVariant {
  kCe,
  kWeightedSemanticCe,
  kWeightedSemanticContextCe,
  kSemanticReinforcement,
  kSemTextualLogue,
};

std::string_view loss_variant_name(LossVariant v);
LossVariant parse_loss_variant(std::string_view name);
const std::vector<LossVariant>& all_loss_variants();

// Variant needs per-example Contanic scores from greedy decodes.
bool needs_scores(LossVariant v);
// Variant trains the baseline estimator (the two combined-loss variants).
bool uses_estimator(LossVariant v);

struct LossConfig {
  LossVariant variant = LossVariant::kCe;
  double lambda = 0.5;
  double sigma = 1.0;
  ContanicWeights weights{};

  void validate() const;
  // Weights for the Contanic target; the semantic-only variants drop alpha.
  ContanicWeights target_weights() const;
};

nlohmann::json loss_config_to_json(const LossConfig& c);
LossConfig loss_config_from_json(const nlohmann::json& j);

// Time-mean-pooled output distribution -> hidden (ReLU) -> sigmoid.
class BaselineEstimator {
 public:
  static constexpr std::size_t kHidden = 128;

  BaselineEstimator(std::size_t vocab_size, std::uint64_t seed, std::size_t hidden = kHidden);

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter*> parameter_ptrs();
  std::size_t vocab_size() const { return vocab_size_; }

  // dists [B x T x V]; positions whose target is -1 are left out of the pool.
  // Returns scores [B]. With `shield` the estimator's own parameters enter as
  // constants, so gradients only reach the distributions.
  Var forward(Tape& tape, Var dists, std::span<const int> targets, bool shield = false) const;

 private:
  std::size_t vocab_size_;
  std::vector<Parameter> params_;
};

// Per-example token-mean cross-entropy [B] from probabilities (log clamped at
// 1e-12). Throws if a row has no target.
Var example_cross_entropy(Var dists, std::span<const int> targets);
// Same from logits through the fused primitive.
Var example_cross_entropy_logits(Var logits, std::span<const int> targets);
// Mean of the per-example values. Throws if every position is padding.
Var cross_entropy(Var dists, std::span<const int> targets);

// mean((1 - c_i) * ce_i); c_i are constants in [0, 1].
Var weighted_contanic_ce(Var example_ce, std::span<const double> contanic);
// mean((1 - bse_i) * ce_i). Pass shielded scores to keep the estimator out.
Var l_scl(Var bse_score, Var example_ce);
// mean((bse_i - c_i)^2)
Var l_bse(Var bse_score, std::span<const double> contanic);
Var semtextuallogue_total(Var l_ce, Var l_scl, Var l_bse, double lambda, double sigma);
double semtextuallogue_total(double l_ce, double l_scl, double l_bse, double lambda, double sigma);

struct LossBreakdown {
  double l_ce = 0.0;
  double l_scl = 0.0;
  double l_bse = 0.0;
  double l_total = 0.0;
  double contanic = 0.0;
  double bse_score = 0.0;

  // l_total as rebuilt from the components for `config`.
  double recompose(const LossConfig& config) const;
};

nlohmann::json loss_breakdown_to_json(const LossBreakdown& b, std::uint64_t step, LossVariant variant);

struct LossResult {
  Var total;
  LossBreakdown breakdown;
};

// Assembles the configured loss for one batch. `contanic` holds one detached
// target per example (ignored by the ce variant, may be empty there).
// `estimator` is required for the combined-loss variants. The shielded score
// inside L_SCL is computed with `shield_source` when given (a frozen copy, for
// finite-difference checks), else with `estimator`.
LossResult compute_loss(Tape& tape, const Model& model, const BaselineEstimator* estimator,
                        const SourceBatch& source, const TargetBatch& target,
                        const LossConfig& config, std::span<const double> contanic,
                        const BaselineEstimator* shield_source = nullptr);

}  // namespace semlogue
