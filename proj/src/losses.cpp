#include "semlogue/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "semlogue/rng.hpp"

namespace semlogue {

std::string_view loss_variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::kCe: return "ce";
    case LossVariant::kWeightedSemanticCe: return "weighted-semantic-ce";
    case LossVariant::kWeightedSemanticContextCe: return "weighted-semantic-context-ce";
    case LossVariant::kSemanticReinforcement: return "semantic-reinforcement";
    case LossVariant::kSemTextualLogue: return "semtextuallogue";
  }
  return "ce";
}

const std::vector<LossVariant>& all_loss_variants() {
  static const std::vector<LossVariant> all{
      LossVariant::kCe, LossVariant::kWeightedSemanticCe, LossVariant::kWeightedSemanticContextCe,
      LossVariant::kSemanticReinforcement, LossVariant::kSemTextualLogue};
  return all;
}

LossVariant parse_loss_variant(std::string_view name) {
  for (auto v : all_loss_variants()) {
    if (loss_variant_name(v) == name) return v;
  }
  throw std::invalid_argument("unknown loss variant \"" + std::string(name) + "\"");
}

bool needs_scores(LossVariant v) { return v != LossVariant::kCe; }

bool uses_estimator(LossVariant v) {
  return v == LossVariant::kSemanticReinforcement || v == LossVariant::kSemTextualLogue;
}

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw std::invalid_argument("sigma must lie in [0, 1]");
  weights.validate();
  target_weights().validate();
}

ContanicWeights LossConfig::target_weights() const {
  ContanicWeights w = weights;
  if (variant == LossVariant::kWeightedSemanticCe || variant == LossVariant::kSemanticReinforcement) {
    w.alpha = 0.0;
  }
  return w;
}

nlohmann::json loss_config_to_json(const LossConfig& c) {
  return {{"variant", loss_variant_name(c.variant)},
          {"lambda", c.lambda},
          {"sigma", c.sigma},
          {"alpha", c.weights.alpha},
          {"beta", c.weights.beta}};
}

LossConfig loss_config_from_json(const nlohmann::json& j) {
  LossConfig c;
  if (j.contains("variant")) c.variant = parse_loss_variant(j["variant"].get<std::string>());
  c.lambda = j.value("lambda", c.lambda);
  c.sigma = j.value("sigma", c.sigma);
  c.weights.alpha = j.value("alpha", c.weights.alpha);
  c.weights.beta = j.value("beta", c.weights.beta);
  return c;
}

BaselineEstimator::BaselineEstimator(std::size_t vocab_size, std::uint64_t seed, std::size_t hidden)
    : vocab_size_(vocab_size) {
  if (vocab_size == 0 || hidden == 0) throw std::invalid_argument("estimator sizes must be positive");
  params_.push_back({"bse.w1", Tensor({vocab_size, hidden})});
  params_.push_back({"bse.b1", Tensor({hidden})});
  params_.push_back({"bse.w2", Tensor({hidden, 1})});
  params_.push_back({"bse.b2", Tensor({1})});
  // The pooled input is a probability vector with entries near 1/V, so the
  // first layer uses a bound of 1 rather than 1/sqrt(V) to keep its output
  // from collapsing onto the bias.
  Rng rng(derive_seed(seed, 0x627365ULL));
  const std::array<double, 4> bounds{1.0, 1.0 / std::sqrt(static_cast<double>(vocab_size)),
                                     1.0 / std::sqrt(static_cast<double>(hidden)),
                                     1.0 / std::sqrt(static_cast<double>(hidden))};
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (double& x : params_[i].value.values()) x = rng.uniform(-bounds[i], bounds[i]);
  }
}

std::vector<Parameter*> BaselineEstimator::parameter_ptrs() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

namespace {

struct Dims {
  std::size_t batch, len, vocab;
};

Dims dims_of(Var dists, std::span<const int> targets) {
  const auto& s = dists.shape();
  if (s.size() != 3) throw ShapeError("loss", "expected [batch x len x vocab], got " + shape_str(s));
  if (targets.size() != s[0] * s[1]) {
    throw ShapeError("loss", std::to_string(targets.size()) + " targets for " + shape_str(s));
  }
  return {s[0], s[1], s[2]};
}

// 1/n_b per row, where n_b counts non-pad targets.
Tensor inverse_lengths(const Dims& d, std::span<const int> targets) {
  Tensor inv({d.batch});
  for (std::size_t b = 0; b < d.batch; ++b) {
    std::size_t n = 0;
    for (std::size_t t = 0; t < d.len; ++t) n += targets[b * d.len + t] >= 0 ? 1 : 0;
    if (n == 0) throw std::invalid_argument("cross entropy: example " + std::to_string(b) + " is all padding");
    inv[b] = 1.0 / static_cast<double>(n);
  }
  return inv;
}

std::vector<double> checked_unit(std::span<const double> values, std::size_t batch, const char* what) {
  if (values.size() != batch) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(batch) + " scores, got " +
                                std::to_string(values.size()));
  }
  for (double c : values) {
    if (!(c >= 0.0 && c <= 1.0)) {
      throw std::invalid_argument(std::string(what) + ": score " + std::to_string(c) + " outside [0, 1]");
    }
  }
  return {values.begin(), values.end()};
}

}  // namespace

Var BaselineEstimator::forward(Tape& tape, Var dists, std::span<const int> targets, bool shield) const {
  const Dims d = dims_of(dists, targets);
  if (d.vocab != vocab_size_) {
    throw ShapeError("bse", "vocab " + std::to_string(d.vocab) + " vs estimator " + std::to_string(vocab_size_));
  }
  Tensor pool({d.batch, 1, d.len}, 0.0);
  for (std::size_t b = 0; b < d.batch; ++b) {
    std::size_t n = 0;
    for (std::size_t t = 0; t < d.len; ++t) n += targets[b * d.len + t] >= 0 ? 1 : 0;
    for (std::size_t t = 0; t < d.len; ++t) {
      if (targets[b * d.len + t] >= 0) pool[b * d.len + t] = 1.0 / static_cast<double>(n);
    }
  }
  Var pooled = ops::reshape(ops::matmul(tape.constant(std::move(pool)), dists), {d.batch, d.vocab});
  auto bind = [&](const Parameter& p) { return shield ? tape.constant(p.value) : tape.leaf(p); };
  Var h = ops::relu(ops::add(ops::matmul(pooled, bind(params_[0])), bind(params_[1])));
  Var out = ops::sigmoid(ops::add(ops::matmul(h, bind(params_[2])), bind(params_[3])));
  return ops::reshape(out, {d.batch});
}

Var example_cross_entropy(Var dists, std::span<const int> targets) {
  const Dims d = dims_of(dists, targets);
  Tape& tape = dists.tape();
  Tensor onehot({d.batch, d.len, d.vocab}, 0.0);
  for (std::size_t i = 0; i < d.batch * d.len; ++i) {
    const int y = targets[i];
    if (y < 0) continue;
    if (static_cast<std::size_t>(y) >= d.vocab) throw std::invalid_argument("gold id outside vocabulary");
    onehot[i * d.vocab + static_cast<std::size_t>(y)] = 1.0;
  }
  Tensor inv = inverse_lengths(d, targets);
  Var nll = ops::neg(ops::sum_last(ops::sum_last(ops::mul(ops::log_clamped(dists), tape.constant(std::move(onehot))))));
  return ops::mul(nll, tape.constant(std::move(inv)));
}

Var example_cross_entropy_logits(Var logits, std::span<const int> targets) {
  const Dims d = dims_of(logits, targets);
  Tape& tape = logits.tape();
  Tensor inv = inverse_lengths(d, targets);
  Var flat = ops::reshape(logits, {d.batch * d.len, d.vocab});
  Var per_token = ops::reshape(ops::softmax_cross_entropy(flat, targets), {d.batch, d.len});
  return ops::mul(ops::sum_last(per_token), tape.constant(std::move(inv)));
}

Var cross_entropy(Var dists, std::span<const int> targets) {
  if (std::none_of(targets.begin(), targets.end(), [](int y) { return y >= 0; })) {
    throw std::invalid_argument("cross entropy: every position is padding");
  }
  return ops::mean(example_cross_entropy(dists, targets));
}

Var weighted_contanic_ce(Var example_ce, std::span<const double> contanic) {
  const auto c = checked_unit(contanic, example_ce.size(), "weighted_contanic_ce");
  Tensor w({example_ce.size()});
  for (std::size_t i = 0; i < c.size(); ++i) w[i] = 1.0 - c[i];
  return ops::mean(ops::mul(example_ce, example_ce.tape().constant(std::move(w))));
}

Var l_scl(Var bse_score, Var example_ce) {
  if (bse_score.shape() != example_ce.shape()) throw ShapeError("l_scl", bse_score.shape(), example_ce.shape());
  Var one_minus = ops::add_scalar(ops::neg(bse_score), 1.0);
  return ops::mean(ops::mul(one_minus, example_ce));
}

Var l_bse(Var bse_score, std::span<const double> contanic) {
  const auto c = checked_unit(contanic, bse_score.size(), "l_bse");
  Tensor target({bse_score.size()}, c);
  return ops::mean(ops::square(ops::sub(bse_score, bse_score.tape().constant(std::move(target)))));
}

Var semtextuallogue_total(Var l_ce, Var l_scl_value, Var l_bse_value, double lambda, double sigma) {
  return ops::add(ops::add(ops::scale(l_ce, lambda), ops::scale(l_scl_value, 1.0 - lambda)),
                  ops::scale(l_bse_value, sigma));
}

double semtextuallogue_total(double l_ce, double l_scl_value, double l_bse_value, double lambda,
                             double sigma) {
  return lambda * l_ce + (1.0 - lambda) * l_scl_value + sigma * l_bse_value;
}

double LossBreakdown::recompose(const LossConfig& config) const {
  switch (config.variant) {
    case LossVariant::kCe: return l_ce;
    case LossVariant::kWeightedSemanticCe:
    case LossVariant::kWeightedSemanticContextCe: return l_scl;
    case LossVariant::kSemanticReinforcement:
    case LossVariant::kSemTextualLogue:
      return semtextuallogue_total(l_ce, l_scl, l_bse, config.lambda, config.sigma);
  }
  return l_total;
}

nlohmann::json loss_breakdown_to_json(const LossBreakdown& b, std::uint64_t step, LossVariant variant) {
  return {{"step", step},       {"variant", loss_variant_name(variant)},
          {"l_ce", b.l_ce},     {"l_scl", b.l_scl},
          {"l_bse", b.l_bse},   {"l_total", b.l_total},
          {"contanic", b.contanic}, {"bse_score", b.bse_score}};
}

LossResult compute_loss(Tape& tape, const Model& model, const BaselineEstimator* estimator,
                        const SourceBatch& source, const TargetBatch& target, const LossConfig& config,
                        std::span<const double> contanic, const BaselineEstimator* shield_source) {
  config.validate();
  const std::size_t B = target.batch;
  Var logits = model.forward_logits(tape, source, target);
  Var ce = example_cross_entropy_logits(logits, target.targets);
  Var l_ce_var = ops::mean(ce);

  LossResult r;
  r.breakdown.l_ce = l_ce_var.value().item();
  if (config.variant == LossVariant::kCe) {
    r.total = l_ce_var;
  } else if (!uses_estimator(config.variant)) {
    r.total = weighted_contanic_ce(ce, contanic);
    r.breakdown.l_scl = r.total.value().item();
  } else {
    if (!estimator) throw std::invalid_argument(std::string(loss_variant_name(config.variant)) + " needs an estimator");
    checked_unit(contanic, B, "compute_loss");
    Var dists = ops::softmax(logits);
    Var bse = estimator->forward(tape, dists, target.targets, false);
    Var shielded = (shield_source ? shield_source : estimator)->forward(tape, dists, target.targets, true);
    Var scl = l_scl(shielded, ce);
    Var reg = l_bse(bse, contanic);
    r.total = semtextuallogue_total(l_ce_var, scl, reg, config.lambda, config.sigma);
    r.breakdown.l_scl = scl.value().item();
    r.breakdown.l_bse = reg.value().item();
    double mean_bse = 0.0;
    for (double v : bse.value().values()) mean_bse += v;
    r.breakdown.bse_score = mean_bse / static_cast<double>(B);
  }
  if (config.variant != LossVariant::kCe && !contanic.empty()) {
    double mean_c = 0.0;
    for (double c : contanic) mean_c += c;
    r.breakdown.contanic = mean_c / static_cast<double>(contanic.size());
  }
  r.breakdown.l_total = r.total.value().item();
  return r;
}

}  // namespace semlogue
