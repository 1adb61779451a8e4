#include "semlogue/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace semlogue {
namespace {

struct Eval {
  double loss;
  std::uint64_t kinks;
};

Eval evaluate(const GraphBuilder& build) {
  Tape tape;
  tape.set_grad_enabled(false);
  tape.set_track_kinks(true);
  Var root = build(tape);
  return {root.value().item(), tape.kink_signature()};
}

bool bitwise_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

double relative_difference(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradReport grad_check(const GraphBuilder& build, std::span<Parameter* const> params, double eps,
                      double tolerance, double floor) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");

  std::vector<Tensor> analytic;
  Eval base{};
  {
    Tape tape;
    tape.set_track_kinks(true);
    Var root = build(tape);
    base = {root.value().item(), tape.kink_signature()};
    analytic = tape.backward(root, params);
  }
  const Eval again = evaluate(build);
  if (!bitwise_equal(base.loss, again.loss) || base.kinks != again.kinks) {
    throw NonDeterministicError("grad_check: two forward passes disagree");
  }

  GradReport report;
  report.tolerance = tolerance;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Parameter& param = *params[p];
    ParamGradReport entry;
    entry.name = param.name;
    auto& values = param.value.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const Eval plus = evaluate(build);
      values[i] = saved - eps;
      const Eval minus = evaluate(build);
      values[i] = saved;
      if (plus.kinks != minus.kinks || plus.kinks != base.kinks) {
        ++entry.excluded;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * eps);
      const double a = analytic[p][i];
      entry.max_abs_diff = std::max(entry.max_abs_diff, std::abs(a - numeric));
      entry.max_rel_diff = std::max(entry.max_rel_diff, relative_difference(a, numeric, floor));
      ++entry.checked;
    }
    report.max_abs_diff = std::max(report.max_abs_diff, entry.max_abs_diff);
    report.max_rel_diff = std::max(report.max_rel_diff, entry.max_rel_diff);
    report.excluded += entry.excluded;
    report.params.push_back(std::move(entry));
  }
  report.passed = report.max_rel_diff < tolerance;
  return report;
}

}  // namespace semlogue
