#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semlogue/autodiff.hpp"

namespace semlogue {

// Builds a scalar loss on a fresh tape. Must register `params` as leaves and be
// deterministic.
using GraphBuilder = std::function<Var(Tape&)>;

class NonDeterministicError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ParamGradReport {
  std::string name;
  double max_abs_diff = 0.0;
  double max_rel_diff = 0.0;
  std::size_t checked = 0;
  // Entries whose central difference straddles a relu/clamp kink.
  std::size_t excluded = 0;
};

struct GradReport {
  std::vector<ParamGradReport> params;
  double max_abs_diff = 0.0;
  double max_rel_diff = 0.0;
  double tolerance = 0.0;
  std::size_t excluded = 0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, floor). Central differences at eps 1e-5 carry
// roundoff around 1e-11 for O(1) losses, so entries much smaller than the
// floor cannot be judged relatively.
double relative_difference(double analytic, double numeric, double floor = 1e-6);

// Compares reverse-mode gradients against central finite differences for every
// entry of every parameter.
GradReport grad_check(const GraphBuilder& build, std::span<Parameter* const> params,
                      double eps = 1e-5, double tolerance = 1e-4, double floor = 1e-6);

}  // namespace semlogue
