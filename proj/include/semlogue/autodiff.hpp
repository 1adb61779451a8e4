#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "semlogue/tensor.hpp"

namespace semlogue {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Accumulators for the inputs of one node; entries are null for inputs that
// do not require a gradient.
using GradSinks = std::span<Tensor* const>;
using BackwardFn = std::function<void(const Tensor& grad_out, GradSinks grad_in)>;

class BackwardError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using Gradients = std::unordered_map<const Parameter*, Tensor>;

// Define-by-run record of primitive applications. Confined to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a parameter as a leaf. The tape reads the parameter in place.
  Var leaf(const Parameter& param);
  Var constant(Tensor value);

  // Records a primitive result. The backward function is kept only when some
  // input requires a gradient and gradient recording is enabled.
  Var record(const char* primitive, std::span<const Var> inputs, Tensor value,
             BackwardFn backward);

  // Gradient for every requires_grad leaf on the tape; unused leaves get zeros.
  Gradients backward(Var root);
  // Gradients aligned with `params`; parameters absent from the tape get zeros.
  std::vector<Tensor> backward(Var root, std::span<Parameter* const> params);

  std::size_t size() const { return nodes_.size(); }
  const char* primitive(std::uint32_t id) const { return nodes_.at(id).primitive; }
  std::span<const std::uint32_t> inputs(std::uint32_t id) const { return nodes_.at(id).inputs; }

  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  // Non-smooth primitives (relu, clamped log) fold which side of each kink
  // their inputs fall on into this signature when tracking is enabled.
  void set_track_kinks(bool on) { track_kinks_ = on; }
  bool tracking_kinks() const { return track_kinks_; }
  void note_kink_side(bool positive);
  std::uint64_t kink_signature() const { return kink_signature_; }

 private:
  friend class Var;

  struct Node {
    const char* primitive = "";
    std::vector<std::uint32_t> inputs;
    Tensor owned;
    const Tensor* external = nullptr;
    const Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;

    const Tensor& value() const { return external ? *external : owned; }
  };

  std::vector<Tensor> run_backward(Var root);

  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
  bool track_kinks_ = false;
  std::uint64_t kink_signature_ = 0xcbf29ce484222325ULL;
};

// Primitive set. Binary elementwise ops broadcast numpy-style.
namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
Var square(Var a);

// [m,k]x[k,n] or batched [b,m,k]x[b,k,n].
Var matmul(Var a, Var b);
// Swaps the last two axes.
Var transpose(Var a);
Var permute(Var a, std::span<const std::size_t> axes);
Var reshape(Var a, Shape shape);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length);
// Rows of `table` ([n,d]) selected by ids, giving [ids.size(), d].
Var embedding(Var table, std::span<const int> ids);

Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
// log(max(a, floor)); the gradient is zero where the floor is active.
Var log_clamped(Var a, double floor = 1e-12);

// Softmax family over the last axis.
Var softmax(Var a);
Var log_softmax(Var a);
// Fused log-softmax + negative log-likelihood: logits [n,v], one target per
// row, rows with target < 0 yield 0 and no gradient. Output [n].
Var softmax_cross_entropy(Var logits, std::span<const int> targets);

// Normalizes over the last axis; gamma and beta have the last-axis extent.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

Var sum(Var a);
Var mean(Var a);
// Reductions over the last axis, dropping it.
Var sum_last(Var a);
Var mean_last(Var a);

// Constant copy of `a`'s value on the same tape; gradients stop here.
Var detach(Var a);

}  // namespace ops

enum class Primitive {
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMatmul,
  kTranspose,
  kRelu,
  kTanh,
  kSigmoid,
  kSoftmax,
  kLogSoftmax,
  kLayerNorm,
  kSum,
  kMean,
};

const char* primitive_name(Primitive p);
// Dispatches attribute-free primitives by id.
Var apply_primitive(Primitive p, std::span<const Var> inputs);

inline Var operator+(Var a, Var b) { return ops::add(a, b); }
inline Var operator-(Var a, Var b) { return ops::sub(a, b); }
inline Var operator*(Var a, Var b) { return ops::mul(a, b); }

}  // namespace semlogue
