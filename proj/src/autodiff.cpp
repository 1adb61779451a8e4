#include "semlogue/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

namespace semlogue {

const Tensor& Var::value() const { return tape_->nodes_[id_].value(); }
bool Var::requires_grad() const { return tape_->nodes_[id_].requires_grad; }

Var Tape::leaf(const Parameter& param) {
  Node node;
  node.primitive = "leaf";
  node.external = &param.value;
  node.param = &param;
  node.requires_grad = param.requires_grad && grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node node;
  node.primitive = "constant";
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::record(const char* primitive, std::span<const Var> inputs, Tensor value,
                 BackwardFn backward) {
  Node node;
  node.primitive = primitive;
  node.inputs.reserve(inputs.size());
  bool any = false;
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw BackwardError(std::string(primitive) + ": input from another tape");
    node.inputs.push_back(in.id_);
    any = any || nodes_[in.id_].requires_grad;
  }
  node.owned = std::move(value);
  node.requires_grad = any && grad_enabled_;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Tape::note_kink_side(bool positive) {
  kink_signature_ ^= positive ? 0x9e3779b97f4a7c15ULL : 0x7f4a7c159e3779b9ULL;
  kink_signature_ *= 0x100000001b3ULL;
}

std::vector<Tensor> Tape::run_backward(Var root) {
  if (root.tape_ != this || root.id_ >= nodes_.size()) {
    throw BackwardError("backward: root is not on this tape");
  }
  const Node& root_node = nodes_[root.id_];
  if (root_node.value().size() != 1) {
    throw BackwardError("backward: root must be a scalar, got shape " +
                        shape_str(root_node.value().shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  if (!root_node.requires_grad) return grads;
  grads[root.id_] = Tensor(root_node.value().shape(), 1.0);

  std::vector<Tensor*> sinks;
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || grads[i].empty() || !node.backward) continue;
    sinks.assign(node.inputs.size(), nullptr);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const std::uint32_t in = node.inputs[j];
      if (!nodes_[in].requires_grad) continue;
      if (grads[in].empty()) grads[in] = Tensor(nodes_[in].value().shape(), 0.0);
      sinks[j] = &grads[in];
    }
    node.backward(grads[i], sinks);
    if (!node.param) grads[i] = Tensor();
  }
  return grads;
}

Gradients Tape::backward(Var root) {
  std::vector<Tensor> grads = run_backward(root);
  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    if (!node.param || !node.requires_grad) continue;
    auto [it, inserted] = out.try_emplace(node.param, node.value().shape(), 0.0);
    if (!grads[i].empty()) {
      auto dst = it->second.data();
      auto src = grads[i].data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  return out;
}

std::vector<Tensor> Tape::backward(Var root, std::span<Parameter* const> params) {
  Gradients all = backward(root);
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (Parameter* p : params) {
    auto it = all.find(p);
    out.push_back(it != all.end() ? std::move(it->second) : Tensor(p->value.shape(), 0.0));
  }
  return out;
}

namespace ops {
namespace {

struct Broadcast {
  Shape out;
  std::vector<std::size_t> sa, sb;
  bool same = false;
};

Broadcast plan_broadcast(const char* prim, const Shape& a, const Shape& b) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t r = std::max(a.size(), b.size());
  p.out.assign(r, 1);
  p.sa.assign(r, 0);
  p.sb.assign(r, 0);
  std::size_t stride_a = 1, stride_b = 1;
  for (std::size_t k = 0; k < r; ++k) {
    const std::size_t ax = r - 1 - k;
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) throw ShapeError(prim, a, b);
    p.out[ax] = std::max(da, db);
    p.sa[ax] = da == 1 ? 0 : stride_a;
    p.sb[ax] = db == 1 ? 0 : stride_b;
    stride_a *= da;
    stride_b *= db;
  }
  return p;
}

template <class F>
void walk(const Broadcast& p, F&& f) {
  const std::size_t n = shape_numel(p.out);
  if (p.same) {
    for (std::size_t o = 0; o < n; ++o) f(o, o, o);
    return;
  }
  const std::size_t r = p.out.size();
  const std::size_t inner = p.out[r - 1];
  const std::size_t sa_in = p.sa[r - 1], sb_in = p.sb[r - 1];
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < n; o += inner) {
    for (std::size_t j = 0; j < inner; ++j) f(o + j, ia + j * sa_in, ib + j * sb_in);
    for (std::size_t ax = r - 1; ax-- > 0;) {
      ++idx[ax];
      ia += p.sa[ax];
      ib += p.sb[ax];
      if (idx[ax] < p.out[ax]) break;
      ia -= p.sa[ax] * p.out[ax];
      ib -= p.sb[ax] * p.out[ax];
      idx[ax] = 0;
    }
  }
}

template <class Fwd, class DA, class DB>
Var binary(const char* name, Var a, Var b, Fwd fwd, DA da, DB db) {
  Broadcast plan = plan_broadcast(name, a.shape(), b.shape());
  const auto& av = a.value().values();
  const auto& bv = b.value().values();
  Tensor out(plan.out);
  auto& ov = out.values();
  walk(plan, [&](std::size_t o, std::size_t i, std::size_t j) { ov[o] = fwd(av[i], bv[j]); });
  const std::array<Var, 2> inputs{a, b};
  return a.tape().record(name, inputs, std::move(out),
                         [a, b, plan = std::move(plan), da, db](const Tensor& g, GradSinks sinks) {
                           const auto& x = a.value().values();
                           const auto& y = b.value().values();
                           const auto& gv = g.values();
                           if (sinks[0]) {
                             auto& ga = sinks[0]->values();
                             walk(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
                               ga[i] += gv[o] * da(x[i], y[j]);
                             });
                           }
                           if (sinks[1]) {
                             auto& gb = sinks[1]->values();
                             walk(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
                               gb[j] += gv[o] * db(x[i], y[j]);
                             });
                           }
                         });
}

// Elementwise op whose derivative is expressed through input x and output y.
template <class Fwd, class Deriv>
Var elementwise(const char* name, Var a, Fwd fwd, Deriv deriv) {
  const auto& av = a.value().values();
  Tensor out(a.shape());
  auto& ov = out.values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = fwd(av[i]);
  auto y_holder = std::make_shared<Tensor>(out);
  const std::array<Var, 1> inputs{a};
  return a.tape().record(name, inputs, std::move(out),
                         [a, y_holder, deriv](const Tensor& g, GradSinks sinks) {
                           if (!sinks[0]) return;
                           const auto& x = a.value().values();
                           const auto& y = y_holder->values();
                           const auto& gv = g.values();
                           auto& ga = sinks[0]->values();
                           for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += gv[i] * deriv(x[i], y[i]);
                         });
}

std::size_t rows_of(const Tensor& t) {
  const std::size_t last = t.rank() ? t.shape().back() : 1;
  return t.size() / last;
}

std::size_t last_of(const Tensor& t) { return t.rank() ? t.shape().back() : 1; }

Shape drop_last(const Shape& s) {
  if (s.empty()) return s;
  return Shape(s.begin(), s.end() - 1);
}

// C[m,n] += A[m,k] B[k,n]
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * n;
    const double* a = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p];
      const double* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[m,k] += G[m,n] B[k,n]^T
void gemm_nt(const double* G, const double* B, double* C, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* g = G + i * n;
    double* c = C + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* b = B + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += g[j] * b[j];
      c[p] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T G[m,n]
void gemm_tn(const double* A, const double* G, double* C, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    const double* g = G + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p];
      double* c = C + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * g[j];
    }
  }
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double factor) {
  const auto& av = a.value().values();
  Tensor out(a.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  const std::array<Var, 1> inputs{a};
  return a.tape().record("scale", inputs, std::move(out),
                         [factor](const Tensor& g, GradSinks sinks) {
                           if (!sinks[0]) return;
                           auto& ga = sinks[0]->values();
                           const auto& gv = g.values();
                           for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += gv[i] * factor;
                         });
}

Var add_scalar(Var a, double value) {
  const auto& av = a.value().values();
  Tensor out(a.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + value;
  const std::array<Var, 1> inputs{a};
  return a.tape().record("add_scalar", inputs, std::move(out),
                         [](const Tensor& g, GradSinks sinks) {
                           if (!sinks[0]) return;
                           auto& ga = sinks[0]->values();
                           const auto& gv = g.values();
                           for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += gv[i];
                         });
}

Var square(Var a) {
  return elementwise(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var matmul(Var a, Var b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  std::size_t batch = 1, m = 0, k = 0, n = 0;
  Shape out_shape;
  if (sa.size() == 2 && sb.size() == 2) {
    if (sa[1] != sb[0]) throw ShapeError("matmul", sa, sb);
    m = sa[0], k = sa[1], n = sb[1];
    out_shape = {m, n};
  } else if (sa.size() == 3 && sb.size() == 3) {
    if (sa[0] != sb[0] || sa[2] != sb[1]) throw ShapeError("matmul", sa, sb);
    batch = sa[0], m = sa[1], k = sa[2], n = sb[2];
    out_shape = {batch, m, n};
  } else {
    throw ShapeError("matmul", sa, sb);
  }
  Tensor out(out_shape);
  const double* A = a.value().data().data();
  const double* B = b.value().data().data();
  for (std::size_t t = 0; t < batch; ++t) {
    gemm_nn(A + t * m * k, B + t * k * n, out.data().data() + t * m * n, m, k, n);
  }
  const std::array<Var, 2> inputs{a, b};
  return a.tape().record("matmul", inputs, std::move(out),
                         [a, b, batch, m, k, n](const Tensor& g, GradSinks sinks) {
                           const double* A = a.value().data().data();
                           const double* B = b.value().data().data();
                           const double* G = g.data().data();
                           for (std::size_t t = 0; t < batch; ++t) {
                             if (sinks[0]) {
                               gemm_nt(G + t * m * n, B + t * k * n,
                                       sinks[0]->data().data() + t * m * k, m, k, n);
                             }
                             if (sinks[1]) {
                               gemm_tn(A + t * m * k, G + t * m * n,
                                       sinks[1]->data().data() + t * k * n, m, k, n);
                             }
                           }
                         });
}

Var permute(Var a, std::span<const std::size_t> axes) {
  const Shape& in = a.shape();
  const std::size_t r = in.size();
  if (axes.size() != r) throw ShapeError("permute", "axis count does not match rank " + shape_str(in));
  std::vector<bool> seen(r, false);
  for (auto ax : axes) {
    if (ax >= r || seen[ax]) throw ShapeError("permute", "invalid axis order for " + shape_str(in));
    seen[ax] = true;
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t ax = r; ax-- > 1;) in_strides[ax - 1] = in_strides[ax] * in[ax];
  Shape out_shape(r);
  std::vector<std::size_t> src_strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in[axes[i]];
    src_strides[i] = in_strides[axes[i]];
  }
  // offsets[o] = flat input index feeding output element o
  auto offsets = std::make_shared<std::vector<std::size_t>>(a.size());
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t o = 0; o < offsets->size(); ++o) {
      (*offsets)[o] = off;
      for (std::size_t ax = r; ax-- > 0;) {
        ++idx[ax];
        off += src_strides[ax];
        if (idx[ax] < out_shape[ax]) break;
        off -= src_strides[ax] * out_shape[ax];
        idx[ax] = 0;
      }
    }
  }
  Tensor out(out_shape);
  const auto& av = a.value().values();
  for (std::size_t o = 0; o < offsets->size(); ++o) out[o] = av[(*offsets)[o]];
  const std::array<Var, 1> inputs{a};
  return a.tape().record("permute", inputs, std::move(out),
                         [offsets](const Tensor& g, GradSinks sinks) {
                           if (!sinks[0]) return;
                           auto& ga = sinks[0]->values();
                           const auto& gv = g.values();
                           for (std::size_t o = 0; o < gv.size(); ++o) ga[(*offsets)[o]] += gv[o];
                         });
}

Var transpose(Var a) {
  const std::size_t r = a.shape().size();
  if (r < 2) throw ShapeError("transpose", "needs rank >= 2, got " + shape_str(a.shape()));
  std::vector<std::size_t> axes(r);
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[r - 1], axes[r - 2]);
  return permute(a, axes);
}

Var reshape(Var a, Shape shape) {
  if (shape_numel(shape) != a.size()) throw ShapeError("reshape", a.shape(), shape);
  Tensor out = a.value().reshaped(std::move(shape));
  const std::array<Var, 1> inputs{a};
  return a.tape().record("reshape", inputs, std::move(out), [](const Tensor& g, GradSinks sinks) {
    if (!sinks[0]) return;
    auto& ga = sinks[0]->values();
    const auto& gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += gv[i];
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat", "no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat", "axis out of range for " + shape_str(first));
  std::vector<std::size_t> extents;
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat", first, s);
    for (std::size_t ax = 0; ax < s.size(); ++ax) {
      if (ax != axis && s[ax] != first[ax]) throw ShapeError("concat", first, s);
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t ax = 0; ax < axis; ++ax) outer *= first[ax];
  for (std::size_t ax = axis + 1; ax < first.size(); ++ax) inner *= first[ax];
  const std::size_t total = out_shape[axis];
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value().values();
    const std::size_t chunk = extents[k] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + o * chunk, chunk, out.values().begin() + (o * total + offset) * inner);
    }
    offset += extents[k];
  }
  return parts[0].tape().record("concat", parts, std::move(out),
                                [extents, outer, inner, total](const Tensor& g, GradSinks sinks) {
                                  const auto& gv = g.values();
                                  std::size_t offset = 0;
                                  for (std::size_t k = 0; k < sinks.size(); ++k) {
                                    const std::size_t chunk = extents[k] * inner;
                                    if (sinks[k]) {
                                      auto& gp = sinks[k]->values();
                                      for (std::size_t o = 0; o < outer; ++o) {
                                        const double* src = gv.data() + (o * total + offset) * inner;
                                        double* dst = gp.data() + o * chunk;
                                        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                                      }
                                    }
                                    offset += extents[k];
                                  }
                                });
}

Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis]) {
    throw ShapeError("slice", "range [" + std::to_string(start) + ", " +
                                  std::to_string(start + length) + ") on axis " +
                                  std::to_string(axis) + " of " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t ax = 0; ax < axis; ++ax) outer *= s[ax];
  for (std::size_t ax = axis + 1; ax < s.size(); ++ax) inner *= s[ax];
  const std::size_t full = s[axis];
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor out(out_shape);
  const auto& av = a.value().values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(av.begin() + (o * full + start) * inner, length * inner,
                out.values().begin() + o * length * inner);
  }
  const std::array<Var, 1> inputs{a};
  return a.tape().record("slice", inputs, std::move(out),
                         [outer, inner, full, start, length](const Tensor& g, GradSinks sinks) {
                           if (!sinks[0]) return;
                           auto& ga = sinks[0]->values();
                           const auto& gv = g.values();
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = gv.data() + o * length * inner;
                             double* dst = ga.data() + (o * full + start) * inner;
                             for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
                           }
                         });
}

Var embedding(Var table, std::span<const int> ids) {
  const Shape& s = table.shape();
  if (s.size() != 2) throw ShapeError("embedding", "table must be rank 2, got " + shape_str(s));
  if (ids.empty()) throw ShapeError("embedding", "empty id list");
  const std::size_t rows = s[0], d = s[1];
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      throw ShapeError("embedding", "id " + std::to_string(id) + " outside table " + shape_str(s));
    }
  }
  Tensor out({ids.size(), d});
  const auto& tv = table.value().values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(tv.begin() + static_cast<std::size_t>(ids[i]) * d, d, out.values().begin() + i * d);
  }
  std::vector<int> id_copy(ids.begin(), ids.end());
  const std::array<Var, 1> inputs{table};
  return table.tape().record("embedding", inputs, std::move(out),
                             [id_copy = std::move(id_copy), d](const Tensor& g, GradSinks sinks) {
                               if (!sinks[0]) return;
                               auto& gt = sinks[0]->values();
                               const auto& gv = g.values();
                               for (std::size_t i = 0; i < id_copy.size(); ++i) {
                                 double* dst = gt.data() + static_cast<std::size_t>(id_copy[i]) * d;
                                 const double* src = gv.data() + i * d;
                                 for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                               }
                             });
}

Var relu(Var a) {
  Tape& tape = a.tape();
  if (tape.tracking_kinks()) {
    for (double x : a.value().values()) tape.note_kink_side(x > 0.0);
  }
  return elementwise(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return elementwise(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return elementwise(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var log_clamped(Var a, double floor) {
  Tape& tape = a.tape();
  if (tape.tracking_kinks()) {
    for (double x : a.value().values()) tape.note_kink_side(x > floor);
  }
  return elementwise(
      "log_clamped", a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Var softmax(Var a) {
  const std::size_t n = last_of(a.value()), rows = rows_of(a.value());
  const auto& av = a.value().values();
  Tensor out(a.shape());
  auto& ov = out.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double* y = ov.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= total;
  }
  auto y_holder = std::make_shared<Tensor>(out);
  const std::array<Var, 1> inputs{a};
  return a.tape().record("softmax", inputs, std::move(out),
                         [y_holder, n, rows](const Tensor& g, GradSinks sinks) {
                           if (!sinks[0]) return;
                           const auto& yv = y_holder->values();
                           const auto& gv = g.values();
                           auto& ga = sinks[0]->values();
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* y = yv.data() + r * n;
                             const double* gy = gv.data() + r * n;
                             double dot = 0.0;
                             for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
                             double* gx = ga.data() + r * n;
                             for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (gy[j] - dot);
                           }
                         });
}

Var log_softmax(Var a) {
  const std::size_t n = last_of(a.value()), rows = rows_of(a.value());
  const auto& av = a.value().values();
  Tensor out(a.shape());
  auto& ov = out.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double* y = ov.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(x[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) y[j] = x[j] - lse;
  }
  auto y_holder = std::make_shared<Tensor>(out);
  const std::array<Var, 1> inputs{a};
  return a.tape().record("log_softmax", inputs, std::move(out),
                         [y_holder, n, rows](const Tensor& g, GradSinks sinks) {
                           if (!sinks[0]) return;
                           const auto& yv = y_holder->values();
                           const auto& gv = g.values();
                           auto& ga = sinks[0]->values();
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* y = yv.data() + r * n;
                             const double* gy = gv.data() + r * n;
                             double total = 0.0;
                             for (std::size_t j = 0; j < n; ++j) total += gy[j];
                             double* gx = ga.data() + r * n;
                             for (std::size_t j = 0; j < n; ++j) gx[j] += gy[j] - std::exp(y[j]) * total;
                           }
                         });
}

Var softmax_cross_entropy(Var logits, std::span<const int> targets) {
  const Shape& s = logits.shape();
  if (s.size() != 2) throw ShapeError("softmax_cross_entropy", "logits must be rank 2, got " + shape_str(s));
  const std::size_t rows = s[0], n = s[1];
  if (targets.size() != rows) {
    throw ShapeError("softmax_cross_entropy", s, Shape{targets.size()});
  }
  for (int t : targets) {
    if (t >= 0 && static_cast<std::size_t>(t) >= n) {
      throw ShapeError("softmax_cross_entropy", "target " + std::to_string(t) + " outside " + shape_str(s));
    }
  }
  const auto& xv = logits.value().values();
  auto probs = std::make_shared<std::vector<double>>(xv.size(), 0.0);
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0) continue;
    const double* x = xv.data() + r * n;
    double* p = probs->data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (p[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) p[j] /= total;
    out[r] = mx + std::log(total) - x[targets[r]];
  }
  std::vector<int> tcopy(targets.begin(), targets.end());
  const std::array<Var, 1> inputs{logits};
  return logits.tape().record(
      "softmax_cross_entropy", inputs, std::move(out),
      [probs, tcopy = std::move(tcopy), n](const Tensor& g, GradSinks sinks) {
        if (!sinks[0]) return;
        auto& ga = sinks[0]->values();
        for (std::size_t r = 0; r < tcopy.size(); ++r) {
          if (tcopy[r] < 0) continue;
          const double gr = g[r];
          const double* p = probs->data() + r * n;
          double* gx = ga.data() + r * n;
          for (std::size_t j = 0; j < n; ++j) gx[j] += gr * p[j];
          gx[tcopy[r]] -= gr;
        }
      });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const std::size_t n = last_of(x.value()), rows = rows_of(x.value());
  if (gamma.shape() != Shape{n}) throw ShapeError("layer_norm", x.shape(), gamma.shape());
  if (beta.shape() != Shape{n}) throw ShapeError("layer_norm", x.shape(), beta.shape());
  const auto& xv = x.value().values();
  const auto& gv = gamma.value().values();
  const auto& bv = beta.value().values();
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mu) * inv;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  const std::array<Var, 3> inputs{x, gamma, beta};
  return x.tape().record(
      "layer_norm", inputs, std::move(out),
      [gamma, xhat, inv_std, n, rows](const Tensor& g, GradSinks sinks) {
        const auto& gm = gamma.value().values();
        const auto& dy = g.values();
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* h = xhat->data() + r * n;
          const double* gy = dy.data() + r * n;
          if (sinks[1]) {
            auto& dg = sinks[1]->values();
            for (std::size_t j = 0; j < n; ++j) dg[j] += gy[j] * h[j];
          }
          if (sinks[2]) {
            auto& db = sinks[2]->values();
            for (std::size_t j = 0; j < n; ++j) db[j] += gy[j];
          }
          if (sinks[0]) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              dxhat[j] = gy[j] * gm[j];
              s1 += dxhat[j];
              s2 += dxhat[j] * h[j];
            }
            const double inv = (*inv_std)[r];
            const double nd = static_cast<double>(n);
            double* gx = sinks[0]->data().data() + r * n;
            for (std::size_t j = 0; j < n; ++j) gx[j] += inv / nd * (nd * dxhat[j] - s1 - h[j] * s2);
          }
        }
      });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const std::array<Var, 1> inputs{a};
  return a.tape().record("sum", inputs, Tensor::scalar(total), [](const Tensor& g, GradSinks sinks) {
    if (!sinks[0]) return;
    const double gv = g[0];
    for (double& v : sinks[0]->values()) v += gv;
  });
}

Var mean(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const double count = static_cast<double>(a.size());
  const std::array<Var, 1> inputs{a};
  return a.tape().record("mean", inputs, Tensor::scalar(total / count),
                         [count](const Tensor& g, GradSinks sinks) {
                           if (!sinks[0]) return;
                           const double gv = g[0] / count;
                           for (double& v : sinks[0]->values()) v += gv;
                         });
}

namespace {
Var reduce_last(const char* name, Var a, bool average) {
  const std::size_t n = last_of(a.value()), rows = rows_of(a.value());
  const auto& av = a.value().values();
  Tensor out(drop_last(a.shape()));
  const double div = average ? static_cast<double>(n) : 1.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += av[r * n + j];
    out[r] = total / div;
  }
  const std::array<Var, 1> inputs{a};
  return a.tape().record(name, inputs, std::move(out),
                         [n, rows, div](const Tensor& g, GradSinks sinks) {
                           if (!sinks[0]) return;
                           auto& ga = sinks[0]->values();
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double gv = g[r] / div;
                             for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += gv;
                           }
                         });
}
}  // namespace

Var sum_last(Var a) { return reduce_last("sum_last", a, false); }
Var mean_last(Var a) { return reduce_last("mean_last", a, true); }

Var detach(Var a) { return a.tape().constant(a.value()); }

}  // namespace ops

const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::kAdd: return "add";
    case Primitive::kSub: return "sub";
    case Primitive::kMul: return "mul";
    case Primitive::kDiv: return "div";
    case Primitive::kMatmul: return "matmul";
    case Primitive::kTranspose: return "transpose";
    case Primitive::kRelu: return "relu";
    case Primitive::kTanh: return "tanh";
    case Primitive::kSigmoid: return "sigmoid";
    case Primitive::kSoftmax: return "softmax";
    case Primitive::kLogSoftmax: return "log_softmax";
    case Primitive::kLayerNorm: return "layer_norm";
    case Primitive::kSum: return "sum";
    case Primitive::kMean: return "mean";
  }
  return "unknown";
}

Var apply_primitive(Primitive p, std::span<const Var> inputs) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ShapeError(primitive_name(p), "expected " + std::to_string(n) + " inputs, got " +
                                              std::to_string(inputs.size()));
    }
  };
  switch (p) {
    case Primitive::kAdd: need(2); return ops::add(inputs[0], inputs[1]);
    case Primitive::kSub: need(2); return ops::sub(inputs[0], inputs[1]);
    case Primitive::kMul: need(2); return ops::mul(inputs[0], inputs[1]);
    case Primitive::kDiv: need(2); return ops::div(inputs[0], inputs[1]);
    case Primitive::kMatmul: need(2); return ops::matmul(inputs[0], inputs[1]);
    case Primitive::kTranspose: need(1); return ops::transpose(inputs[0]);
    case Primitive::kRelu: need(1); return ops::relu(inputs[0]);
    case Primitive::kTanh: need(1); return ops::tanh(inputs[0]);
    case Primitive::kSigmoid: need(1); return ops::sigmoid(inputs[0]);
    case Primitive::kSoftmax: need(1); return ops::softmax(inputs[0]);
    case Primitive::kLogSoftmax: need(1); return ops::log_softmax(inputs[0]);
    case Primitive::kLayerNorm: need(3); return ops::layer_norm(inputs[0], inputs[1], inputs[2]);
    case Primitive::kSum: need(1); return ops::sum(inputs[0]);
    case Primitive::kMean: need(1); return ops::mean(inputs[0]);
  }
  throw ShapeError("apply_primitive", "unknown primitive");
}

}  // namespace semlogue
