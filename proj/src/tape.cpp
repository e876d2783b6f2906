#include "olvae/tape.hpp"

#include <cmath>

namespace olvae::ad {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape)
    throw ContractError("operands must live on the same tape");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape) +
                     " and " + shape_str(b.shape) + " do not match");
}

void require_2d(const Tensor& t, const char* op) {
  if (t.shape.size() != 2)
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " +
                     shape_str(t.shape));
}

// C = A(m,k) * B(k,n)
void mm_nn(const double* A, const double* B, double* C, std::size_t m,
           std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* Ci = C + i * n;
    for (std::size_t j = 0; j < n; ++j) Ci[j] = 0.0;
    const double* Ai = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      double aip = Ai[p];
      const double* Bp = B + p * n;
      for (std::size_t j = 0; j < n; ++j) Ci[j] += aip * Bp[j];
    }
  }
}

// C += A(m,k) * B(n,k)^T
void mm_nt_acc(const double* A, const double* B, double* C, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* Ai = A + i * k;
    double* Ci = C + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* Bj = B + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += Ai[p] * Bj[p];
      Ci[j] += acc;
    }
  }
}

// C += A(k,m)^T * B(k,n)
void mm_tn_acc(const double* A, const double* B, double* C, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* Ap = A + p * m;
    const double* Bp = B + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      double api = Ap[i];
      double* Ci = C + i * n;
      for (std::size_t j = 0; j < n; ++j) Ci[j] += api * Bp[j];
    }
  }
}

template <class Fwd, class Bwd>
Var binary_op(const char* name, Var a, Var b, Fwd fwd, Bwd bwd) {
  require_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, name);
  std::size_t n = av.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av.values[i], bv.values[i]);
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  Tape::BackwardFn fn;
  if (ng) {
    fn = [a, b, bwd](Tape& tp, Var self) {
      auto g = tp.grad(self);
      auto av2 = tp.values_of(a);
      auto bv2 = tp.values_of(b);
      auto ov = tp.values_of(self);
      if (tp.needs_grad(a)) {
        auto ga = tp.grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += bwd.da(g[i], av2[i], bv2[i], ov[i]);
      }
      if (tp.needs_grad(b)) {
        auto gb = tp.grad_of(b);
        for (std::size_t i = 0; i < g.size(); ++i)
          gb[i] += bwd.db(g[i], av2[i], bv2[i], ov[i]);
      }
    };
  }
  return t.make_node(av.shape, std::move(out), ng, std::move(fn));
}

template <class DA, class DB>
struct BinBwd {
  DA da;
  DB db;
};
template <class DA, class DB>
BinBwd<DA, DB> bin_bwd(DA da, DB db) {
  return {da, db};
}

template <class Fwd, class Bwd>
Var unary_op(Var a, Fwd fwd, Bwd bwd) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  std::size_t n = av.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av.values[i]);
  bool ng = t.needs_grad(a);
  Tape::BackwardFn fn;
  if (ng) {
    fn = [a, bwd](Tape& tp, Var self) {
      auto g = tp.grad(self);
      auto av2 = tp.values_of(a);
      auto ov = tp.values_of(self);
      auto ga = tp.grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += bwd(g[i], av2[i], ov[i]);
    };
  }
  return t.make_node(av.shape, std::move(out), ng, std::move(fn));
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw ContractError("stale or foreign tape handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Tape::Node& Tape::node(Var v) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->node(v));
}

Var Tape::leaf(const Tensor& t) {
  Node n;
  n.value = t;
  n.needs_grad = true;
  n.grad.assign(t.size(), 0.0);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor t) {
  Node n;
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::make_node(Shape shape, std::vector<double> values, bool needs_grad,
                    BackwardFn backward) {
  Node n;
  n.value = Tensor(std::move(shape), std::move(values));
  n.needs_grad = needs_grad;
  if (needs_grad) {
    n.grad.assign(n.value.size(), 0.0);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var loss) {
  const Node& ln = node(loss);
  if (ln.value.size() != 1)
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_str(ln.value.shape));
  if (backward_done_) throw ContractError("backward already ran on this tape");
  backward_done_ = true;
  if (ln.needs_grad) nodes_[static_cast<std::size_t>(loss.id)].grad[0] = 1.0;
  last_backward_visits_ = 0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    ++last_backward_visits_;
    Node& n = nodes_[i];
    if (n.needs_grad && n.backward)
      n.backward(*this, Var{this, static_cast<std::int32_t>(i)});
  }
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

std::span<const double> Tape::values_of(Var v) const {
  const Node& n = node(v);
  return {n.value.values.data(), n.value.values.size()};
}

std::span<double> Tape::grad_of(Var v) {
  Node& n = node(v);
  if (!n.needs_grad) throw ContractError("node has no gradient slot");
  return {n.grad.data(), n.grad.size()};
}

std::span<const double> Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.needs_grad) throw ContractError("node has no gradient slot");
  return {n.grad.data(), n.grad.size()};
}

bool Tape::needs_grad(Var v) const { return node(v).needs_grad; }

Var add(Var a, Var b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      bin_bwd([](double g, double, double, double) { return g; },
              [](double g, double, double, double) { return g; }));
}

Var sub(Var a, Var b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      bin_bwd([](double g, double, double, double) { return g; },
              [](double g, double, double, double) { return -g; }));
}

Var mul(Var a, Var b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      bin_bwd([](double g, double, double y, double) { return g * y; },
              [](double g, double x, double, double) { return g * x; }));
}

Var div(Var a, Var b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      bin_bwd([](double g, double, double y, double) { return g / y; },
              [](double g, double, double y, double o) { return -g * o / y; }));
}

Var add_scalar(Var a, double c) {
  return unary_op(
      a, [c](double x) { return x + c; },
      [](double g, double, double) { return g; });
}

Var mul_scalar(Var a, double c) {
  return unary_op(
      a, [c](double x) { return x * c; },
      [c](double g, double, double) { return g * c; });
}

Var recip(Var a) {
  return unary_op(
      a, [](double x) { return 1.0 / x; },
      [](double g, double, double o) { return -g * o * o; });
}

Var exp(Var a) {
  return unary_op(
      a, [](double x) { return std::exp(x); },
      [](double g, double, double o) { return g * o; });
}

Var log(Var a) {
  return unary_op(
      a, [](double x) { return std::log(x); },
      [](double g, double x, double) { return g / x; });
}

Var sqrt(Var a) {
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double g, double, double o) { return 0.5 * g / o; });
}

Var sigmoid(Var a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double g, double, double o) { return g * o * (1.0 - o); });
}

Var tanh(Var a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double g, double, double o) { return g * (1.0 - o * o); });
}

Var clamp(Var a, double lo, double hi) {
  return unary_op(
      a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](double g, double x, double) {
        return (x > lo && x < hi) ? g : 0.0;
      });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_2d(av, "matmul");
  require_2d(bv, "matmul");
  if (av.shape[1] != bv.shape[0])
    throw ShapeError("matmul: inner dimensions of " + shape_str(av.shape) +
                     " and " + shape_str(bv.shape) + " do not agree");
  std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  std::vector<double> out(m * n);
  mm_nn(av.values.data(), bv.values.data(), out.data(), m, k, n);
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  Tape::BackwardFn fn;
  if (ng) {
    fn = [a, b, m, k, n](Tape& tp, Var self) {
      auto g = tp.grad(self);
      if (tp.needs_grad(a))
        mm_nt_acc(g.data(), tp.values_of(b).data(), tp.grad_of(a).data(), m, n, k);
      if (tp.needs_grad(b))
        mm_tn_acc(tp.values_of(a).data(), g.data(), tp.grad_of(b).data(), k, m, n);
    };
  }
  return t.make_node({m, n}, std::move(out), ng, std::move(fn));
}

Var sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  double acc = 0.0;
  for (double x : av.values) acc += x;
  bool ng = t.needs_grad(a);
  Tape::BackwardFn fn;
  if (ng) {
    fn = [a](Tape& tp, Var self) {
      double g = tp.grad(self)[0];
      auto ga = tp.grad_of(a);
      for (double& x : ga) x += g;
    };
  }
  return t.make_node({1}, {acc}, ng, std::move(fn));
}

Var col_sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  require_2d(av, "col_sum");
  std::size_t r = av.shape[0], c = av.shape[1];
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += av.values[i * c + j];
  bool ng = t.needs_grad(a);
  Tape::BackwardFn fn;
  if (ng) {
    fn = [a, r, c](Tape& tp, Var self) {
      auto g = tp.grad(self);
      auto ga = tp.grad_of(a);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j];
    };
  }
  return t.make_node({c}, std::move(out), ng, std::move(fn));
}

Var broadcast(Var a, Shape target) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  if (target.size() < av.shape.size())
    throw ShapeError("broadcast: target " + shape_str(target) +
                     " has fewer dimensions than " + shape_str(av.shape));
  std::size_t lead_dims = target.size() - av.shape.size();
  for (std::size_t i = 0; i < av.shape.size(); ++i)
    if (target[lead_dims + i] != av.shape[i])
      throw ShapeError("broadcast: trailing dimensions of target " +
                       shape_str(target) + " do not match " +
                       shape_str(av.shape));
  std::size_t inner = av.size();
  std::size_t tiles = shape_numel(target) / (inner == 0 ? 1 : inner);
  std::vector<double> out(tiles * inner);
  for (std::size_t tIdx = 0; tIdx < tiles; ++tIdx)
    for (std::size_t i = 0; i < inner; ++i)
      out[tIdx * inner + i] = av.values[i];
  bool ng = t.needs_grad(a);
  Tape::BackwardFn fn;
  if (ng) {
    fn = [a, tiles, inner](Tape& tp, Var self) {
      auto g = tp.grad(self);
      auto ga = tp.grad_of(a);
      for (std::size_t tIdx = 0; tIdx < tiles; ++tIdx)
        for (std::size_t i = 0; i < inner; ++i) ga[i] += g[tIdx * inner + i];
    };
  }
  return t.make_node(std::move(target), std::move(out), ng, std::move(fn));
}

Var reshape(Var a, Shape s) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  if (shape_numel(s) != av.size())
    throw ShapeError("reshape: " + shape_str(av.shape) + " cannot become " +
                     shape_str(s));
  bool ng = t.needs_grad(a);
  Tape::BackwardFn fn;
  if (ng) {
    fn = [a](Tape& tp, Var self) {
      auto g = tp.grad(self);
      auto ga = tp.grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
  }
  std::vector<double> out = av.values;
  return t.make_node(std::move(s), std::move(out), ng, std::move(fn));
}

Var slice(Var a, std::size_t offset, std::size_t len) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  if (offset + len > av.size())
    throw ShapeError("slice: range [" + std::to_string(offset) + "," +
                     std::to_string(offset + len) + ") exceeds size " +
                     std::to_string(av.size()));
  std::vector<double> out(av.values.begin() + offset,
                          av.values.begin() + offset + len);
  bool ng = t.needs_grad(a);
  Tape::BackwardFn fn;
  if (ng) {
    fn = [a, offset](Tape& tp, Var self) {
      auto g = tp.grad(self);
      auto ga = tp.grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
    };
  }
  return t.make_node({len}, std::move(out), ng, std::move(fn));
}

Var cols(Var a, std::size_t c0, std::size_t c1) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  require_2d(av, "cols");
  std::size_t r = av.shape[0], c = av.shape[1];
  if (c0 >= c1 || c1 > c)
    throw ShapeError("cols: range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") invalid for " + shape_str(av.shape));
  std::size_t w = c1 - c0;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = av.values[i * c + c0 + j];
  bool ng = t.needs_grad(a);
  Tape::BackwardFn fn;
  if (ng) {
    fn = [a, r, c, c0, w](Tape& tp, Var self) {
      auto g = tp.grad(self);
      auto ga = tp.grad_of(a);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) ga[i * c + c0 + j] += g[i * w + j];
    };
  }
  return t.make_node({r, w}, std::move(out), ng, std::move(fn));
}

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_2d(av, "concat_cols");
  require_2d(bv, "concat_cols");
  if (av.shape[0] != bv.shape[0])
    throw ShapeError("concat_cols: row counts of " + shape_str(av.shape) +
                     " and " + shape_str(bv.shape) + " differ");
  std::size_t r = av.shape[0], ca = av.shape[1], cb = bv.shape[1];
  std::vector<double> out(r * (ca + cb));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < ca; ++j)
      out[i * (ca + cb) + j] = av.values[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j)
      out[i * (ca + cb) + ca + j] = bv.values[i * cb + j];
  }
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  Tape::BackwardFn fn;
  if (ng) {
    fn = [a, b, r, ca, cb](Tape& tp, Var self) {
      auto g = tp.grad(self);
      if (tp.needs_grad(a)) {
        auto ga = tp.grad_of(a);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < ca; ++j)
            ga[i * ca + j] += g[i * (ca + cb) + j];
      }
      if (tp.needs_grad(b)) {
        auto gb = tp.grad_of(b);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < cb; ++j)
            gb[i * cb + j] += g[i * (ca + cb) + ca + j];
      }
    };
  }
  return t.make_node({r, ca + cb}, std::move(out), ng, std::move(fn));
}

Var concat_rows(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_2d(av, "concat_rows");
  require_2d(bv, "concat_rows");
  if (av.shape[1] != bv.shape[1])
    throw ShapeError("concat_rows: column counts of " + shape_str(av.shape) +
                     " and " + shape_str(bv.shape) + " differ");
  std::size_t ra = av.shape[0], rb = bv.shape[0], c = av.shape[1];
  std::vector<double> out;
  out.reserve((ra + rb) * c);
  out.insert(out.end(), av.values.begin(), av.values.end());
  out.insert(out.end(), bv.values.begin(), bv.values.end());
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  Tape::BackwardFn fn;
  if (ng) {
    fn = [a, b, ra, rb, c](Tape& tp, Var self) {
      auto g = tp.grad(self);
      if (tp.needs_grad(a)) {
        auto ga = tp.grad_of(a);
        for (std::size_t i = 0; i < ra * c; ++i) ga[i] += g[i];
      }
      if (tp.needs_grad(b)) {
        auto gb = tp.grad_of(b);
        for (std::size_t i = 0; i < rb * c; ++i) gb[i] += g[ra * c + i];
      }
    };
  }
  return t.make_node({ra + rb, c}, std::move(out), ng, std::move(fn));
}

Var row(Var a, std::size_t r) {
  const Tensor& av = a.tape->value(a);
  require_2d(av, "row");
  if (r >= av.shape[0])
    throw ShapeError("row: index " + std::to_string(r) + " out of range for " +
                     shape_str(av.shape));
  return slice(a, r * av.shape[1], av.shape[1]);
}

Var col(Var a, std::size_t c) {
  const Tensor& av = a.tape->value(a);
  require_2d(av, "col");
  std::size_t r = av.shape[0];
  return reshape(cols(a, c, c + 1), {r});
}

}  // namespace olvae::ad
