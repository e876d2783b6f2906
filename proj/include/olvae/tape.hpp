#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "olvae/tensor.hpp"

namespace olvae::ad {

class Tape;

// Cheap handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;
};

// Reverse-mode tape. Built fresh per step, replayed backward once, discarded.
// Node creation order is a topological order, so backward is a single reverse
// sweep over the node list.
class Tape {
 public:
  // Receives the tape and the node being differentiated; accumulates into the
  // gradient slots of the captured parents.
  using BackwardFn = std::function<void(Tape&, Var self)>;

  Var leaf(const Tensor& t);   // tracked input with a gradient slot
  Var constant(Tensor t);      // untracked value

  // Node factory, also for ops defined outside this module. `backward` may be
  // empty when needs_grad is false.
  Var make_node(Shape shape, std::vector<double> values, bool needs_grad,
                BackwardFn backward);

  void backward(Var loss);

  const Tensor& value(Var v) const;
  std::span<const double> values_of(Var v) const;
  std::span<double> grad_of(Var v);  // accumulation target; throws if untracked
  std::span<const double> grad(Var v) const;
  bool needs_grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  std::size_t last_backward_visits() const { return last_backward_visits_; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;  // sized only when needs_grad
    bool needs_grad = false;
    BackwardFn backward;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  std::size_t last_backward_visits_ = 0;
  bool backward_done_ = false;
};

// Elementwise on identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var add_scalar(Var a, double c);
Var mul_scalar(Var a, double c);

Var recip(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var clamp(Var a, double lo, double hi);

// (m,k) x (k,n) -> (m,n), both 2-D.
Var matmul(Var a, Var b);

Var sum(Var a);      // total sum -> shape {1}
Var col_sum(Var a);  // (r,c) -> (c), sum over rows

// Expand to `target`, whose trailing dimensions must equal a's shape.
Var broadcast(Var a, Shape target);
Var reshape(Var a, Shape s);
Var slice(Var a, std::size_t offset, std::size_t len);  // flat range -> {len}
Var cols(Var a, std::size_t c0, std::size_t c1);        // 2-D column range
Var concat_cols(Var a, Var b);
Var concat_rows(Var a, Var b);
Var row(Var a, std::size_t r);  // 2-D row -> {cols}
Var col(Var a, std::size_t c);  // 2-D column -> {rows}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace olvae::ad
