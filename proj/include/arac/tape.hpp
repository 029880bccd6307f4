#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "arac/tensor.hpp"

namespace arac::numerics {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid only while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;
};

// Reverse-mode autodiff tape. A fresh tape is built per loss evaluation:
// bind parameters as leaves, compose primitives, call backward() on a scalar
// output, then read per-parameter gradients with grad_of(). Leaves are
// identified by the address of the bound Tensor, so the same parameter bound
// several times accumulates gradient across all bindings.
class Tape {
 public:
  using Back = std::function<void(Tape&, const Tensor&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Tracked leaf. The tensor must outlive the tape; its current value is
  // copied onto the tape at bind time.
  Var leaf(const Tensor& param);

  // Untracked input; receives no gradient.
  Var constant(Tensor value);
  Var scalar(double v) { return constant(Tensor::scalar(v)); }

  const Tensor& value(Var v) const { return nodes_[v.idx].value; }

  // Seeds the output adjoint with 1 and propagates in reverse topological
  // order. Pre: out is a single-element node of this tape. May be called once.
  void backward(Var out);

  // Sum of adjoints over every leaf bound to this parameter (zeros if the
  // parameter was never bound or is unreachable from the output).
  // Pre: backward() has run.
  Tensor grad_of(const Tensor& param) const;

  bool bound(const Tensor& param) const;
  std::size_t size() const { return nodes_.size(); }

  // Primitive plumbing; used by the op free functions below.
  int push(Tensor value, Back back);
  void accumulate(int idx, const Tensor& g);
  const Tensor& node_value(int idx) const { return nodes_[idx].value; }

 private:
  struct Node {
    Tensor value;
    Back back;  // null for leaves/constants
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> adj_;
  std::vector<std::pair<const Tensor*, int>> leaves_;
  bool ran_backward_ = false;
};

// How a module puts its parameters on a tape: Train binds them as tracked
// leaves, Frozen as constants (no gradient, e.g. target nets and archived
// policies).
enum class Bind { Train, Frozen };

inline Var bind_param(Tape& t, const Tensor& param, Bind b) {
  return b == Bind::Train ? t.leaf(param) : t.constant(param);
}

// Elementwise ops. Operands must have identical shapes, except that either
// side may be a single-element tensor, which broadcasts against the other
// (the only broadcast this engine performs).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);

// (m x k) * (k x n) -> (m x n); rank-2 operands only.
Var matmul(Var a, Var b);
// W (m x k) times x (k) -> (m); composition of reshape/matmul.
Var matvec(Var w, Var x);

// Explicit row/column alignment for batch matrices; no silent broadcasting.
Var add_rowvec(Var mat, Var row);   // (B x d) + (d), per row
Var sub_rowvec(Var mat, Var row);   // (B x d) - (d), per row
Var mul_colvec(Var mat, Var col);   // row i of mat scaled by col[i]

Var sum(Var a);        // -> scalar
Var mean(Var a);       // -> scalar
Var sum_rows(Var a);   // (B x d) -> (B), sum along each row

Var square(Var a);
Var exp(Var a);
Var log(Var a);    // domain error unless all entries > 0
Var sqrt(Var a);   // domain error unless all entries > 0
Var tanh(Var a);
Var softplus(Var a);
Var abs(Var a);

Var l2_norm(Var a);   // -> scalar; zero input gets zero subgradient
Var rownorm(Var a);   // (B x d) -> (B) of row 2-norms; zero rows get zero subgradient

Var concat(Var a, Var b);                        // rank-1
Var concat_cols(Var a, Var b);                   // (B x p), (B x q) -> (B x (p+q))
Var slice(Var a, std::size_t start, std::size_t len);        // rank-1
Var slice_cols(Var a, std::size_t start, std::size_t len);   // rank-2, column range
Var reshape(Var a, std::vector<std::size_t> shape);

// Identity value, identically-zero adjoint.
Var stop_gradient(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }

}  // namespace arac::numerics
