#include "arac/tape.hpp"

#include <cmath>

#include "arac/error.hpp"

namespace arac::numerics {

namespace {

bool is_scalar(const Tensor& t) { return t.numel() == 1; }

void check_same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw ContractViolation(std::string(op) + ": operands live on different tapes");
}

double sum_all(const Tensor& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) s += t[i];
  return s;
}

}  // namespace

int Tape::push(Tensor value, Back back) {
  if (ran_backward_) throw ContractViolation("Tape: cannot grow a tape after backward()");
  nodes_.push_back({std::move(value), std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::leaf(const Tensor& param) {
  int idx = push(param, nullptr);
  leaves_.emplace_back(&param, idx);
  return Var{this, idx};
}

Var Tape::constant(Tensor value) { return Var{this, push(std::move(value), nullptr)}; }

void Tape::accumulate(int idx, const Tensor& g) {
  Tensor& a = adj_[idx];
  if (a.numel() == 0 && g.numel() != 0) a = Tensor::zeros(nodes_[idx].value.shape());
  if (!a.same_shape(g))
    throw ContractViolation("Tape: adjoint shape " + g.shape_str() + " does not match node " +
                            a.shape_str());
  double* ad = a.data();
  const double* gd = g.data();
  for (std::size_t i = 0; i < a.numel(); ++i) ad[i] += gd[i];
}

void Tape::backward(Var out) {
  if (out.tape != this) throw ContractViolation("Tape::backward: output is not on this tape");
  if (ran_backward_) throw ContractViolation("Tape::backward: called twice");
  const Tensor& ov = nodes_[out.idx].value;
  if (ov.numel() != 1)
    throw ContractViolation("Tape::backward: output must be a single-element tensor, got " +
                            ov.shape_str());
  ran_backward_ = true;
  adj_.resize(nodes_.size());
  adj_[out.idx] = Tensor::full(ov.shape(), 1.0);
  for (int i = out.idx; i >= 0; --i) {
    if (adj_[i].numel() == 0) continue;  // unreachable from the output
    if (nodes_[i].back) nodes_[i].back(*this, adj_[i]);
  }
}

Tensor Tape::grad_of(const Tensor& param) const {
  if (!ran_backward_) throw ContractViolation("Tape::grad_of: backward() has not run");
  Tensor g = Tensor::zeros(param.shape());
  for (const auto& [ptr, idx] : leaves_) {
    if (ptr != &param) continue;
    const Tensor& a = adj_[idx];
    if (a.numel() == 0) continue;
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += a[i];
  }
  return g;
}

bool Tape::bound(const Tensor& param) const {
  for (const auto& [ptr, idx] : leaves_)
    if (ptr == &param) return true;
  return false;
}

// ---------------------------------------------------------------------------
// elementwise ops with single-element broadcast
// ---------------------------------------------------------------------------

namespace {

enum class Ew { Add, Sub, Mul, Div };

Var ew_op(Var a, Var b, Ew op, const char* name) {
  check_same_tape(a, b, name);
  Tape& t = *a.tape;
  const Tensor& av = t.node_value(a.idx);
  const Tensor& bv = t.node_value(b.idx);
  bool sa = is_scalar(av) && !av.same_shape(bv);
  bool sb = is_scalar(bv) && !av.same_shape(bv);
  if (sa && sb) {
    // Both are single-element but shaped differently (e.g. (1x1) vs rank-0):
    // keep the higher-rank shape and broadcast the other side.
    if (av.rank() >= bv.rank())
      sa = false;
    else
      sb = false;
  }
  if (!av.same_shape(bv) && !sa && !sb)
    throw ContractViolation(std::string(name) + ": shape mismatch " + av.shape_str() + " vs " +
                            bv.shape_str());

  const Tensor& big = sa ? bv : av;
  Tensor out(big.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = sa ? av[0] : av[i];
    const double y = sb ? bv[0] : bv[i];
    switch (op) {
      case Ew::Add: out[i] = x + y; break;
      case Ew::Sub: out[i] = x - y; break;
      case Ew::Mul: out[i] = x * y; break;
      case Ew::Div: out[i] = x / y; break;
    }
  }

  int ia = a.idx, ib = b.idx;
  int idx = t.push(std::move(out), [ia, ib, sa, sb, op](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.node_value(ia);
    const Tensor& bv = tp.node_value(ib);
    const std::size_t n = g.numel();
    Tensor ga(sa ? av.shape() : g.shape());
    Tensor gb(sb ? bv.shape() : g.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const double x = sa ? av[0] : av[i];
      const double y = sb ? bv[0] : bv[i];
      double da = 0.0, db = 0.0;
      switch (op) {
        case Ew::Add: da = g[i]; db = g[i]; break;
        case Ew::Sub: da = g[i]; db = -g[i]; break;
        case Ew::Mul: da = g[i] * y; db = g[i] * x; break;
        case Ew::Div: da = g[i] / y; db = -g[i] * x / (y * y); break;
      }
      if (sa) ga[0] += da; else ga[i] = da;
      if (sb) gb[0] += db; else gb[i] = db;
    }
    tp.accumulate(ia, ga);
    tp.accumulate(ib, gb);
  });
  return Var{&t, idx};
}

}  // namespace

Var add(Var a, Var b) { return ew_op(a, b, Ew::Add, "add"); }
Var sub(Var a, Var b) { return ew_op(a, b, Ew::Sub, "sub"); }
Var mul(Var a, Var b) { return ew_op(a, b, Ew::Mul, "mul"); }
Var div(Var a, Var b) { return ew_op(a, b, Ew::Div, "div"); }

Var neg(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.node_value(a.idx);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = -av[i];
  int ia = a.idx;
  int idx = t.push(std::move(out), [ia](Tape& tp, const Tensor& g) {
    Tensor ga(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] = -g[i];
    tp.accumulate(ia, ga);
  });
  return Var{&t, idx};
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  check_same_tape(a, b, "matmul");
  Tape& t = *a.tape;
  const Tensor& av = t.node_value(a.idx);
  const Tensor& bv = t.node_value(b.idx);
  if (av.rank() != 2 || bv.rank() != 2)
    throw ContractViolation("matmul: operands must be rank-2, got " + av.shape_str() + " and " +
                            bv.shape_str());
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k)
    throw ContractViolation("matmul: inner dimensions differ, " + av.shape_str() + " vs " +
                            bv.shape_str());

  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = av.at(i, kk);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aik * bv.at(kk, j);
    }

  int ia = a.idx, ib = b.idx;
  int idx = t.push(std::move(out), [ia, ib, m, k, n](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.node_value(ia);
    const Tensor& bv = tp.node_value(ib);
    Tensor ga({m, k});
    Tensor gb({k, n});
    // ga = g * b^T
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double gij = g.at(i, j);
        if (gij == 0.0) continue;
        for (std::size_t kk = 0; kk < k; ++kk) ga.at(i, kk) += gij * bv.at(kk, j);
      }
    // gb = a^T * g
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = av.at(i, kk);
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) gb.at(kk, j) += aik * g.at(i, j);
      }
    tp.accumulate(ia, ga);
    tp.accumulate(ib, gb);
  });
  return Var{&t, idx};
}

Var matvec(Var w, Var x) {
  Tape& t = *w.tape;
  // Copy dims before composing: pushing nodes can reallocate the tape and
  // invalidate references into it.
  const std::size_t m = t.node_value(w.idx).rows();
  const std::size_t wrank = t.node_value(w.idx).rank();
  const std::size_t xrank = t.node_value(x.idx).rank();
  const std::size_t xn = t.node_value(x.idx).numel();
  if (wrank != 2 || xrank != 1)
    throw ContractViolation("matvec: need rank-2 and rank-1 operands");
  Var xc = reshape(x, {xn, 1});
  Var y = matmul(w, xc);
  return reshape(y, {m});
}

Var add_rowvec(Var mat, Var row) {
  check_same_tape(mat, row, "add_rowvec");
  Tape& t = *mat.tape;
  const Tensor& mv = t.node_value(mat.idx);
  const Tensor& rv = t.node_value(row.idx);
  if (mv.rank() != 2 || rv.rank() != 1 || rv.numel() != mv.cols())
    throw ContractViolation("add_rowvec: need (B x d) and (d), got " + mv.shape_str() + " and " +
                            rv.shape_str());
  const std::size_t B = mv.rows(), d = mv.cols();
  Tensor out({B, d});
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = mv.at(i, j) + rv[j];
  int im = mat.idx, ir = row.idx;
  int idx = t.push(std::move(out), [im, ir, B, d](Tape& tp, const Tensor& g) {
    Tensor gr({d});
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < d; ++j) gr[j] += g.at(i, j);
    tp.accumulate(im, g);
    tp.accumulate(ir, gr);
  });
  return Var{&t, idx};
}

Var sub_rowvec(Var mat, Var row) {
  check_same_tape(mat, row, "sub_rowvec");
  Tape& t = *mat.tape;
  const Tensor& mv = t.node_value(mat.idx);
  const Tensor& rv = t.node_value(row.idx);
  if (mv.rank() != 2 || rv.rank() != 1 || rv.numel() != mv.cols())
    throw ContractViolation("sub_rowvec: need (B x d) and (d), got " + mv.shape_str() + " and " +
                            rv.shape_str());
  const std::size_t B = mv.rows(), d = mv.cols();
  Tensor out({B, d});
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = mv.at(i, j) - rv[j];
  int im = mat.idx, ir = row.idx;
  int idx = t.push(std::move(out), [im, ir, B, d](Tape& tp, const Tensor& g) {
    Tensor gr({d});
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < d; ++j) gr[j] -= g.at(i, j);
    tp.accumulate(im, g);
    tp.accumulate(ir, gr);
  });
  return Var{&t, idx};
}

Var mul_colvec(Var mat, Var col) {
  check_same_tape(mat, col, "mul_colvec");
  Tape& t = *mat.tape;
  const Tensor& mv = t.node_value(mat.idx);
  const Tensor& cv = t.node_value(col.idx);
  if (mv.rank() != 2 || cv.rank() != 1 || cv.numel() != mv.rows())
    throw ContractViolation("mul_colvec: need (B x d) and (B), got " + mv.shape_str() + " and " +
                            cv.shape_str());
  const std::size_t B = mv.rows(), d = mv.cols();
  Tensor out({B, d});
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = mv.at(i, j) * cv[i];
  int im = mat.idx, ic = col.idx;
  int idx = t.push(std::move(out), [im, ic, B, d](Tape& tp, const Tensor& g) {
    const Tensor& mv = tp.node_value(im);
    const Tensor& cv = tp.node_value(ic);
    Tensor gm({B, d});
    Tensor gc({B});
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        gm.at(i, j) = g.at(i, j) * cv[i];
        gc[i] += g.at(i, j) * mv.at(i, j);
      }
    tp.accumulate(im, gm);
    tp.accumulate(ic, gc);
  });
  return Var{&t, idx};
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.node_value(a.idx);
  int ia = a.idx;
  int idx = t.push(Tensor::scalar(sum_all(av)), [ia](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, Tensor::full(tp.node_value(ia).shape(), g[0]));
  });
  return Var{&t, idx};
}

Var mean(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.node_value(a.idx);
  if (av.numel() == 0) throw ContractViolation("mean: empty tensor");
  const double n = static_cast<double>(av.numel());
  int ia = a.idx;
  int idx = t.push(Tensor::scalar(sum_all(av) / n), [ia, n](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, Tensor::full(tp.node_value(ia).shape(), g[0] / n));
  });
  return Var{&t, idx};
}

Var sum_rows(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.node_value(a.idx);
  if (av.rank() != 2) throw ContractViolation("sum_rows: need rank-2 input");
  const std::size_t B = av.rows(), d = av.cols();
  Tensor out({B});
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i] += av.at(i, j);
  int ia = a.idx;
  int idx = t.push(std::move(out), [ia, B, d](Tape& tp, const Tensor& g) {
    Tensor ga({B, d});
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < d; ++j) ga.at(i, j) = g[i];
    tp.accumulate(ia, ga);
  });
  return Var{&t, idx};
}

// ---------------------------------------------------------------------------
// pointwise nonlinearities
// ---------------------------------------------------------------------------

namespace {

// Builds a pointwise op node. dfdx receives (x, y).
Var pointwise(Var a, const char* name, double (*f)(double),
              double (*dfdx)(double, double), bool positive_domain) {
  Tape& t = *a.tape;
  const Tensor& av = t.node_value(a.idx);
  if (positive_domain) {
    for (std::size_t i = 0; i < av.numel(); ++i)
      if (!(av[i] > 0.0))
        throw DomainError(std::string(name) + ": non-positive input " + std::to_string(av[i]));
  }
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(av[i]);
  int ia = a.idx;
  int idx = t.push(std::move(out), [ia, dfdx](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.node_value(ia);
    Tensor ga(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) {
      // y recomputed cheaply where needed inside dfdx via its second argument:
      // we pass 0 here and let each rule use x only, except rules that
      // genuinely need y which recompute it from x.
      ga[i] = g[i] * dfdx(x[i], 0.0);
    }
    tp.accumulate(ia, ga);
  });
  return Var{&t, idx};
}

double sigmoid_stable(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_stable(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

Var square(Var a) {
  return pointwise(
      a, "square", [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; }, false);
}

Var exp(Var a) {
  return pointwise(
      a, "exp", [](double x) { return std::exp(x); },
      [](double x, double) { return std::exp(x); }, false);
}

Var log(Var a) {
  return pointwise(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; }, true);
}

Var sqrt(Var a) {
  return pointwise(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double x, double) { return 0.5 / std::sqrt(x); }, true);
}

Var tanh(Var a) {
  return pointwise(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double x, double) {
        const double y = std::tanh(x);
        return 1.0 - y * y;
      },
      false);
}

Var softplus(Var a) {
  return pointwise(
      a, "softplus", softplus_stable,
      [](double x, double) { return sigmoid_stable(x); }, false);
}

Var abs(Var a) {
  return pointwise(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }, false);
}

// ---------------------------------------------------------------------------
// norms
// ---------------------------------------------------------------------------

Var l2_norm(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.node_value(a.idx);
  double s = 0.0;
  for (std::size_t i = 0; i < av.numel(); ++i) s += av[i] * av[i];
  const double nrm = std::sqrt(s);
  int ia = a.idx;
  int idx = t.push(Tensor::scalar(nrm), [ia, nrm](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.node_value(ia);
    Tensor ga(x.shape());
    if (nrm > 0.0)
      for (std::size_t i = 0; i < x.numel(); ++i) ga[i] = g[0] * x[i] / nrm;
    tp.accumulate(ia, ga);
  });
  return Var{&t, idx};
}

Var rownorm(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.node_value(a.idx);
  if (av.rank() != 2) throw ContractViolation("rownorm: need rank-2 input");
  const std::size_t B = av.rows(), d = av.cols();
  Tensor out({B});
  for (std::size_t i = 0; i < B; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += av.at(i, j) * av.at(i, j);
    out[i] = std::sqrt(s);
  }
  int ia = a.idx;
  Tensor norms = out;
  int idx = t.push(std::move(out), [ia, B, d, norms](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.node_value(ia);
    Tensor ga({B, d});
    for (std::size_t i = 0; i < B; ++i) {
      if (norms[i] == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) ga.at(i, j) = g[i] * x.at(i, j) / norms[i];
    }
    tp.accumulate(ia, ga);
  });
  return Var{&t, idx};
}

// ---------------------------------------------------------------------------
// structure ops
// ---------------------------------------------------------------------------

Var concat(Var a, Var b) {
  check_same_tape(a, b, "concat");
  Tape& t = *a.tape;
  const Tensor& av = t.node_value(a.idx);
  const Tensor& bv = t.node_value(b.idx);
  if (av.rank() != 1 || bv.rank() != 1) throw ContractViolation("concat: rank-1 operands only");
  const std::size_t p = av.numel(), q = bv.numel();
  Tensor out({p + q});
  for (std::size_t i = 0; i < p; ++i) out[i] = av[i];
  for (std::size_t i = 0; i < q; ++i) out[p + i] = bv[i];
  int ia = a.idx, ib = b.idx;
  int idx = t.push(std::move(out), [ia, ib, p, q](Tape& tp, const Tensor& g) {
    Tensor ga({p});
    Tensor gb({q});
    for (std::size_t i = 0; i < p; ++i) ga[i] = g[i];
    for (std::size_t i = 0; i < q; ++i) gb[i] = g[p + i];
    tp.accumulate(ia, ga);
    tp.accumulate(ib, gb);
  });
  return Var{&t, idx};
}

Var concat_cols(Var a, Var b) {
  check_same_tape(a, b, "concat_cols");
  Tape& t = *a.tape;
  const Tensor& av = t.node_value(a.idx);
  const Tensor& bv = t.node_value(b.idx);
  if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows())
    throw ContractViolation("concat_cols: need rank-2 operands with equal row counts, got " +
                            av.shape_str() + " and " + bv.shape_str());
  const std::size_t B = av.rows(), p = av.cols(), q = bv.cols();
  Tensor out({B, p + q});
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = 0; j < p; ++j) out.at(i, j) = av.at(i, j);
    for (std::size_t j = 0; j < q; ++j) out.at(i, p + j) = bv.at(i, j);
  }
  int ia = a.idx, ib = b.idx;
  int idx = t.push(std::move(out), [ia, ib, B, p, q](Tape& tp, const Tensor& g) {
    Tensor ga({B, p});
    Tensor gb({B, q});
    for (std::size_t i = 0; i < B; ++i) {
      for (std::size_t j = 0; j < p; ++j) ga.at(i, j) = g.at(i, j);
      for (std::size_t j = 0; j < q; ++j) gb.at(i, j) = g.at(i, p + j);
    }
    tp.accumulate(ia, ga);
    tp.accumulate(ib, gb);
  });
  return Var{&t, idx};
}

Var slice(Var a, std::size_t start, std::size_t len) {
  Tape& t = *a.tape;
  const Tensor& av = t.node_value(a.idx);
  if (av.rank() != 1) throw ContractViolation("slice: rank-1 input only");
  if (start + len > av.numel()) throw ContractViolation("slice: range out of bounds");
  Tensor out({len});
  for (std::size_t i = 0; i < len; ++i) out[i] = av[start + i];
  int ia = a.idx;
  int idx = t.push(std::move(out), [ia, start, len](Tape& tp, const Tensor& g) {
    Tensor ga(tp.node_value(ia).shape());
    for (std::size_t i = 0; i < len; ++i) ga[start + i] = g[i];
    tp.accumulate(ia, ga);
  });
  return Var{&t, idx};
}

Var slice_cols(Var a, std::size_t start, std::size_t len) {
  Tape& t = *a.tape;
  const Tensor& av = t.node_value(a.idx);
  if (av.rank() != 2) throw ContractViolation("slice_cols: rank-2 input only");
  if (start + len > av.cols()) throw ContractViolation("slice_cols: range out of bounds");
  const std::size_t B = av.rows();
  Tensor out({B, len});
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < len; ++j) out.at(i, j) = av.at(i, start + j);
  int ia = a.idx;
  int idx = t.push(std::move(out), [ia, start, len, B](Tape& tp, const Tensor& g) {
    Tensor ga(tp.node_value(ia).shape());
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < len; ++j) ga.at(i, start + j) = g.at(i, j);
    tp.accumulate(ia, ga);
  });
  return Var{&t, idx};
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  Tape& t = *a.tape;
  const Tensor& av = t.node_value(a.idx);
  Tensor out(shape, av.raw());
  int ia = a.idx;
  int idx = t.push(std::move(out), [ia](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, Tensor(tp.node_value(ia).shape(), g.raw()));
  });
  return Var{&t, idx};
}

Var stop_gradient(Var a) {
  Tape& t = *a.tape;
  return Var{&t, t.push(t.node_value(a.idx), nullptr)};
}

}  // namespace arac::numerics
