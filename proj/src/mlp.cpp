#include "arac/mlp.hpp"

#include <cmath>

#include "arac/error.hpp"

namespace arac::numerics {

Mlp Mlp::make(std::vector<std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw ContractViolation("Mlp::make: need at least in and out dims");
  Mlp m;
  m.dims_ = std::move(dims);
  for (std::size_t l = 0; l + 1 < m.dims_.size(); ++l) {
    const std::size_t in = m.dims_[l], out = m.dims_[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor w({in, out});
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
    Tensor b({out});
    for (std::size_t i = 0; i < b.numel(); ++i) b[i] = rng.uniform(-bound, bound);
    m.w_.push_back(std::move(w));
    m.b_.push_back(std::move(b));
  }
  return m;
}

Var Mlp::forward(Tape& t, Var x, Bind bind) const {
  const Tensor& xv = t.value(x);
  if (xv.rank() != 2 || xv.cols() != in_dim())
    throw ContractViolation("Mlp::forward: input shape " + xv.shape_str() + " does not match in dim");
  Var h = x;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    Var w = bind_param(t, w_[l], bind);
    Var b = bind_param(t, b_[l], bind);
    h = add_rowvec(matmul(h, w), b);
    if (l + 1 < w_.size()) h = tanh(h);
  }
  return h;
}

std::vector<double> Mlp::forward(const std::vector<double>& x) const {
  if (x.size() != in_dim()) throw ContractViolation("Mlp::forward: input size mismatch");
  std::vector<double> h = x;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    const Tensor& w = w_[l];
    const Tensor& b = b_[l];
    std::vector<double> out(w.cols());
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double s = b[j];
      for (std::size_t i = 0; i < w.rows(); ++i) s += h[i] * w.at(i, j);
      out[j] = (l + 1 < w_.size()) ? std::tanh(s) : s;
    }
    h = std::move(out);
  }
  return h;
}

std::vector<Tensor*> Mlp::params() {
  std::vector<Tensor*> out;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    out.push_back(&w_[l]);
    out.push_back(&b_[l]);
  }
  return out;
}

std::vector<const Tensor*> Mlp::params() const {
  std::vector<const Tensor*> out;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    out.push_back(&w_[l]);
    out.push_back(&b_[l]);
  }
  return out;
}

}  // namespace arac::numerics
