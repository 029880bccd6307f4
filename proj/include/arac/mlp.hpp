#pragma once

#include <vector>

#include "arac/rng.hpp"
#include "arac/tape.hpp"
#include "arac/tensor.hpp"

namespace arac::numerics {

// Fully connected net with tanh hidden activations and a linear output layer.
// Weight l has shape (d_l x d_{l+1}) so a batch forward is X * W + b row-wise.
class Mlp {
 public:
  Mlp() = default;

  // dims = {in, hidden..., out}; weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static Mlp make(std::vector<std::size_t> dims, Rng& rng);

  // Batch forward: x is (B x in) on the tape, result (B x out).
  Var forward(Tape& t, Var x, Bind bind) const;

  // Single-input forward without a tape.
  std::vector<double> forward(const std::vector<double>& x) const;

  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;

  std::size_t in_dim() const { return dims_.front(); }
  std::size_t out_dim() const { return dims_.back(); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  const std::vector<Tensor>& weights() const { return w_; }
  const std::vector<Tensor>& biases() const { return b_; }
  std::vector<Tensor>& weights() { return w_; }
  std::vector<Tensor>& biases() { return b_; }

 private:
  std::vector<std::size_t> dims_;
  std::vector<Tensor> w_;
  std::vector<Tensor> b_;
};

}  // namespace arac::numerics
