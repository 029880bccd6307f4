#pragma once

#include <vector>

#include "arac/mlp.hpp"
#include "arac/rng.hpp"
#include "arac/tape.hpp"
#include "arac/tensor.hpp"

namespace arac::flows {

using numerics::Bind;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;
using Vec = std::vector<double>;

// ln(e^y - 1): the preimage of y under softplus.
double inverse_softplus(double y);

// One radial layer
//   y = z + b * h(r) * (z - z0),  h(r) = 1 / (a + r),  r = |z - z0|,
// with a = softplus(alpha_raw) and b = -a + softplus(beta_raw). The
// reparameterization keeps b > -a for every raw value, which makes the map
// a bijection regardless of what the optimizer does to the raw parameters.
struct RadialLayer {
  Tensor alpha_raw;  // rank-0
  Tensor beta_raw;   // rank-0
  Tensor z0;         // (d)

  // Starts close to the identity map: b near 0, z0 scattered around the
  // origin so stacked layers differ from each other.
  static RadialLayer near_identity(std::size_t d, Rng& rng);

  std::size_t dim() const { return z0.numel(); }
  double alpha() const;
  double beta_hat() const;
};

// Composition of radial layers over a fixed dimension; layer 0 acts first.
// An empty chain is the identity with zero log-determinant.
struct FlowChain {
  std::size_t dim = 0;
  std::vector<RadialLayer> layers;

  static FlowChain make(std::size_t d, std::size_t n_layers, Rng& rng);

  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
};

struct FlowValue {
  Vec y;
  double logdet;  // ln |det dy/dz|
};

struct FlowInverse {
  Vec z;
  double logdet_inv;  // ln |det dz/dy| = -ln |det dy/dz| evaluated at z
};

// Value-path transforms for rollouts and density evaluation.
// Non-finite inputs raise DomainError.
FlowValue forward(const RadialLayer& layer, const Vec& z);
FlowInverse inverse(const RadialLayer& layer, const Vec& y);
FlowValue chain_forward(const FlowChain& chain, const Vec& z);
FlowInverse chain_inverse(const FlowChain& chain, const Vec& y);

// Tape-path transforms over a batch: z/y are (B x d) nodes, logdet is (B).
struct FlowBatch {
  Var y;
  Var logdet;
};

struct FlowBatchInverse {
  Var z;
  Var logdet_inv;
};

FlowBatch forward(Tape& t, const RadialLayer& layer, Var z, Bind bind);
FlowBatchInverse inverse(Tape& t, const RadialLayer& layer, Var y, Bind bind);
FlowBatch chain_forward(Tape& t, const FlowChain& chain, Var z, Bind bind);
FlowBatchInverse chain_inverse(Tape& t, const FlowChain& chain, Var y, Bind bind);

// Sum of |p| over all raw parameters of the chain (the optional sparsity
// penalty some experiments add to the loss).
Var l1_penalty(Tape& t, const FlowChain& chain, Bind bind);

}  // namespace arac::flows
