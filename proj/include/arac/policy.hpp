#pragma once

#include <iosfwd>
#include <vector>

#include "arac/flows.hpp"
#include "arac/mlp.hpp"
#include "arac/rng.hpp"
#include "arac/tape.hpp"
#include "arac/tensor.hpp"

namespace arac::policy {

using flows::FlowChain;
using flows::Vec;
using numerics::Bind;
using numerics::Mlp;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

enum class SigmaMode { Fixed, Learned };

// Stochastic policy: Gaussian base noise pushed through a state-conditioned
// affine embedding and a chain of radial layers.
//
//   a0 ~ N(0, I_d);   z = a0 * sigma(s) + mu(s);   a = chain(z)
//
// The action is emitted unsquashed; environments clip to their own bounds.
// With the fixed noise mode, sigma is one shared scalar across dimensions;
// with the learned mode a second network produces log sigma(s) per dimension,
// soft-clamped to [-5, 1] so the scale can neither vanish nor explode.
struct NfPolicy {
  SigmaMode sigma_mode = SigmaMode::Fixed;
  double sigma = 0.5;  // fixed-mode scale; ignored when learned
  Mlp mean_net;        // state (s) -> mean (d)
  Mlp log_sigma_net;   // state (s) -> raw log-scale (d); learned mode only
  FlowChain chain;     // d -> d

  // hidden = 0 builds a purely linear mean net.
  static NfPolicy make(std::size_t state_dim, std::size_t action_dim, std::size_t hidden,
                       std::size_t n_flows, SigmaMode mode, double sigma, Rng& rng);

  std::size_t state_dim() const { return mean_net.in_dim(); }
  std::size_t action_dim() const { return mean_net.out_dim(); }

  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
  // The embedding half (mean net and, when learned, the log-scale net).
  std::vector<Tensor*> embedding_params();
  // The flow half (raw radial-layer parameters).
  std::vector<Tensor*> flow_params();

  // Per-dimension noise scale at a state (d entries; fixed mode repeats the
  // shared scalar).
  Vec sigma_at(const Vec& state) const;
};

// Immutable deep copy of a policy's parameters, used for archive entries and
// cross-policy density evaluation.
class PolicySnapshot {
 public:
  explicit PolicySnapshot(const NfPolicy& p) : params_(p) {}
  const NfPolicy& get() const { return params_; }

 private:
  NfPolicy params_;
};

struct SampleResult {
  Vec action;
  double log_prob;
};

// Value-path operations (rollouts, density evaluation, tests).
SampleResult sample(const NfPolicy& p, const Vec& state, Rng& rng);
// Deterministic variant used by tests: the caller supplies the base noise.
SampleResult sample_with_noise(const NfPolicy& p, const Vec& state, const Vec& a0);
// Exact log-density of an arbitrary action via the inverse chain.
double log_prob(const NfPolicy& p, const Vec& state, const Vec& action);
// Noise-free action: the chain image of the mean (base noise pinned to zero).
Vec deterministic_action(const NfPolicy& p, const Vec& state);

// Tape-path operations over a minibatch.
struct PolicyBatch {
  Var actions;   // (B x d)
  Var log_prob;  // (B)
};

// Reparameterized sampling: states (B x s) and base noise (B x d) enter as
// constants; gradients flow to the embedding and flow parameters. With
// block_embedding the embedding output and its base density are detached, so
// only the flow parameters receive gradient through this sample.
PolicyBatch sample_batch(Tape& t, const NfPolicy& p, const Tensor& states, const Tensor& noise,
                         Bind bind, bool block_embedding = false);

// Log-density of given on-tape actions under p (actions keep their own
// gradient path; p's parameters are bound per `bind`).
Var log_prob_batch(Tape& t, const NfPolicy& p, const Tensor& states, Var actions, Bind bind);

// Self-describing JSON serialization (dims, modes, flat parameter arrays).
// Round-trips exactly: doubles are emitted with shortest-round-trip encoding.
void save_policy(std::ostream& out, const NfPolicy& p);
NfPolicy load_policy(std::istream& in);

}  // namespace arac::policy
