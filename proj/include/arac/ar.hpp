#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "arac/policy.hpp"
#include "arac/rng.hpp"
#include "arac/sac.hpp"
#include "arac/tape.hpp"
#include "arac/tensor.hpp"

namespace arac::ar {

using flows::Vec;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;
using policy::NfPolicy;

enum class StrategyKind { Proactive, Reactive };

struct ArStrategy {
  StrategyKind kind = StrategyKind::Proactive;
  double lambda_ar = 1.0;            // weight of the repulsion term in Eq-style combined loss
  std::size_t n_kl_samples = 1;      // actions per state per archived policy
  std::size_t n_archive_samples = 5; // archived policies drawn per minibatch
  // The unsigned proactive schedule maps fitness to [0, 2] (repulsion only).
  // The signed variant maps to [-1, 1], turning high-fitness archived
  // policies into attractors. Both readings of the schedule are supported;
  // the unsigned one is the default.
  bool proactive_signed = false;
};

// Fitness range over the archived policies drawn for one minibatch.
struct FitnessStats {
  double f_min = 0.0;
  double f_max = 0.0;
};

// One drawn archive entry: a frozen policy and the fitness it was stored with.
struct ArchiveDraw {
  const NfPolicy* pi = nullptr;
  double fitness = 0.0;
};

FitnessStats stats_of(const std::vector<ArchiveDraw>& sample);

// Schedules mapping an archived policy's fitness to its repulsion weight.
// All return 0 when the range is degenerate (f_max == f_min).
double beta_proactive(double f, const FitnessStats& stats);         // in [0, 2]
double beta_proactive_signed(double f, const FitnessStats& stats);  // in [-1, 1]
double beta_reactive(double f, const FitnessStats& stats);          // in [0, 1]
double beta_of(const ArStrategy& strat, double f, const FitnessStats& stats);

// Monte Carlo KL(pi || pi_prime) over a set of states, n actions per state.
struct KlEstimate {
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t n_terms = 0;
};

KlEstimate kl_mc(const NfPolicy& pi, const NfPolicy& pi_prime, const std::vector<Vec>& states,
                 std::size_t n_samples, Rng& rng);

// Tape-path estimator: states (B x s), noise ((B*n) x d); the mean over all
// B*n terms of log pi(a|s) - log pi_prime(a|s) with a drawn from pi by
// reparameterization. pi is bound trainable, pi_prime frozen. With
// block_embedding the gradient reaches only pi's flow parameters.
Var kl_mc_batch(Tape& t, const NfPolicy& pi, const NfPolicy& pi_prime, const Tensor& states,
                const Tensor& noise, bool block_embedding);

// AR objective: -(1/n) * sum over drawn archived policies of beta * KL.
// Gradients through the base-policy mean and scale are blocked, so only flow
// parameters feel attraction or repulsion. An empty draw yields a constant 0.
Var ar_loss(Tape& t, const NfPolicy& pi, const std::vector<ArchiveDraw>& sample,
            const Tensor& states, const ArStrategy& strat, Rng& rng);

// Core with explicit per-policy weights (exposed for tests and diagnostics).
Var ar_loss_with_betas(Tape& t, const NfPolicy& pi,
                       const std::vector<std::pair<const NfPolicy*, double>>& weighted,
                       const Tensor& states, std::size_t n_kl_samples, Rng& rng);

// Full actor objective: the soft actor-critic term plus lambda times the AR
// term. lambda = 0 builds exactly the plain actor loss (no AR graph at all).
Var combined_policy_loss(Tape& t, const NfPolicy& pi, const sac::Critic& critic,
                         const Tensor& states, const Tensor& noise, double alpha,
                         const std::vector<ArchiveDraw>& archive_sample,
                         const ArStrategy& strat, Rng& rng);

}  // namespace arac::ar
