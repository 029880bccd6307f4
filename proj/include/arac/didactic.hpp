#pragma once

// A two-mode imitation exercise on a single fixed state: one frozen Gaussian
// to match, one frozen Gaussian to avoid, with the avoidance weight decaying
// over time. Flow-free policies can only compromise; policies with enough
// flow layers can wrap mass around the repelled mode. Used by the didactic
// CLI subcommand and as a readable end-to-end check of the KL machinery.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "arac/policy.hpp"
#include "arac/tensor.hpp"

namespace arac::envs {

using Vec = std::vector<double>;

// Isotropic Gaussian N(mu, sigma^2 I) packaged as a flow-free policy whose
// mean net has zero weights and bias mu, so the density is the same for
// every state. sigma must be positive.
policy::NfPolicy frozen_gaussian(const Vec& mu, double sigma);

// Repulsion weight at optimization step t (0-based): 10 / (t + 1).
double didactic_beta(std::size_t t);

struct DidacticConfig {
  std::size_t n_flows = 3;       // 0 reduces the policy to a plain Gaussian
  std::size_t steps = 1500;      // optimization steps
  double lr = 5e-2;              // Adam learning rate
  std::size_t n_kl_samples = 64; // MC samples per KL term per step
  double l1_weight = 2.0;        // weight on the flow raw-parameter l1 norm
  Vec target_mu = {3.0, 3.0};
  Vec repulsive_mu = {-2.0, -2.0};
  double mode_sigma = 0.7;       // scale of both frozen Gaussians
  std::size_t grid_n = 121;      // density grid resolution per side
  double grid_half_extent = 6.0; // grids cover [-h, h]^2
  std::size_t log_interval = 250;
  std::uint64_t seed = 0;
};

struct DidacticSnapshot {
  std::size_t step = 0;     // completed optimization steps at logging time
  double beta = 0.0;        // repulsion weight in effect at this step count
  double kl_to_target = 0.0;     // fresh-noise MC diagnostics
  double kl_to_repulsive = 0.0;
  numerics::Tensor log_density;  // (grid_n x grid_n), see log_density_grid
};

struct DidacticResult {
  policy::NfPolicy pi;
  std::vector<DidacticSnapshot> history;  // start, every log_interval, end
};

// Trains one policy (learned sigma) on states fixed to {0} by minimizing
//   KL(pi || target) - beta_t * KL(pi || repulsive) + l1_weight * l1(flows)
// with Adam, fresh reparameterization noise for each KL estimate, and full
// gradients through mean, sigma, and flow parameters. The frozen target and
// repulsive policies may be any 1-state / 2-action policies, Gaussian or
// flow-shaped.
DidacticResult run_didactic(const DidacticConfig& cfg, const policy::NfPolicy& target,
                            const policy::NfPolicy& repulsive);

// Convenience wrapper: builds the frozen Gaussians described by the config's
// target_mu / repulsive_mu / mode_sigma fields.
DidacticResult run_didactic(const DidacticConfig& cfg);

// Grid of log p(a | s = {0}) over [-h, h]^2 for a 2-action policy with a
// 1-dim state: entry (i, j) is the log density at
// a = (-h + 2h*i/(n-1), -h + 2h*j/(n-1)). n must be at least 2.
numerics::Tensor log_density_grid(const policy::NfPolicy& pi, std::size_t n, double half_extent);

// log of the integral of exp(log_grid) over the grid cells whose center lies
// within `radius` of (cx, cy): logsumexp of the selected entries plus the
// log of the cell area. Returns -infinity when no cell qualifies.
double log_mass_within(const numerics::Tensor& log_grid, double half_extent, double cx, double cy,
                       double radius);

}  // namespace arac::envs
