#include "arac/didactic.hpp"

#include <cmath>
#include <limits>

#include "arac/ar.hpp"
#include "arac/error.hpp"
#include "arac/flows.hpp"
#include "arac/logging.hpp"
#include "arac/sac.hpp"
#include "arac/tape.hpp"

namespace arac::envs {
namespace {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

DidacticSnapshot take_snapshot(const policy::NfPolicy& pi, const policy::NfPolicy& target,
                               const policy::NfPolicy& repulsive, const DidacticConfig& cfg,
                               std::size_t step, Rng& diag_rng) {
  const std::vector<Vec> probe = {{0.0}};
  DidacticSnapshot snap;
  snap.step = step;
  snap.beta = didactic_beta(step < cfg.steps ? step : cfg.steps - 1);
  snap.kl_to_target = ar::kl_mc(pi, target, probe, 4000, diag_rng).mean;
  snap.kl_to_repulsive = ar::kl_mc(pi, repulsive, probe, 4000, diag_rng).mean;
  snap.log_density = log_density_grid(pi, cfg.grid_n, cfg.grid_half_extent);
  return snap;
}

}  // namespace

policy::NfPolicy frozen_gaussian(const Vec& mu, double sigma) {
  if (mu.empty()) throw ContractViolation("frozen_gaussian: mu must be non-empty");
  if (!(sigma > 0.0)) throw ContractViolation("frozen_gaussian: sigma must be positive");
  Rng scratch(0);
  policy::NfPolicy pi = policy::NfPolicy::make(/*state_dim=*/1, mu.size(), /*hidden=*/0,
                                               /*n_flows=*/0, policy::SigmaMode::Fixed, sigma,
                                               scratch);
  Tensor& w = pi.mean_net.weights()[0];
  for (std::size_t i = 0; i < w.numel(); ++i) w.data()[i] = 0.0;
  Tensor& b = pi.mean_net.biases()[0];
  for (std::size_t i = 0; i < mu.size(); ++i) b.data()[i] = mu[i];
  return pi;
}

double didactic_beta(std::size_t t) { return 10.0 / (static_cast<double>(t) + 1.0); }

DidacticResult run_didactic(const DidacticConfig& cfg, const policy::NfPolicy& target,
                            const policy::NfPolicy& repulsive) {
  if (cfg.steps == 0) throw ContractViolation("run_didactic: steps must be positive");
  if (cfg.n_kl_samples == 0) {
    throw ContractViolation("run_didactic: n_kl_samples must be positive");
  }
  for (const policy::NfPolicy* frozen : {&target, &repulsive}) {
    if (frozen->state_dim() != 1 || frozen->action_dim() != 2) {
      throw ContractViolation(
          "run_didactic: frozen policies must map 1-dim states to 2-dim actions");
    }
  }

  Rng rng = Rng::derive(cfg.seed, {0x9d1dac7});
  Rng diag_rng = Rng::derive(cfg.seed, {0x9d1dac7, 1});

  DidacticResult out{policy::NfPolicy::make(/*state_dim=*/1, /*action_dim=*/2, /*hidden=*/0,
                                            cfg.n_flows, policy::SigmaMode::Learned,
                                            /*sigma=*/1.0, rng),
                     {}};
  policy::NfPolicy& pi = out.pi;
  sac::Adam opt(pi.params(), cfg.lr);

  const Tensor states = Tensor::zeros({1, 1});
  out.history.push_back(take_snapshot(pi, target, repulsive, cfg, 0, diag_rng));

  for (std::size_t t_step = 0; t_step < cfg.steps; ++t_step) {
    Tape t;
    const Tensor noise_t = Tensor::randn({cfg.n_kl_samples, 2}, rng);
    const Tensor noise_r = Tensor::randn({cfg.n_kl_samples, 2}, rng);
    const Var kl_t = ar::kl_mc_batch(t, pi, target, states, noise_t, /*block_embedding=*/false);
    const Var kl_r = ar::kl_mc_batch(t, pi, repulsive, states, noise_r, /*block_embedding=*/false);
    Var loss = add(kl_t, mul(t.scalar(-didactic_beta(t_step)), kl_r));
    if (cfg.n_flows > 0) {
      loss = add(loss, mul(t.scalar(cfg.l1_weight),
                           flows::l1_penalty(t, pi.chain, numerics::Bind::Train)));
    }
    t.backward(loss);
    if (!opt.step(t)) {
      log::error("run_didactic: skipped step %zu (non-finite gradients)", t_step);
    }

    const std::size_t done = t_step + 1;
    if (done == cfg.steps || (cfg.log_interval > 0 && done % cfg.log_interval == 0)) {
      out.history.push_back(take_snapshot(pi, target, repulsive, cfg, done, diag_rng));
    }
  }
  return out;
}

DidacticResult run_didactic(const DidacticConfig& cfg) {
  if (cfg.target_mu.size() != 2 || cfg.repulsive_mu.size() != 2) {
    throw ContractViolation("run_didactic: mode means must be 2-dimensional");
  }
  return run_didactic(cfg, frozen_gaussian(cfg.target_mu, cfg.mode_sigma),
                      frozen_gaussian(cfg.repulsive_mu, cfg.mode_sigma));
}

numerics::Tensor log_density_grid(const policy::NfPolicy& pi, std::size_t n, double half_extent) {
  if (n < 2) throw ContractViolation("log_density_grid: need at least a 2x2 grid");
  if (!(half_extent > 0.0)) {
    throw ContractViolation("log_density_grid: half_extent must be positive");
  }
  if (pi.state_dim() != 1 || pi.action_dim() != 2) {
    throw ContractViolation("log_density_grid: policy must map 1-dim states to 2-dim actions");
  }
  const Vec state = {0.0};
  Tensor grid = Tensor::zeros({n, n});
  const double step = 2.0 * half_extent / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = -half_extent + step * static_cast<double>(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double y = -half_extent + step * static_cast<double>(j);
      grid.at(i, j) = policy::log_prob(pi, state, {x, y});
    }
  }
  return grid;
}

double log_mass_within(const numerics::Tensor& log_grid, double half_extent, double cx, double cy,
                       double radius) {
  if (log_grid.rank() != 2 || log_grid.rows() != log_grid.cols() || log_grid.rows() < 2) {
    throw ContractViolation("log_mass_within: expected a square grid with side >= 2");
  }
  const std::size_t n = log_grid.rows();
  const double step = 2.0 * half_extent / static_cast<double>(n - 1);
  double max_lp = -std::numeric_limits<double>::infinity();
  std::vector<double> selected;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = -half_extent + step * static_cast<double>(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double y = -half_extent + step * static_cast<double>(j);
      const double dx = x - cx;
      const double dy = y - cy;
      if (dx * dx + dy * dy <= radius * radius) {
        selected.push_back(log_grid.at(i, j));
        max_lp = std::max(max_lp, log_grid.at(i, j));
      }
    }
  }
  if (selected.empty() || !std::isfinite(max_lp)) {
    return -std::numeric_limits<double>::infinity();
  }
  double acc = 0.0;
  for (double lp : selected) acc += std::exp(lp - max_lp);
  return max_lp + std::log(acc) + 2.0 * std::log(step);
}

}  // namespace arac::envs
