#include "arac/ar.hpp"

#include <cmath>

#include "arac/error.hpp"
#include "arac/logging.hpp"

namespace arac::ar {

FitnessStats stats_of(const std::vector<ArchiveDraw>& sample) {
  if (sample.empty()) throw ContractViolation("fitness stats: empty archive draw");
  FitnessStats s{sample[0].fitness, sample[0].fitness};
  for (const ArchiveDraw& d : sample) {
    s.f_min = std::min(s.f_min, d.fitness);
    s.f_max = std::max(s.f_max, d.fitness);
  }
  return s;
}

namespace {

// Normalized fitness position t in [0, 1]; -1 signals a degenerate range.
double normalized(double f, const FitnessStats& stats) {
  if (stats.f_max == stats.f_min) return -1.0;
  return (f - stats.f_min) / (stats.f_max - stats.f_min);
}

}  // namespace

double beta_proactive(double f, const FitnessStats& stats) {
  const double t = normalized(f, stats);
  if (t < 0.0) return 0.0;
  return -(2.0 * (t - 1.0));
}

double beta_proactive_signed(double f, const FitnessStats& stats) {
  const double t = normalized(f, stats);
  if (t < 0.0) return 0.0;
  return -(2.0 * t - 1.0);
}

double beta_reactive(double f, const FitnessStats& stats) {
  const double t = normalized(f, stats);
  if (t < 0.0) return 0.0;
  return 1.0 - t;
}

double beta_of(const ArStrategy& strat, double f, const FitnessStats& stats) {
  if (strat.kind == StrategyKind::Reactive) return beta_reactive(f, stats);
  return strat.proactive_signed ? beta_proactive_signed(f, stats) : beta_proactive(f, stats);
}

KlEstimate kl_mc(const NfPolicy& pi, const NfPolicy& pi_prime, const std::vector<Vec>& states,
                 std::size_t n_samples, Rng& rng) {
  if (states.empty()) throw ContractViolation("kl_mc: empty state set");
  if (n_samples == 0) throw ContractViolation("kl_mc: need at least one sample per state");
  if (pi.action_dim() != pi_prime.action_dim())
    throw ContractViolation("kl_mc: action dimensions disagree");
  double sum = 0.0, sumsq = 0.0;
  std::size_t n = 0;
  for (const Vec& s : states)
    for (std::size_t k = 0; k < n_samples; ++k) {
      policy::SampleResult r = policy::sample(pi, s, rng);
      const double term = r.log_prob - policy::log_prob(pi_prime, s, r.action);
      sum += term;
      sumsq += term * term;
      n += 1;
    }
  KlEstimate est;
  est.n_terms = n;
  est.mean = sum / static_cast<double>(n);
  if (n > 1) {
    const double var = (sumsq - sum * sum / static_cast<double>(n)) / static_cast<double>(n - 1);
    est.std_err = std::sqrt(std::max(0.0, var) / static_cast<double>(n));
  }
  return est;
}

namespace {

// Tile the state batch n times along the row axis.
Tensor tile_rows(const Tensor& states, std::size_t n) {
  const std::size_t B = states.rows(), s = states.cols();
  Tensor out({B * n, s});
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < s; ++j) out.at(k * B + i, j) = states.at(i, j);
  return out;
}

Tensor draw_noise(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = rng.normal();
  return out;
}

}  // namespace

Var kl_mc_batch(Tape& t, const NfPolicy& pi, const NfPolicy& pi_prime, const Tensor& states,
                const Tensor& noise, bool block_embedding) {
  using namespace numerics;
  if (pi.action_dim() != pi_prime.action_dim())
    throw ContractViolation("kl_mc: action dimensions disagree");
  if (states.rank() != 2 || states.rows() == 0)
    throw ContractViolation("kl_mc: state batch must be nonempty");
  if (noise.rank() != 2 || noise.rows() % states.rows() != 0)
    throw ContractViolation("kl_mc: noise rows must be a multiple of the state rows");
  const std::size_t n = noise.rows() / states.rows();
  const Tensor rep = n == 1 ? states : tile_rows(states, n);

  policy::PolicyBatch pb =
      policy::sample_batch(t, pi, rep, noise, numerics::Bind::Train, block_embedding);
  Var lp_prime = policy::log_prob_batch(t, pi_prime, rep, pb.actions, numerics::Bind::Frozen);
  return mean(sub(pb.log_prob, lp_prime));
}

Var ar_loss_with_betas(Tape& t, const NfPolicy& pi,
                       const std::vector<std::pair<const NfPolicy*, double>>& weighted,
                       const Tensor& states, std::size_t n_kl_samples, Rng& rng) {
  using namespace numerics;
  if (weighted.empty()) {
    log::debug("ar loss: empty archive draw, contributing 0");
    return t.scalar(0.0);
  }
  if (n_kl_samples == 0) throw ContractViolation("ar loss: need at least one KL sample");
  const std::size_t rows = states.rows() * n_kl_samples;

  Var acc = t.scalar(0.0);
  for (const auto& [snap, beta] : weighted) {
    // Noise is drawn for every entry, even when its weight silences the term,
    // so the RNG stream does not depend on the betas.
    Tensor noise = draw_noise(rows, pi.action_dim(), rng);
    if (beta == 0.0) continue;
    Var kl = kl_mc_batch(t, pi, *snap, states, noise, /*block_embedding=*/true);
    acc = add(acc, mul(t.scalar(beta), kl));
  }
  return mul(t.scalar(-1.0 / static_cast<double>(weighted.size())), acc);
}

Var ar_loss(Tape& t, const NfPolicy& pi, const std::vector<ArchiveDraw>& sample,
            const Tensor& states, const ArStrategy& strat, Rng& rng) {
  if (sample.empty()) {
    log::debug("ar loss: empty archive sample, contributing 0");
    return t.scalar(0.0);
  }
  const FitnessStats stats = stats_of(sample);
  std::vector<std::pair<const NfPolicy*, double>> weighted;
  weighted.reserve(sample.size());
  for (const ArchiveDraw& d : sample)
    weighted.emplace_back(d.pi, beta_of(strat, d.fitness, stats));
  return ar_loss_with_betas(t, pi, weighted, states, strat.n_kl_samples, rng);
}

Var combined_policy_loss(Tape& t, const NfPolicy& pi, const sac::Critic& critic,
                         const Tensor& states, const Tensor& noise, double alpha,
                         const std::vector<ArchiveDraw>& archive_sample,
                         const ArStrategy& strat, Rng& rng) {
  using namespace numerics;
  Var sac_term = sac::policy_loss_sac(t, pi, critic, states, noise, alpha);
  if (strat.lambda_ar == 0.0) return sac_term;
  Var ar_term = ar_loss(t, pi, archive_sample, states, strat, rng);
  return add(sac_term, mul(t.scalar(strat.lambda_ar), ar_term));
}

}  // namespace arac::ar
