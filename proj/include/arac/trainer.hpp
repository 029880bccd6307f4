#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "arac/ar.hpp"
#include "arac/archive.hpp"
#include "arac/envs.hpp"
#include "arac/policy.hpp"
#include "arac/rng.hpp"
#include "arac/sac.hpp"
#include "json.hpp"

namespace arac::trainer {

using envs::Env;
using flows::Vec;

// Run-level knobs for the population trainer. Field names match the JSON
// configuration keys one-to-one.
struct TrainerConfig {
  // Population shape.
  std::size_t M = 5;  // population size
  std::size_t K = 2;  // number of elites sharing the critic updates
  std::size_t G = 10; // archive capacity
  std::size_t n = 5;  // archived policies drawn per actor minibatch
  std::size_t R = 10; // noise-free evaluation rollouts per agent
  double p = 1.0;     // actor updates per agent = floor((step / M) * p)

  // Losses.
  double alpha = 0.2;   // entropy temperature
  double gamma = 0.99;  // discount
  std::string strategy = "proactive";  // repulsion weight schedule
  double lambda_ar = 1.0;              // weight of the repulsion term
  std::size_t n_kl_samples = 1;        // actions per state in the KL estimate
  bool proactive_signed = false;       // signed variant of the schedule

  // Policy shape.
  std::size_t flows = 3;             // radial layers per agent
  std::string sigma_mode = "fixed";  // "fixed" or "learned" noise scale
  double sigma = 0.5;                // shared scale in fixed mode
  std::size_t hidden = 64;           // hidden width of every net (0 = linear)

  // Optimization.
  std::size_t batch_size = 256;
  std::size_t buffer_capacity = 1000000;
  double lr = 3e-4;
  double tau = 0.005;

  // Run length and bookkeeping.
  std::size_t max_steps = 0;          // exploration step budget
  std::size_t eval_interval = 10000;  // checkpoint cadence in env steps (0 = final only)
  std::uint64_t seed = 0;
  std::string env = "deceptive_bandit2d";
  bool eval_writes_buffer = true;      // store evaluation transitions too
  std::size_t kl_probe_states = 5;     // states per archive-distance estimate

  // Throws naming the offending field.
  void validate() const;

  ar::ArStrategy ar_strategy() const;
  policy::SigmaMode parsed_sigma_mode() const;
};

// Strict JSON round-trip: missing or ill-typed fields and unknown keys throw
// with the field name in the message. Every field is optional except none;
// absent keys keep the defaults above.
TrainerConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const TrainerConfig& cfg);
TrainerConfig load_config_file(const std::filesystem::path& path);

// Everything a run mutates: the population, the shared critic pair, the
// replay buffer, the archive, and the optimizer states. Addresses of the
// contained tensors are pinned for the lifetime of the object (the Adam
// instances point into them), so the struct is neither copyable nor movable.
struct PopulationState {
  TrainerConfig cfg;
  std::unique_ptr<Env> env;

  std::vector<policy::NfPolicy> agents;
  sac::Critic critic;
  sac::ValueNet value;
  sac::ValueNet value_target;
  sac::ReplayBuffer buffer;
  archive::Archive archive;

  std::vector<double> fitness;       // last evaluation, one entry per agent
  std::vector<std::size_t> elites;   // current top-K, best first
  std::size_t generation = 0;        // completed generations
  std::size_t total_step = 0;        // exploration env steps consumed
  std::string init_param_hash;       // FNV-1a over the initial parameters

  std::unique_ptr<sac::Adam> opt_critic;
  std::unique_ptr<sac::Adam> opt_value;
  std::vector<std::unique_ptr<sac::Adam>> opt_actor;

  PopulationState(const PopulationState&) = delete;
  PopulationState& operator=(const PopulationState&) = delete;

  bool is_elite(std::size_t agent) const;

  static std::unique_ptr<PopulationState> init(const TrainerConfig& cfg);

 private:
  PopulationState(const TrainerConfig& c, std::unique_ptr<Env> e);
};

// One policy run for a number of episodes. With noise the base noise is
// sampled; without it the action is the deterministic chain image of the
// mean. Every transition is appended to the buffer when one is supplied,
// in both modes.
struct RolloutResult {
  double avg_fitness = 0.0;  // total return / episodes
  std::size_t steps = 0;     // env steps consumed
};

RolloutResult rollout(const policy::NfPolicy& pi, Env& env, bool with_noise,
                      std::size_t episodes, Rng& rng, sac::ReplayBuffer* buffer);

// Per-agent record of one generation, in agent order.
struct AgentGenStats {
  double fitness = 0.0;
  bool is_elite = false;             // member of the top-K chosen this generation
  double mean_kl_to_archive = 0.0;   // 0 when the archive or buffer is empty
  double policy_loss = 0.0;          // mean over this agent's actor updates
  std::size_t actor_updates = 0;
  std::size_t archive_draws = 0;     // archived policies sampled for this agent
  std::size_t exploration_steps = 0;
};

struct GenerationStats {
  std::size_t generation = 0;   // index of this generation (0-based)
  std::size_t total_step = 0;   // cumulative exploration steps after it
  std::size_t step = 0;         // exploration steps gathered this generation
  double critic_loss = 0.0;     // mean over all critic minibatches
  double value_loss = 0.0;      // mean over all value minibatches
  std::size_t critic_updates = 0;  // per elite
  std::vector<AgentGenStats> agents;
};

// One full generation: exploration, critic phase on the elites, actor phase
// on everyone (elites with the archive term, the rest plain), noise-free
// evaluation, elite re-ranking, archive update. parallel_eval > 1 evaluates
// agents on that many threads with identical results.
GenerationStats run_generation(PopulationState& s, std::size_t parallel_eval = 0);

// Agent indices sorted by fitness, best first, ties broken toward the lower
// index. The first K entries are the elite set.
std::vector<std::size_t> rank_by_fitness(const std::vector<double>& fitness);

// The CSV column set produced per agent per generation.
extern const char* const kMetricsHeader;
std::string metrics_row(const GenerationStats& g, std::size_t agent);

struct TrainResult {
  std::unique_ptr<PopulationState> state;
  std::vector<GenerationStats> history;
  std::filesystem::path metrics_path;   // empty when no out_dir was given
};

// Full run: repeats generations while total_step < max_steps. With a
// non-empty out_dir it writes metrics.csv (one row per agent per
// generation), checkpoints under gen_<g>/ at every eval_interval crossing
// and at the end, and a run manifest (written atomically at start and
// finalized at the end).
TrainResult train(const TrainerConfig& cfg, const std::filesystem::path& out_dir = {},
                  std::size_t parallel_eval = 0);

// Checkpoint I/O. A checkpoint directory holds agent_<m>.snap, critic.snap,
// archive/, and manifest.json.
void save_checkpoint(const std::filesystem::path& dir, const PopulationState& s);

struct Checkpoint {
  TrainerConfig cfg;             // reconstructed shape fields (env id, dims)
  std::vector<policy::NfPolicy> agents;
  sac::Critic critic;
  sac::ValueNet value;
  sac::ValueNet value_target;
  archive::Archive archive{1};
  std::vector<double> fitness;
  std::vector<std::size_t> elites;
  std::size_t generation = 0;
  std::size_t total_step = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Hex FNV-1a 64 over the byte image of the listed tensors, in order.
std::string param_hash(const std::vector<const numerics::Tensor*>& params);

// Short toolchain-style version string embedded in manifests.
std::string version_string();

// Atomic file write: temp file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// ISO-8601 UTC wall-clock timestamp.
std::string utc_timestamp();

}  // namespace arac::trainer
