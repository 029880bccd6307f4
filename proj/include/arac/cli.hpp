#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace arac::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Comma-separated list of repulsion weights, e.g. "0,0.5,1". Throws on empty
// or unparsable entries.
std::vector<double> parse_lambda_list(const std::string& csv);

// Train from a JSON config. seed, when present, overrides the config's seed.
// Config problems exit 2 with a field-level message; runtime faults exit 1.
int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out_dir, std::size_t parallel_eval);

// Evaluate a checkpoint directory: prints per-agent mean and standard
// deviation of fitness over `episodes` noise-free rollouts as CSV
// (agent_id,mean_fitness,std_fitness). episodes = 0 means the checkpoint
// config's R. Any failure (including a corrupt checkpoint) exits 1.
int cmd_eval(const std::string& checkpoint_dir, std::size_t episodes, std::uint64_t seed,
             std::ostream& out);

// Two-mode single-state experiment: writes a JSON document with the grid
// geometry, per-snapshot density arrays, and the final divergence estimates.
int cmd_didactic(std::size_t flows, std::size_t steps, const std::string& out_path,
                 std::uint64_t seed, std::size_t grid_n);

// Trains one population per repulsion weight, dumps 500 action samples per
// agent per probe state to <out_dir>/actions.csv, writes
// <out_dir>/summary.json, and prints one CSV row per weight
// (lambda,mean_pairwise_kl,init_param_hash) to `out`.
int cmd_ablate_lambda(const std::string& config_path, const std::string& lambdas_csv,
                      std::optional<std::uint64_t> seed, const std::string& out_dir,
                      std::size_t parallel_eval, std::ostream& out);

// Full argv dispatcher used by the binary. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out);

}  // namespace arac::cli
