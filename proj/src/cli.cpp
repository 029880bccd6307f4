#include "arac/cli.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "arac/ar.hpp"
#include "arac/didactic.hpp"
#include "arac/envs.hpp"
#include "arac/error.hpp"
#include "arac/logging.hpp"
#include "arac/policy.hpp"
#include "arac/trainer.hpp"
#include "json.hpp"

namespace arac::cli {

namespace {

using nlohmann::json;
using trainer::TrainerConfig;
using Vec = std::vector<double>;

constexpr std::uint64_t kTagEvalCmd = 0xE7A1;
constexpr std::uint64_t kTagProbe = 0xAB00;
constexpr std::uint64_t kTagActions = 0xAB05;
constexpr std::uint64_t kTagPairKl = 0xAB06;

constexpr std::size_t kActionSamplesPerState = 500;
constexpr std::size_t kAblationKlSamples = 200;
constexpr std::size_t kProbeStates = 2;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace

std::vector<double> parse_lambda_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a == std::string::npos) {
      throw ContractViolation("empty entry in --lambdas list '" + csv + "'");
    }
    item = item.substr(a, b - a + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ContractViolation("invalid --lambdas entry '" + item + "'");
    }
    if (used != item.size() || !std::isfinite(v) || v < 0.0) {
      throw ContractViolation("invalid --lambdas entry '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) {
    throw ContractViolation("--lambdas needs at least one value");
  }
  return out;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out_dir, std::size_t parallel_eval) {
  TrainerConfig cfg;
  try {
    cfg = trainer::load_config_file(config_path);
    if (seed.has_value()) cfg.seed = *seed;
  } catch (const std::exception& ex) {
    log::error("config: %s", ex.what());
    return kExitConfig;
  }
  try {
    trainer::train(cfg, out_dir, parallel_eval);
  } catch (const std::exception& ex) {
    log::error("train: %s", ex.what());
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_dir, std::size_t episodes, std::uint64_t seed,
             std::ostream& out) {
  try {
    trainer::Checkpoint ck = trainer::load_checkpoint(checkpoint_dir);
    const std::size_t rollouts = episodes > 0 ? episodes : ck.cfg.R;
    auto env = envs::make_env(ck.cfg.env);
    out << "agent_id,mean_fitness,std_fitness\n";
    for (std::size_t m = 0; m < ck.agents.size(); ++m) {
      Rng rng = Rng::derive(seed, {kTagEvalCmd, m});
      double sum = 0.0;
      double sum_sq = 0.0;
      for (std::size_t r = 0; r < rollouts; ++r) {
        const double f =
            trainer::rollout(ck.agents[m], *env, false, 1, rng, nullptr).avg_fitness;
        sum += f;
        sum_sq += f * f;
      }
      const double mean = sum / static_cast<double>(rollouts);
      const double var = std::max(0.0, sum_sq / static_cast<double>(rollouts) - mean * mean);
      out << m << ',' << fmt_double(mean) << ',' << fmt_double(std::sqrt(var)) << '\n';
    }
    return kExitOk;
  } catch (const std::exception& ex) {
    log::error("eval: %s", ex.what());
    return kExitRuntime;
  }
}

int cmd_didactic(std::size_t flows, std::size_t steps, const std::string& out_path,
                 std::uint64_t seed, std::size_t grid_n) {
  try {
    envs::DidacticConfig cfg;
    cfg.n_flows = flows;
    cfg.steps = steps;
    cfg.grid_n = grid_n;
    cfg.seed = seed;
    cfg.log_interval = std::max<std::size_t>(1, steps / 4);
    envs::DidacticResult res = envs::run_didactic(cfg);

    json j;
    j["flows"] = flows;
    j["steps"] = steps;
    j["seed"] = seed;
    j["grid"]["resolution"] = cfg.grid_n;
    j["grid"]["half_extent"] = cfg.grid_half_extent;
    j["grid"]["min"] = -cfg.grid_half_extent;
    j["grid"]["max"] = cfg.grid_half_extent;
    j["target_mu"] = cfg.target_mu;
    j["repulsive_mu"] = cfg.repulsive_mu;
    j["snapshots"] = json::array();
    for (const envs::DidacticSnapshot& snap : res.history) {
      json s;
      s["step"] = snap.step;
      s["beta"] = snap.beta;
      s["kl_to_target"] = snap.kl_to_target;
      s["kl_to_repulsive"] = snap.kl_to_repulsive;
      json rows = json::array();
      for (std::size_t r = 0; r < snap.log_density.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < snap.log_density.cols(); ++c) {
          row.push_back(std::exp(snap.log_density.at(r, c)));
        }
        rows.push_back(std::move(row));
      }
      s["density"] = std::move(rows);
      j["snapshots"].push_back(std::move(s));
    }
    j["final"]["kl_to_target"] = res.history.back().kl_to_target;
    j["final"]["kl_to_repulsive"] = res.history.back().kl_to_repulsive;
    trainer::write_file_atomic(out_path, j.dump() + "\n");
    return kExitOk;
  } catch (const std::exception& ex) {
    log::error("didactic: %s", ex.what());
    return kExitRuntime;
  }
}

int cmd_ablate_lambda(const std::string& config_path, const std::string& lambdas_csv,
                      std::optional<std::uint64_t> seed, const std::string& out_dir,
                      std::size_t parallel_eval, std::ostream& out) {
  TrainerConfig base;
  std::vector<double> lambdas;
  try {
    base = trainer::load_config_file(config_path);
    if (seed.has_value()) base.seed = *seed;
    lambdas = parse_lambda_list(lambdas_csv);
  } catch (const std::exception& ex) {
    log::error("config: %s", ex.what());
    return kExitConfig;
  }

  try {
    std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);

    // Probe states shared by every weight: the first states visited by a
    // fixed-seed rollout of the (weight-independent) initial population.
    std::vector<Vec> probes;
    {
      auto env = envs::make_env(base.env);
      auto init_pop = trainer::PopulationState::init(base);
      Rng rng = Rng::derive(base.seed, {kTagProbe});
      Vec s = env->reset(rng);
      probes.push_back(s);
      while (probes.size() < kProbeStates) {
        envs::StepResult step = env->step(policy::sample(init_pop->agents[0], s, rng).action);
        probes.push_back(step.state);
        if (step.done) {
          s = env->reset(rng);
        } else {
          s = step.state;
        }
      }
    }

    const std::size_t action_dim = envs::make_env(base.env)->spec().action_dim;
    std::ofstream actions(dir / "actions.csv", std::ios::trunc);
    if (!actions.good()) {
      throw std::runtime_error("cannot open '" + (dir / "actions.csv").string() + "'");
    }
    actions << "lambda,state_id,agent_id";
    for (std::size_t k = 1; k <= action_dim; ++k) actions << ",a" << k;
    actions << "\n";

    json summary;
    summary["kind"] = "arac_lambda_ablation";
    summary["config"] = trainer::config_to_json(base);
    summary["lambdas"] = lambdas;
    summary["probe_states"] = probes;
    summary["action_samples_per_state"] = kActionSamplesPerState;
    summary["results"] = json::array();

    out << "lambda,mean_pairwise_kl,init_param_hash\n";
    for (double lambda : lambdas) {
      TrainerConfig cfg = base;
      cfg.lambda_ar = lambda;
      trainer::TrainResult res = trainer::train(cfg, {}, parallel_eval);
      const std::uint64_t lam_bits = std::bit_cast<std::uint64_t>(lambda);

      for (std::size_t st = 0; st < probes.size(); ++st) {
        for (std::size_t m = 0; m < cfg.M; ++m) {
          Rng rng = Rng::derive(cfg.seed, {kTagActions, lam_bits, st, m});
          for (std::size_t k = 0; k < kActionSamplesPerState; ++k) {
            Vec a = policy::sample(res.state->agents[m], probes[st], rng).action;
            actions << fmt_double(lambda) << ',' << st << ',' << m;
            for (double x : a) actions << ',' << fmt_double(x);
            actions << '\n';
          }
        }
      }

      // Mean MC divergence over ordered agent pairs at the probe states.
      double kl_sum = 0.0;
      std::size_t pairs = 0;
      Rng kl_rng = Rng::derive(cfg.seed, {kTagPairKl, lam_bits});
      for (std::size_t i = 0; i < cfg.M; ++i) {
        for (std::size_t jdx = 0; jdx < cfg.M; ++jdx) {
          if (i == jdx) continue;
          kl_sum += ar::kl_mc(res.state->agents[i], res.state->agents[jdx], probes,
                              kAblationKlSamples, kl_rng)
                        .mean;
          ++pairs;
        }
      }
      const double mean_kl = pairs > 0 ? kl_sum / static_cast<double>(pairs) : 0.0;

      json row;
      row["lambda"] = lambda;
      row["mean_pairwise_kl"] = mean_kl;
      row["init_param_hash"] = res.state->init_param_hash;
      row["final_fitness"] = res.state->fitness;
      summary["results"].push_back(std::move(row));
      out << fmt_double(lambda) << ',' << fmt_double(mean_kl) << ','
          << res.state->init_param_hash << '\n';
      out.flush();
    }

    actions.flush();
    if (!actions.good()) {
      throw std::runtime_error("write to '" + (dir / "actions.csv").string() + "' failed");
    }
    actions.close();
    trainer::write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
    return kExitOk;
  } catch (const std::exception& ex) {
    log::error("ablate-lambda: %s", ex.what());
    return kExitRuntime;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out) {
  CLI::App app{"Population soft actor-critic with flow policies and a niched archive"};
  app.require_subcommand(1);

  auto* t = app.add_subcommand("train", "Train a population from a JSON config");
  std::string t_config;
  std::string t_out_dir;
  std::optional<std::uint64_t> t_seed;
  std::size_t t_par = 0;
  t->add_option("--config", t_config, "JSON config path")->required();
  t->add_option("--out-dir", t_out_dir, "Directory for metrics, checkpoints, manifest")
      ->required();
  t->add_option("--seed", t_seed, "Override the config's seed");
  t->add_option("--parallel-eval", t_par, "Evaluation worker threads (0 = serial)");

  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint directory");
  std::string e_dir;
  std::size_t e_episodes = 0;
  std::uint64_t e_seed = 0;
  e->add_option("checkpoint_dir", e_dir, "Checkpoint directory (gen_<g>)")->required();
  e->add_option("--episodes", e_episodes, "Noise-free rollouts per agent (0 = config's R)");
  e->add_option("--seed", e_seed, "Environment reset stream seed");

  auto* d = app.add_subcommand("didactic",
                               "Two-mode single-state attraction-repulsion experiment");
  std::size_t d_flows = 3;
  std::size_t d_steps = 800;
  std::size_t d_grid = 121;
  std::uint64_t d_seed = 0;
  std::string d_out;
  d->add_option("--flows", d_flows, "Radial layers in the trained policy");
  d->add_option("--steps", d_steps, "Optimization steps");
  d->add_option("--out", d_out, "Output JSON path")->required();
  d->add_option("--seed", d_seed, "Training seed");
  d->add_option("--grid-n", d_grid, "Density grid resolution per side");

  auto* a = app.add_subcommand("ablate-lambda",
                               "Train one population per repulsion weight and compare spread");
  std::string a_config;
  std::string a_lambdas = "0,0.5,1";
  std::string a_out_dir;
  std::optional<std::uint64_t> a_seed;
  std::size_t a_par = 0;
  a->add_option("--config", a_config, "JSON config path")->required();
  a->add_option("--lambdas", a_lambdas, "Comma-separated repulsion weights");
  a->add_option("--out-dir", a_out_dir, "Directory for actions.csv and summary.json")
      ->required();
  a->add_option("--seed", a_seed, "Override the config's seed");
  a->add_option("--parallel-eval", a_par, "Evaluation worker threads (0 = serial)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  if (t->parsed()) return cmd_train(t_config, t_seed, t_out_dir, t_par);
  if (e->parsed()) return cmd_eval(e_dir, e_episodes, e_seed, out);
  if (d->parsed()) {
    if (d_steps < 1) {
      log::error("--steps must be at least 1");
      return kExitConfig;
    }
    if (d_grid < 2) {
      log::error("--grid-n must be at least 2");
      return kExitConfig;
    }
    return cmd_didactic(d_flows, d_steps, d_out, d_seed, d_grid);
  }
  if (a->parsed()) {
    return cmd_ablate_lambda(a_config, a_lambdas, a_seed, a_out_dir, a_par, out);
  }
  return kExitConfig;
}

}  // namespace arac::cli
