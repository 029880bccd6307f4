#include "arac/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

#include "arac/error.hpp"
#include "arac/logging.hpp"
#include "arac/serialize.hpp"

namespace arac::trainer {

namespace fs = std::filesystem;
using nlohmann::json;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;
using sac::Transition;

namespace {

// Fixed tags for derived random streams. Exploration, evaluation, and
// diagnostics get per-(generation, agent) streams so parallel evaluation
// reproduces the serial results exactly.
constexpr std::uint64_t kTagInit = 0xA1;
constexpr std::uint64_t kTagElites = 0xA2;
constexpr std::uint64_t kTagTrain = 0xA3;
constexpr std::uint64_t kTagExplore = 0xA4;
constexpr std::uint64_t kTagEval = 0xA5;
constexpr std::uint64_t kTagDiag = 0xA6;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ContractViolation(msg);
}

std::size_t get_count(const json& j, const char* key) {
  const json& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer()) {
    long long x = v.get<long long>();
    require(x >= 0, std::string("config field '") + key + "' must be a non-negative integer");
    return static_cast<std::size_t>(x);
  }
  throw ContractViolation(std::string("config field '") + key + "' must be an integer");
}

double get_number(const json& j, const char* key) {
  const json& v = j.at(key);
  require(v.is_number(), std::string("config field '") + key + "' must be a number");
  return v.get<double>();
}

std::string get_string(const json& j, const char* key) {
  const json& v = j.at(key);
  require(v.is_string(), std::string("config field '") + key + "' must be a string");
  return v.get<std::string>();
}

bool get_bool(const json& j, const char* key) {
  const json& v = j.at(key);
  require(v.is_boolean(), std::string("config field '") + key + "' must be a boolean");
  return v.get<bool>();
}

// Fields a config file must spell out; the rest fall back to defaults.
const char* const kRequiredFields[] = {
    "M",  "K",     "G",          "n",          "R",  "p",   "alpha",     "gamma",
    "strategy", "flows", "sigma_mode", "batch_size", "buffer_capacity",
    "lr", "tau",   "max_steps",  "eval_interval", "seed",
};

const char* const kOptionalFields[] = {
    "env",   "sigma", "lambda_ar", "n_kl_samples", "proactive_signed",
    "eval_writes_buffer", "hidden", "kl_probe_states",
};

std::vector<Transition> rollout_collect(const policy::NfPolicy& pi, Env& env, bool with_noise,
                                        std::size_t episodes, Rng& rng, double* total_reward,
                                        std::size_t* total_steps) {
  std::vector<Transition> out;
  for (std::size_t e = 0; e < episodes; ++e) {
    Vec s = env.reset(rng);
    bool done = false;
    while (!done) {
      Vec a = with_noise ? policy::sample(pi, s, rng).action : policy::deterministic_action(pi, s);
      envs::StepResult r = env.step(a);
      *total_reward += r.reward;
      ++*total_steps;
      out.push_back(Transition{s, a, r.reward, r.state, r.done});
      s = std::move(r.state);
      done = r.done;
    }
  }
  return out;
}

std::vector<const Tensor*> freeze_params(std::vector<Tensor*> ps) {
  return std::vector<const Tensor*>(ps.begin(), ps.end());
}

}  // namespace

void TrainerConfig::validate() const {
  require(M >= 1, "config field 'M' must be >= 1");
  require(K >= 1 && K <= M, "config field 'K' must satisfy 1 <= K <= M");
  require(G >= 1, "config field 'G' must be >= 1");
  require(n >= 1, "config field 'n' must be >= 1");
  require(R >= 1, "config field 'R' must be >= 1");
  require(std::isfinite(p) && p > 0.0, "config field 'p' must be a positive number");
  require(std::isfinite(alpha) && alpha >= 0.0, "config field 'alpha' must be >= 0");
  require(std::isfinite(gamma) && gamma > 0.0 && gamma <= 1.0,
          "config field 'gamma' must lie in (0, 1]");
  require(strategy == "proactive" || strategy == "reactive",
          "config field 'strategy' must be \"proactive\" or \"reactive\"");
  require(std::isfinite(lambda_ar) && lambda_ar >= 0.0, "config field 'lambda_ar' must be >= 0");
  require(n_kl_samples >= 1, "config field 'n_kl_samples' must be >= 1");
  require(sigma_mode == "fixed" || sigma_mode == "learned",
          "config field 'sigma_mode' must be \"fixed\" or \"learned\"");
  if (sigma_mode == "fixed") {
    require(std::isfinite(sigma) && sigma > 0.0,
            "config field 'sigma' must be positive with the fixed noise mode");
  }
  require(batch_size >= 1, "config field 'batch_size' must be >= 1");
  require(buffer_capacity >= 1, "config field 'buffer_capacity' must be >= 1");
  require(std::isfinite(lr) && lr > 0.0, "config field 'lr' must be positive");
  require(std::isfinite(tau) && tau > 0.0 && tau <= 1.0,
          "config field 'tau' must lie in (0, 1]");
  require(kl_probe_states >= 1, "config field 'kl_probe_states' must be >= 1");
  envs::make_env(env);  // unknown ids throw with the id in the message
}

ar::ArStrategy TrainerConfig::ar_strategy() const {
  ar::ArStrategy s;
  s.kind = (strategy == "reactive") ? ar::StrategyKind::Reactive : ar::StrategyKind::Proactive;
  s.lambda_ar = lambda_ar;
  s.n_kl_samples = n_kl_samples;
  s.n_archive_samples = n;
  s.proactive_signed = proactive_signed;
  return s;
}

policy::SigmaMode TrainerConfig::parsed_sigma_mode() const {
  return sigma_mode == "learned" ? policy::SigmaMode::Learned : policy::SigmaMode::Fixed;
}

TrainerConfig config_from_json(const json& j) {
  require(j.is_object(), "config root must be a JSON object");
  std::set<std::string> known;
  for (const char* k : kRequiredFields) known.insert(k);
  for (const char* k : kOptionalFields) known.insert(k);
  for (auto it = j.begin(); it != j.end(); ++it) {
    require(known.count(it.key()) != 0, "unknown config field '" + it.key() + "'");
  }
  for (const char* k : kRequiredFields) {
    require(j.contains(k), std::string("missing required config field '") + k + "'");
  }

  TrainerConfig c;
  c.M = get_count(j, "M");
  c.K = get_count(j, "K");
  c.G = get_count(j, "G");
  c.n = get_count(j, "n");
  c.R = get_count(j, "R");
  c.p = get_number(j, "p");
  c.alpha = get_number(j, "alpha");
  c.gamma = get_number(j, "gamma");
  c.strategy = get_string(j, "strategy");
  c.flows = get_count(j, "flows");
  c.sigma_mode = get_string(j, "sigma_mode");
  c.batch_size = get_count(j, "batch_size");
  c.buffer_capacity = get_count(j, "buffer_capacity");
  c.lr = get_number(j, "lr");
  c.tau = get_number(j, "tau");
  c.max_steps = get_count(j, "max_steps");
  c.eval_interval = get_count(j, "eval_interval");
  c.seed = j.at("seed").is_number_unsigned() ? j.at("seed").get<std::uint64_t>()
                                             : static_cast<std::uint64_t>(get_count(j, "seed"));
  if (j.contains("env")) c.env = get_string(j, "env");
  if (j.contains("sigma")) c.sigma = get_number(j, "sigma");
  if (j.contains("lambda_ar")) c.lambda_ar = get_number(j, "lambda_ar");
  if (j.contains("n_kl_samples")) c.n_kl_samples = get_count(j, "n_kl_samples");
  if (j.contains("proactive_signed")) c.proactive_signed = get_bool(j, "proactive_signed");
  if (j.contains("eval_writes_buffer")) c.eval_writes_buffer = get_bool(j, "eval_writes_buffer");
  if (j.contains("hidden")) c.hidden = get_count(j, "hidden");
  if (j.contains("kl_probe_states")) c.kl_probe_states = get_count(j, "kl_probe_states");
  c.validate();
  return c;
}

json config_to_json(const TrainerConfig& cfg) {
  json j;
  j["M"] = cfg.M;
  j["K"] = cfg.K;
  j["G"] = cfg.G;
  j["n"] = cfg.n;
  j["R"] = cfg.R;
  j["p"] = cfg.p;
  j["alpha"] = cfg.alpha;
  j["gamma"] = cfg.gamma;
  j["strategy"] = cfg.strategy;
  j["flows"] = cfg.flows;
  j["sigma_mode"] = cfg.sigma_mode;
  j["batch_size"] = cfg.batch_size;
  j["buffer_capacity"] = cfg.buffer_capacity;
  j["lr"] = cfg.lr;
  j["tau"] = cfg.tau;
  j["max_steps"] = cfg.max_steps;
  j["eval_interval"] = cfg.eval_interval;
  j["seed"] = cfg.seed;
  j["env"] = cfg.env;
  j["sigma"] = cfg.sigma;
  j["lambda_ar"] = cfg.lambda_ar;
  j["n_kl_samples"] = cfg.n_kl_samples;
  j["proactive_signed"] = cfg.proactive_signed;
  j["eval_writes_buffer"] = cfg.eval_writes_buffer;
  j["hidden"] = cfg.hidden;
  j["kl_probe_states"] = cfg.kl_probe_states;
  return j;
}

TrainerConfig load_config_file(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ContractViolation("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

PopulationState::PopulationState(const TrainerConfig& c, std::unique_ptr<Env> e)
    : cfg(c), env(std::move(e)), buffer(c.buffer_capacity), archive(c.G) {}

bool PopulationState::is_elite(std::size_t agent) const {
  return std::find(elites.begin(), elites.end(), agent) != elites.end();
}

std::unique_ptr<PopulationState> PopulationState::init(const TrainerConfig& cfg) {
  cfg.validate();
  std::unique_ptr<PopulationState> s(new PopulationState(cfg, envs::make_env(cfg.env)));
  const envs::EnvSpec spec = s->env->spec();

  Rng rng = Rng::derive(cfg.seed, {kTagInit});
  s->agents.reserve(cfg.M);
  for (std::size_t m = 0; m < cfg.M; ++m) {
    s->agents.push_back(policy::NfPolicy::make(spec.state_dim, spec.action_dim, cfg.hidden,
                                               cfg.flows, cfg.parsed_sigma_mode(), cfg.sigma,
                                               rng));
  }
  s->critic = sac::Critic::make(spec.state_dim, spec.action_dim, cfg.hidden, rng);
  s->value = sac::ValueNet::make(spec.state_dim, cfg.hidden, rng);
  s->value_target = s->value;
  s->fitness.assign(cfg.M, 0.0);

  // Initial elite set: K distinct agents drawn uniformly.
  Rng rng_elites = Rng::derive(cfg.seed, {kTagElites});
  std::vector<std::size_t> order(cfg.M);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < cfg.K; ++i) {
    std::size_t j = i + rng_elites.uniform_index(cfg.M - i);
    std::swap(order[i], order[j]);
  }
  s->elites.assign(order.begin(), order.begin() + cfg.K);

  std::vector<const Tensor*> all_params;
  for (const policy::NfPolicy& a : s->agents) {
    for (const Tensor* p : a.params()) all_params.push_back(p);
  }
  for (const Tensor* p : freeze_params(s->critic.q.params())) all_params.push_back(p);
  for (const Tensor* p : freeze_params(s->value.v.params())) all_params.push_back(p);
  s->init_param_hash = param_hash(all_params);

  s->opt_critic = std::make_unique<sac::Adam>(s->critic.q.params(), cfg.lr);
  s->opt_value = std::make_unique<sac::Adam>(s->value.v.params(), cfg.lr);
  s->opt_actor.reserve(cfg.M);
  for (std::size_t m = 0; m < cfg.M; ++m) {
    s->opt_actor.push_back(std::make_unique<sac::Adam>(s->agents[m].params(), cfg.lr));
  }
  return s;
}

RolloutResult rollout(const policy::NfPolicy& pi, Env& env, bool with_noise,
                      std::size_t episodes, Rng& rng, sac::ReplayBuffer* buffer) {
  require(episodes >= 1, "rollout requires episodes >= 1");
  double total = 0.0;
  std::size_t steps = 0;
  std::vector<Transition> collected =
      rollout_collect(pi, env, with_noise, episodes, rng, &total, &steps);
  if (buffer != nullptr) {
    for (Transition& t : collected) buffer->push(std::move(t));
  }
  return RolloutResult{total / static_cast<double>(episodes), steps};
}

GenerationStats run_generation(PopulationState& s, std::size_t parallel_eval) {
  const TrainerConfig& cfg = s.cfg;
  const envs::EnvSpec spec = s.env->spec();
  const std::size_t d = spec.action_dim;
  const std::size_t gen = s.generation;

  GenerationStats out;
  out.generation = gen;
  out.agents.resize(cfg.M);

  // (a) One noisy exploration episode per agent; only these steps count
  // against the run budget.
  std::size_t step = 0;
  for (std::size_t m = 0; m < cfg.M; ++m) {
    Rng rng = Rng::derive(cfg.seed, {kTagExplore, gen, m});
    RolloutResult r = rollout(s.agents[m], *s.env, true, 1, rng, &s.buffer);
    out.agents[m].exploration_steps = r.steps;
    step += r.steps;
  }
  s.total_step += step;
  out.step = step;
  out.total_step = s.total_step;

  Rng train_rng = Rng::derive(cfg.seed, {kTagTrain, gen});
  const ar::ArStrategy strat = cfg.ar_strategy();

  // (b) Critic phase: step/K minibatches per elite. Each update refreshes the
  // critic, then the value net (fresh actions from that elite), then the slow
  // target copy.
  const std::size_t critic_updates = step / cfg.K;
  out.critic_updates = critic_updates;
  double critic_loss_sum = 0.0;
  double value_loss_sum = 0.0;
  std::size_t critic_done = 0;
  for (std::size_t e : s.elites) {
    for (std::size_t u = 0; u < critic_updates && s.buffer.size() > 0; ++u) {
      const std::size_t b = std::min(cfg.batch_size, s.buffer.size());
      std::vector<Transition> batch = s.buffer.sample(b, train_rng);
      {
        Tape t;
        Var loss = sac::critic_loss(t, s.critic, s.value_target, batch, cfg.gamma);
        t.backward(loss);
        if (!s.opt_critic->step(t)) {
          log::error("skipped critic update (generation %zu, elite %zu)", gen, e);
        }
        critic_loss_sum += t.value(loss).value();
      }
      {
        Tensor states = sac::states_of(batch);
        Tensor noise = Tensor::randn({b, d}, train_rng);
        Tape t;
        Var loss = sac::value_loss(t, s.value, s.agents[e], s.critic, states, noise, cfg.alpha);
        t.backward(loss);
        if (!s.opt_value->step(t)) {
          log::error("skipped value update (generation %zu, elite %zu)", gen, e);
        }
        value_loss_sum += t.value(loss).value();
      }
      sac::polyak_update(s.value_target.v, s.value.v, cfg.tau);
      ++critic_done;
    }
  }
  out.critic_loss = critic_done > 0 ? critic_loss_sum / static_cast<double>(critic_done) : 0.0;
  out.value_loss = critic_done > 0 ? value_loss_sum / static_cast<double>(critic_done) : 0.0;

  // (c) Actor phase: floor((step / M) * p) minibatches per agent, at least one
  // whenever any exploration happened. Elites feel the archive; the rest get
  // the plain actor loss and must never touch the archive.
  std::size_t actor_updates =
      static_cast<std::size_t>(std::floor(static_cast<double>(step) / static_cast<double>(cfg.M) * cfg.p));
  if (step >= 1 && actor_updates == 0) actor_updates = 1;
  for (std::size_t m = 0; m < cfg.M; ++m) {
    AgentGenStats& ag = out.agents[m];
    const bool elite = s.is_elite(m);
    double loss_sum = 0.0;
    for (std::size_t u = 0; u < actor_updates && s.buffer.size() > 0; ++u) {
      const std::size_t b = std::min(cfg.batch_size, s.buffer.size());
      std::vector<Transition> batch = s.buffer.sample(b, train_rng);
      Tensor states = sac::states_of(batch);
      Tensor noise = Tensor::randn({b, d}, train_rng);
      Tape t;
      Var loss;
      if (elite) {
        std::vector<archive::Candidate> draw = s.archive.sample(cfg.n, train_rng);
        std::vector<ar::ArchiveDraw> sample;
        sample.reserve(draw.size());
        for (const archive::Candidate& c : draw) {
          sample.push_back(ar::ArchiveDraw{c.pi, c.fitness});
        }
        ag.archive_draws += sample.size();
        loss = ar::combined_policy_loss(t, s.agents[m], s.critic, states, noise, cfg.alpha,
                                        sample, strat, train_rng);
      } else {
        loss = sac::policy_loss_sac(t, s.agents[m], s.critic, states, noise, cfg.alpha);
      }
      t.backward(loss);
      if (!s.opt_actor[m]->step(t)) {
        log::error("skipped actor update (generation %zu, agent %zu)", gen, m);
      }
      loss_sum += t.value(loss).value();
      ++ag.actor_updates;
    }
    ag.policy_loss = ag.actor_updates > 0 ? loss_sum / static_cast<double>(ag.actor_updates) : 0.0;
  }

  // (d) Evaluation: R noise-free rollouts per agent. Evaluation steps do not
  // count against the budget; transitions enter the buffer (in agent order)
  // unless the deviation flag disables it.
  std::vector<double> eval_fitness(cfg.M, 0.0);
  std::vector<std::vector<Transition>> eval_transitions(cfg.M);
  const std::size_t workers = std::max<std::size_t>(1, std::min(parallel_eval, cfg.M));
  auto eval_agent = [&](std::size_t m, Env& env) {
    Rng rng = Rng::derive(cfg.seed, {kTagEval, gen, m});
    double total = 0.0;
    std::size_t steps = 0;
    eval_transitions[m] =
        rollout_collect(s.agents[m], env, false, cfg.R, rng, &total, &steps);
    eval_fitness[m] = total / static_cast<double>(cfg.R);
  };
  if (workers <= 1) {
    for (std::size_t m = 0; m < cfg.M; ++m) eval_agent(m, *s.env);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        std::unique_ptr<Env> env = envs::make_env(cfg.env);
        for (std::size_t m = w; m < cfg.M; m += workers) eval_agent(m, *env);
      });
    }
    for (std::thread& th : pool) th.join();
  }
  for (std::size_t m = 0; m < cfg.M; ++m) {
    if (cfg.eval_writes_buffer) {
      for (Transition& tr : eval_transitions[m]) s.buffer.push(std::move(tr));
    }
    s.fitness[m] = eval_fitness[m];
    out.agents[m].fitness = eval_fitness[m];
  }

  // Diagnostic: mean KL from each agent to the archived policies it was
  // repelled from this generation, over probe states drawn from the buffer.
  if (s.archive.size() > 0 && s.buffer.size() > 0) {
    Rng diag_rng = Rng::derive(cfg.seed, {kTagDiag, gen});
    std::vector<Vec> probes;
    probes.reserve(cfg.kl_probe_states);
    for (std::size_t i = 0; i < cfg.kl_probe_states; ++i) {
      probes.push_back(s.buffer.slot(diag_rng.uniform_index(s.buffer.size())).s);
    }
    for (std::size_t m = 0; m < cfg.M; ++m) {
      double kl_sum = 0.0;
      for (std::size_t i = 0; i < s.archive.size(); ++i) {
        kl_sum += ar::kl_mc(s.agents[m], s.archive.entry(i).snapshot.get(), probes,
                            cfg.n_kl_samples, diag_rng)
                      .mean;
      }
      out.agents[m].mean_kl_to_archive = kl_sum / static_cast<double>(s.archive.size());
    }
  }

  // (e) Rank by fitness, ties to the lower agent index; new top-K.
  std::vector<std::size_t> order = rank_by_fitness(s.fitness);
  s.elites.assign(order.begin(), order.begin() + cfg.K);
  for (std::size_t e : s.elites) out.agents[e].is_elite = true;

  // (f) Offer the whole population to the archive.
  std::vector<archive::Candidate> candidates;
  candidates.reserve(cfg.M);
  for (std::size_t m = 0; m < cfg.M; ++m) {
    candidates.push_back(archive::Candidate{&s.agents[m], s.fitness[m]});
  }
  s.archive.update(candidates, train_rng);

  s.generation += 1;
  return out;
}

std::vector<std::size_t> rank_by_fitness(const std::vector<double>& fitness) {
  std::vector<std::size_t> order(fitness.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (fitness[a] != fitness[b]) return fitness[a] > fitness[b];
    return a < b;
  });
  return order;
}

const char* const kMetricsHeader =
    "generation,total_step,agent_id,fitness,is_elite,mean_kl_to_archive,critic_loss,policy_loss";

std::string metrics_row(const GenerationStats& g, std::size_t agent) {
  const AgentGenStats& a = g.agents.at(agent);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%zu,%zu,%.17g,%d,%.17g,%.17g,%.17g", g.generation,
                g.total_step, agent, a.fitness, a.is_elite ? 1 : 0, a.mean_kl_to_archive,
                g.critic_loss, a.policy_loss);
  return std::string(buf);
}

std::string param_hash(const std::vector<const Tensor*>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64 offset basis
  for (const Tensor* t : params) {
    for (std::size_t i = 0; i < t->numel(); ++i) {
      double v = t->data()[i];
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string version_string() { return "arac-0.1.0"; }

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), "cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    require(out.good(), "write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

void save_checkpoint(const fs::path& dir, const PopulationState& s) {
  fs::create_directories(dir);
  for (std::size_t m = 0; m < s.agents.size(); ++m) {
    std::ostringstream blob;
    policy::save_policy(blob, s.agents[m]);
    write_file_atomic(dir / ("agent_" + std::to_string(m) + ".snap"), blob.str());
  }
  {
    std::ostringstream blob;
    sac::save_critic_bundle(blob, s.critic, s.value, s.value_target);
    write_file_atomic(dir / "critic.snap", blob.str());
  }
  s.archive.save(dir / "archive");
  json manifest;
  manifest["kind"] = "arac_checkpoint";
  manifest["generation"] = s.generation;
  manifest["total_step"] = s.total_step;
  manifest["fitness"] = s.fitness;
  manifest["elites"] = s.elites;
  manifest["config"] = config_to_json(s.cfg);
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  require(mf.good(), "cannot open checkpoint manifest '" + (dir / "manifest.json").string() + "'");
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw ContractViolation("checkpoint manifest '" + (dir / "manifest.json").string() +
                            "' is not valid JSON: " + e.what());
  }
  require(manifest.value("kind", "") == "arac_checkpoint",
          "'" + dir.string() + "' is not a checkpoint directory");

  Checkpoint ck;
  ck.cfg = config_from_json(manifest.at("config"));
  ck.generation = manifest.at("generation").get<std::size_t>();
  ck.total_step = manifest.at("total_step").get<std::size_t>();
  ck.fitness = manifest.at("fitness").get<std::vector<double>>();
  ck.elites = manifest.at("elites").get<std::vector<std::size_t>>();

  ck.agents.reserve(ck.cfg.M);
  for (std::size_t m = 0; m < ck.cfg.M; ++m) {
    fs::path p = dir / ("agent_" + std::to_string(m) + ".snap");
    std::ifstream in(p);
    require(in.good(), "cannot open checkpoint policy '" + p.string() + "'");
    ck.agents.push_back(policy::load_policy(in));
  }
  {
    std::ifstream in(dir / "critic.snap");
    require(in.good(), "cannot open checkpoint critic '" + (dir / "critic.snap").string() + "'");
    sac::load_critic_bundle(in, ck.critic, ck.value, ck.value_target);
  }
  ck.archive = archive::Archive::load(dir / "archive");
  return ck;
}

namespace {

json run_manifest_json(const TrainerConfig& cfg, const PopulationState& s,
                       const std::string& start_time, const std::string& end_time,
                       const fs::path& out_dir) {
  json m;
  m["kind"] = "arac_run";
  m["version"] = version_string();
  m["seed"] = cfg.seed;
  m["config"] = config_to_json(cfg);
  m["init_param_hash"] = s.init_param_hash;
  m["start_time"] = start_time;
  m["end_time"] = end_time;  // empty while the run is in flight
  m["outputs"]["metrics"] = "metrics.csv";
  m["outputs"]["checkpoints"] = "gen_<g>";
  m["out_dir"] = out_dir.string();
  return m;
}

}  // namespace

TrainResult train(const TrainerConfig& cfg, const fs::path& out_dir, std::size_t parallel_eval) {
  TrainResult result;
  result.state = PopulationState::init(cfg);
  PopulationState& s = *result.state;

  const bool with_artifacts = !out_dir.empty();
  const std::string start_time = utc_timestamp();
  std::ofstream metrics;
  if (with_artifacts) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    require(!ec, "cannot create output directory '" + out_dir.string() + "'");
    write_file_atomic(out_dir / "manifest.json",
                      run_manifest_json(cfg, s, start_time, "", out_dir).dump(2) + "\n");
    result.metrics_path = out_dir / "metrics.csv";
    metrics.open(result.metrics_path, std::ios::trunc);
    require(metrics.good(), "cannot open metrics file '" + result.metrics_path.string() + "'");
    metrics << kMetricsHeader << "\n";
    metrics.flush();
  }

  std::size_t next_checkpoint = cfg.eval_interval;
  std::size_t last_checkpoint_gen = static_cast<std::size_t>(-1);
  while (s.total_step < cfg.max_steps) {
    GenerationStats g = run_generation(s, parallel_eval);
    if (with_artifacts) {
      for (std::size_t m = 0; m < cfg.M; ++m) metrics << metrics_row(g, m) << "\n";
      metrics.flush();
      if (cfg.eval_interval > 0 && s.total_step >= next_checkpoint) {
        save_checkpoint(out_dir / ("gen_" + std::to_string(s.generation)), s);
        last_checkpoint_gen = s.generation;
        next_checkpoint = (s.total_step / cfg.eval_interval + 1) * cfg.eval_interval;
      }
    }
    log::info("generation %zu done: total_step=%zu best_fitness=%.6g", g.generation,
              g.total_step, *std::max_element(s.fitness.begin(), s.fitness.end()));
    result.history.push_back(std::move(g));
  }

  if (with_artifacts) {
    if (last_checkpoint_gen != s.generation) {
      save_checkpoint(out_dir / ("gen_" + std::to_string(s.generation)), s);
    }
    write_file_atomic(out_dir / "manifest.json",
                      run_manifest_json(cfg, s, start_time, utc_timestamp(), out_dir).dump(2) +
                          "\n");
    metrics.close();
  }
  return result;
}

}  // namespace arac::trainer
