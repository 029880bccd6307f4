#pragma once

// Small deterministic environments for desk-scale experiments: two Gaussian
// bandits and a pair of 2-D point-mass navigation tasks whose reward
// structure lures greedy learners away from the actual objective.

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "arac/rng.hpp"

namespace arac::envs {

using arac::Rng;
using Vec = std::vector<double>;

// Static description of an environment's interface.
struct EnvSpec {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  Vec action_low;   // per-dimension lower bounds, size action_dim
  Vec action_high;  // per-dimension upper bounds, size action_dim
  std::size_t max_episode_length = 0;
};

struct StepResult {
  Vec state;
  double reward = 0.0;
  bool done = false;
};

// Episodic environment. Dynamics are deterministic given the action
// sequence; any randomness enters only through reset(rng). Actions are
// clipped to the spec's bounds before they touch the dynamics, so
// out-of-range actions behave exactly like their clipped versions.
class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpec& spec() const = 0;

  // Starts a new episode and returns the initial state.
  virtual Vec reset(Rng& rng) = 0;

  // Advances one step. Throws ContractViolation if called before reset or
  // after the episode has ended, or if the action has the wrong dimension.
  virtual StepResult step(const Vec& action) = 0;

  // True iff the episode that just ended (or is running) has met the task's
  // success condition. Tasks without one report false.
  virtual bool solved() const { return false; }
};

// One-step bandit on [-6,6]^2 with two Gaussian reward bumps: a wide-basin
// decoy worth 0.8 at (-1,-1) and the true optimum worth 1.0 at (4,4).
// reward(a) = 0.8*exp(-|a-(-1,-1)|^2/0.5) + 1.0*exp(-|a-(4,4)|^2/0.5).
// State is the constant {0}.
std::unique_ptr<Env> deceptive_bandit_2d();

// One-step bandit on [-2,2] with reward(a) = 1 - (a - 0.5)^2. State is the
// constant {0}. Handy as a fast smoke-test target with a known optimum.
std::unique_ptr<Env> quadratic_bandit_1d();

// 2-D point mass on [-10,10]^2. Start (-8,0), trap (0,0), goal (8,0).
// Actions are velocities in [-1,1]^2 added to the position (position is then
// clamped to the square). State is [pos, goal - pos] (4-dim).
// reward = -0.01*|pos - goal| + 0.5*exp(-|pos - trap|^2), 200 steps.
// The trap term pays far more than reaching the goal ever can, so
// reward-greedy behaviour parks on the trap; solved() instead requires the
// final position to be within distance 1 of the goal.
std::unique_ptr<Env> point_mass_deceptive();

// Same point mass and geometry, but reward = 1 iff |pos - goal| < 1 (else 0)
// and the episode ends immediately on success. solved() mirrors the reward.
std::unique_ptr<Env> point_mass_sparse();

// Factory by string id. Valid ids: "deceptive_bandit2d",
// "point_mass_deceptive", "point_mass_sparse", "quadratic_bandit1d".
// Unknown ids throw ContractViolation listing the valid ones.
std::unique_ptr<Env> make_env(const std::string& id);

}  // namespace arac::envs
