#include "arac/envs.hpp"

#include <algorithm>
#include <cmath>

#include "arac/error.hpp"

namespace arac::envs {
namespace {

using arac::ContractViolation;

void check_action(const EnvSpec& spec, const Vec& action) {
  if (action.size() != spec.action_dim) {
    throw ContractViolation("env step: action has dimension " +
                            std::to_string(action.size()) + ", expected " +
                            std::to_string(spec.action_dim));
  }
  for (double a : action) {
    if (!std::isfinite(a)) {
      throw ContractViolation("env step: action has a non-finite component");
    }
  }
}

Vec clip_action(const EnvSpec& spec, const Vec& action) {
  Vec out = action;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(out[i], spec.action_low[i], spec.action_high[i]);
  }
  return out;
}

double sq_dist(double ax, double ay, double bx, double by) {
  const double dx = ax - bx;
  const double dy = ay - by;
  return dx * dx + dy * dy;
}

// Shared plumbing for the one-step bandits: reset yields the constant state
// {0}; the single step scores the clipped action and ends the episode.
class BanditBase : public Env {
 public:
  const EnvSpec& spec() const override { return spec_; }

  Vec reset(Rng&) override {
    live_ = true;
    return {0.0};
  }

  StepResult step(const Vec& action) override {
    if (!live_) {
      throw ContractViolation(
          "env step: episode is not running (call reset first)");
    }
    check_action(spec_, action);
    live_ = false;
    return {{0.0}, score(clip_action(spec_, action)), true};
  }

 protected:
  virtual double score(const Vec& clipped) const = 0;

  EnvSpec spec_;
  bool live_ = false;
};

class DeceptiveBandit2d final : public BanditBase {
 public:
  DeceptiveBandit2d() {
    spec_.state_dim = 1;
    spec_.action_dim = 2;
    spec_.action_low = {-6.0, -6.0};
    spec_.action_high = {6.0, 6.0};
    spec_.max_episode_length = 1;
  }

 private:
  double score(const Vec& a) const override {
    const double d_decoy = sq_dist(a[0], a[1], -1.0, -1.0);
    const double d_opt = sq_dist(a[0], a[1], 4.0, 4.0);
    return 0.8 * std::exp(-d_decoy / 0.5) + 1.0 * std::exp(-d_opt / 0.5);
  }
};

class QuadraticBandit1d final : public BanditBase {
 public:
  QuadraticBandit1d() {
    spec_.state_dim = 1;
    spec_.action_dim = 1;
    spec_.action_low = {-2.0};
    spec_.action_high = {2.0};
    spec_.max_episode_length = 1;
  }

 private:
  double score(const Vec& a) const override {
    const double d = a[0] - 0.5;
    return 1.0 - d * d;
  }
};

// 2-D point mass with velocity actions. The two variants share dynamics and
// differ only in the reward and termination rule.
class PointMassBase : public Env {
 public:
  PointMassBase() {
    spec_.state_dim = 4;
    spec_.action_dim = 2;
    spec_.action_low = {-1.0, -1.0};
    spec_.action_high = {1.0, 1.0};
    spec_.max_episode_length = 200;
  }

  const EnvSpec& spec() const override { return spec_; }

  Vec reset(Rng&) override {
    x_ = -8.0;
    y_ = 0.0;
    steps_ = 0;
    live_ = true;
    return observe();
  }

  StepResult step(const Vec& action) override {
    if (!live_) {
      throw ContractViolation(
          "env step: episode is not running (call reset first)");
    }
    check_action(spec_, action);
    const Vec v = clip_action(spec_, action);
    x_ = std::clamp(x_ + v[0], -10.0, 10.0);
    y_ = std::clamp(y_ + v[1], -10.0, 10.0);
    ++steps_;

    StepResult out;
    out.state = observe();
    out.reward = reward_at(dist_to_goal());
    out.done = steps_ >= spec_.max_episode_length || ends_early();
    live_ = !out.done;
    return out;
  }

  bool solved() const override { return dist_to_goal() < 1.0; }

 protected:
  virtual double reward_at(double dist_to_goal) const = 0;
  virtual bool ends_early() const { return false; }

  double dist_to_goal() const {
    return std::sqrt(sq_dist(x_, y_, kGoalX, kGoalY));
  }

  double dist_sq_to_trap() const { return sq_dist(x_, y_, 0.0, 0.0); }

  static constexpr double kGoalX = 8.0;
  static constexpr double kGoalY = 0.0;

  EnvSpec spec_;
  double x_ = -8.0;
  double y_ = 0.0;
  std::size_t steps_ = 0;
  bool live_ = false;

 private:
  Vec observe() const { return {x_, y_, kGoalX - x_, kGoalY - y_}; }
};

class PointMassDeceptive final : public PointMassBase {
 private:
  double reward_at(double dist_to_goal) const override {
    return -0.01 * dist_to_goal + 0.5 * std::exp(-dist_sq_to_trap());
  }
};

class PointMassSparse final : public PointMassBase {
 private:
  double reward_at(double dist_to_goal) const override {
    return dist_to_goal < 1.0 ? 1.0 : 0.0;
  }

  bool ends_early() const override { return dist_to_goal() < 1.0; }
};

}  // namespace

std::unique_ptr<Env> deceptive_bandit_2d() {
  return std::make_unique<DeceptiveBandit2d>();
}

std::unique_ptr<Env> quadratic_bandit_1d() {
  return std::make_unique<QuadraticBandit1d>();
}

std::unique_ptr<Env> point_mass_deceptive() {
  return std::make_unique<PointMassDeceptive>();
}

std::unique_ptr<Env> point_mass_sparse() {
  return std::make_unique<PointMassSparse>();
}

std::unique_ptr<Env> make_env(const std::string& id) {
  if (id == "deceptive_bandit2d") return deceptive_bandit_2d();
  if (id == "point_mass_deceptive") return point_mass_deceptive();
  if (id == "point_mass_sparse") return point_mass_sparse();
  if (id == "quadratic_bandit1d") return quadratic_bandit_1d();
  throw ContractViolation(
      "make_env: unknown environment id \"" + id +
      "\" (valid: deceptive_bandit2d, point_mass_deceptive, "
      "point_mass_sparse, quadratic_bandit1d)");
}

}  // namespace arac::envs
