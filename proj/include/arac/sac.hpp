#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "arac/mlp.hpp"
#include "arac/policy.hpp"
#include "arac/rng.hpp"
#include "arac/tape.hpp"
#include "arac/tensor.hpp"

namespace arac::sac {

using flows::Vec;
using numerics::Bind;
using numerics::Mlp;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

struct Transition {
  Vec s;
  Vec a;
  double r = 0.0;
  Vec s_next;
  bool done = false;
};

// Fixed-capacity ring of transitions with strictly FIFO eviction and uniform
// minibatch sampling without replacement within a batch.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return full_ ? data_.size() : next_; }
  std::size_t capacity() const { return data_.size(); }

  // k distinct uniformly chosen transitions. Pre: 1 <= k <= size().
  std::vector<Transition> sample(std::size_t k, Rng& rng) const;

  // Raw slot access for inspection; 0 <= i < size().
  const Transition& slot(std::size_t i) const;

 private:
  std::vector<Transition> data_;
  std::size_t next_ = 0;
  bool full_ = false;
};

// Action-value net Q(s, a): one fully connected net over the concatenated
// state-action vector.
struct Critic {
  Mlp q;  // (s + d) -> 1

  static Critic make(std::size_t state_dim, std::size_t action_dim, std::size_t hidden,
                     Rng& rng);

  double value(const Vec& s, const Vec& a) const;
  // states (B x s) as a graph node, actions (B x d) on the tape; result (B).
  Var batch(Tape& t, Var states, Var actions, Bind bind) const;
};

// State-value net V(s) with the same conventions.
struct ValueNet {
  Mlp v;  // s -> 1

  static ValueNet make(std::size_t state_dim, std::size_t hidden, Rng& rng);

  double value(const Vec& s) const;
  Var batch(Tape& t, Var states, Bind bind) const;  // (B)
};

// Actor loss: mean over the batch of [alpha * log pi(a|s) - Q(s, a)] with one
// fresh reparameterized action per state (noise supplied by the caller so the
// loss is deterministic). The critic is bound frozen: gradients reach policy
// parameters only, via the sampled actions and their density.
Var policy_loss_sac(Tape& t, const policy::NfPolicy& pol, const Critic& critic,
                    const Tensor& states, const Tensor& noise, double alpha);

// Same loss against an arbitrary action-value function on the tape.
using QFn = std::function<Var(Tape&, const Tensor& states, Var actions)>;
Var policy_loss_with(Tape& t, const policy::NfPolicy& pol, const QFn& q_fn,
                     const Tensor& states, const Tensor& noise, double alpha);

// Critic loss: mean of {Q(s,a) - [r + gamma * (1 - done) * V_target(s')]}^2.
// The target is computed off-tape, so it carries no gradient.
Var critic_loss(Tape& t, const Critic& critic, const ValueNet& v_target,
                const std::vector<Transition>& batch, double gamma);

// Value loss: 1/2 * mean of {V(s) - [Q(s, a~pi) - alpha * log pi(a|s)]}^2 with
// a one-sample estimate of the inner expectation, computed off-tape.
Var value_loss(Tape& t, const ValueNet& value, const policy::NfPolicy& pol,
               const Critic& critic, const Tensor& states, const Tensor& noise, double alpha);

// Adam over a fixed parameter list. A step with any non-finite gradient is
// skipped entirely and reported by the return value (and the error log).
class Adam {
 public:
  explicit Adam(std::vector<Tensor*> params, double lr = 3e-4, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  // Reads each parameter's gradient from the tape (after backward) and
  // applies one update. Returns false if the step was skipped.
  bool step(Tape& t);
  bool step_grads(const std::vector<Tensor>& grads);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  double lr_, b1_, b2_, eps_;
  long steps_ = 0;
};

// target <- (1 - tau) * target + tau * src, elementwise. Pre: 0 < tau <= 1.
void polyak_update(std::vector<Tensor*> target, const std::vector<const Tensor*>& src,
                   double tau);
void polyak_update(Mlp& target, const Mlp& src, double tau);

// Batch helpers: stack transition fields into row-major matrices.
Tensor states_of(const std::vector<Transition>& batch);
Tensor actions_of(const std::vector<Transition>& batch);

// Critic bundle persistence (Q, V, and the slow target copy) as one JSON blob.
void save_critic_bundle(std::ostream& out, const Critic& critic, const ValueNet& value,
                        const ValueNet& v_target);
void load_critic_bundle(std::istream& in, Critic& critic, ValueNet& value, ValueNet& v_target);

}  // namespace arac::sac
