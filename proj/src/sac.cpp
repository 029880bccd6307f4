#include "arac/sac.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "arac/error.hpp"
#include "arac/logging.hpp"
#include "arac/serialize.hpp"
#include "json.hpp"

namespace arac::sac {

using policy::NfPolicy;

ReplayBuffer::ReplayBuffer(std::size_t capacity) {
  if (capacity == 0) throw ContractViolation("replay buffer: capacity must be positive");
  data_.resize(capacity);
}

void ReplayBuffer::push(Transition t) {
  data_[next_] = std::move(t);
  next_ += 1;
  if (next_ == data_.size()) {
    next_ = 0;
    full_ = true;
  }
}

const Transition& ReplayBuffer::slot(std::size_t i) const {
  if (i >= size()) throw ContractViolation("replay buffer: slot index out of range");
  return data_[i];
}

std::vector<Transition> ReplayBuffer::sample(std::size_t k, Rng& rng) const {
  const std::size_t n = size();
  if (k == 0 || k > n)
    throw ContractViolation("replay buffer: batch size " + std::to_string(k) +
                            " not in [1, " + std::to_string(n) + "]");
  // Floyd's algorithm: k distinct indices, uniform over subsets.
  std::unordered_set<std::size_t> chosen;
  std::vector<Transition> out;
  out.reserve(k);
  for (std::size_t j = n - k; j < n; ++j) {
    std::size_t t = rng.uniform_index(j + 1);
    if (!chosen.insert(t).second) {
      chosen.insert(j);
      out.push_back(data_[j]);
    } else {
      out.push_back(data_[t]);
    }
  }
  return out;
}

Critic Critic::make(std::size_t state_dim, std::size_t action_dim, std::size_t hidden,
                    Rng& rng) {
  Critic c;
  std::vector<std::size_t> dims;
  if (hidden == 0)
    dims = {state_dim + action_dim, 1};
  else
    dims = {state_dim + action_dim, hidden, 1};
  c.q = Mlp::make(dims, rng);
  return c;
}

double Critic::value(const Vec& s, const Vec& a) const {
  Vec sa = s;
  sa.insert(sa.end(), a.begin(), a.end());
  return q.forward(sa)[0];
}

Var Critic::batch(Tape& t, Var states, Var actions, Bind bind) const {
  using namespace numerics;
  Var sa = concat_cols(states, actions);
  Var out = q.forward(t, sa, bind);  // (B x 1)
  const std::size_t B = t.value(out).rows();
  return reshape(out, {B});
}

ValueNet ValueNet::make(std::size_t state_dim, std::size_t hidden, Rng& rng) {
  ValueNet n;
  std::vector<std::size_t> dims;
  if (hidden == 0)
    dims = {state_dim, 1};
  else
    dims = {state_dim, hidden, 1};
  n.v = Mlp::make(dims, rng);
  return n;
}

double ValueNet::value(const Vec& s) const { return v.forward(s)[0]; }

Var ValueNet::batch(Tape& t, Var states, Bind bind) const {
  using namespace numerics;
  Var out = v.forward(t, states, bind);
  const std::size_t B = t.value(out).rows();
  return reshape(out, {B});
}

Var policy_loss_with(Tape& t, const NfPolicy& pol, const QFn& q_fn, const Tensor& states,
                     const Tensor& noise, double alpha) {
  using namespace numerics;
  if (states.rank() != 2 || states.rows() == 0)
    throw ContractViolation("policy loss: state batch must be nonempty");
  policy::PolicyBatch pb = policy::sample_batch(t, pol, states, noise, Bind::Train);
  Var q = q_fn(t, states, pb.actions);
  return mean(sub(mul(t.scalar(alpha), pb.log_prob), q));
}

Var policy_loss_sac(Tape& t, const NfPolicy& pol, const Critic& critic, const Tensor& states,
                    const Tensor& noise, double alpha) {
  QFn q_fn = [&critic](Tape& tp, const Tensor& s, Var actions) {
    return critic.batch(tp, tp.constant(s), actions, Bind::Frozen);
  };
  return policy_loss_with(t, pol, q_fn, states, noise, alpha);
}

Var critic_loss(Tape& t, const Critic& critic, const ValueNet& v_target,
                const std::vector<Transition>& batch, double gamma) {
  using namespace numerics;
  if (batch.empty()) throw ContractViolation("critic loss: batch must be nonempty");
  const std::size_t B = batch.size();
  Tensor targets({B});
  for (std::size_t i = 0; i < B; ++i) {
    const Transition& tr = batch[i];
    double tgt = tr.r;
    if (!tr.done) tgt += gamma * v_target.value(tr.s_next);
    targets[i] = tgt;
  }
  Var q = critic.batch(t, t.constant(states_of(batch)), t.constant(actions_of(batch)),
                       Bind::Train);
  return mean(square(sub(q, t.constant(targets))));
}

Var value_loss(Tape& t, const ValueNet& value, const NfPolicy& pol, const Critic& critic,
               const Tensor& states, const Tensor& noise, double alpha) {
  using namespace numerics;
  if (states.rank() != 2 || states.rows() == 0)
    throw ContractViolation("value loss: state batch must be nonempty");
  const std::size_t B = states.rows();
  const std::size_t d = pol.action_dim();
  if (noise.rank() != 2 || noise.rows() != B || noise.cols() != d)
    throw ContractViolation("value loss: noise batch must be (B x action_dim)");

  // One-sample target per state, computed off-tape so it carries no gradient.
  Tensor targets({B});
  for (std::size_t i = 0; i < B; ++i) {
    Vec s(states.raw().begin() + static_cast<long>(i * states.cols()),
          states.raw().begin() + static_cast<long>((i + 1) * states.cols()));
    Vec a0(noise.raw().begin() + static_cast<long>(i * d),
           noise.raw().begin() + static_cast<long>((i + 1) * d));
    policy::SampleResult r = policy::sample_with_noise(pol, s, a0);
    targets[i] = critic.value(s, r.action) - alpha * r.log_prob;
  }
  Var vb = value.batch(t, t.constant(states), Bind::Train);
  return mul(t.scalar(0.5), mean(square(sub(vb, t.constant(targets)))));
}

Adam::Adam(std::vector<Tensor*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  if (params_.empty()) throw ContractViolation("adam: empty parameter list");
  for (Tensor* p : params_) {
    m_.push_back(Tensor(p->shape()));
    v_.push_back(Tensor(p->shape()));
  }
}

bool Adam::step(Tape& t) {
  std::vector<Tensor> grads;
  grads.reserve(params_.size());
  for (Tensor* p : params_) grads.push_back(t.grad_of(*p));
  return step_grads(grads);
}

bool Adam::step_grads(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size())
    throw ContractViolation("adam: gradient list size mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(*params_[i]))
      throw ContractViolation("adam: gradient shape mismatch");
    if (!grads[i].all_finite()) {
      log::error("adam: non-finite gradient, step %ld skipped", steps_ + 1);
      return false;
    }
  }
  steps_ += 1;
  const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < p.numel(); ++k) {
      m_[i][k] = b1_ * m_[i][k] + (1.0 - b1_) * g[k];
      v_[i][k] = b2_ * v_[i][k] + (1.0 - b2_) * g[k] * g[k];
      const double mhat = m_[i][k] / bc1;
      const double vhat = v_[i][k] / bc2;
      p[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
  return true;
}

void polyak_update(std::vector<Tensor*> target, const std::vector<const Tensor*>& src,
                   double tau) {
  if (!(tau > 0.0) || tau > 1.0)
    throw ContractViolation("polyak: tau must be in (0, 1]");
  if (target.size() != src.size())
    throw ContractViolation("polyak: parameter list size mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    Tensor& t = *target[i];
    const Tensor& s = *src[i];
    if (!t.same_shape(s)) throw ContractViolation("polyak: parameter shape mismatch");
    for (std::size_t k = 0; k < t.numel(); ++k) t[k] = (1.0 - tau) * t[k] + tau * s[k];
  }
}

void polyak_update(Mlp& target, const Mlp& src, double tau) {
  std::vector<const Tensor*> sp;
  for (const Tensor* p : static_cast<const Mlp&>(src).params()) sp.push_back(p);
  polyak_update(target.params(), sp, tau);
}

Tensor states_of(const std::vector<Transition>& batch) {
  if (batch.empty()) throw ContractViolation("states_of: empty batch");
  const std::size_t B = batch.size();
  const std::size_t s = batch[0].s.size();
  Tensor out({B, s});
  for (std::size_t i = 0; i < B; ++i) {
    if (batch[i].s.size() != s) throw ContractViolation("states_of: ragged batch");
    for (std::size_t j = 0; j < s; ++j) out.at(i, j) = batch[i].s[j];
  }
  return out;
}

Tensor actions_of(const std::vector<Transition>& batch) {
  if (batch.empty()) throw ContractViolation("actions_of: empty batch");
  const std::size_t B = batch.size();
  const std::size_t d = batch[0].a.size();
  Tensor out({B, d});
  for (std::size_t i = 0; i < B; ++i) {
    if (batch[i].a.size() != d) throw ContractViolation("actions_of: ragged batch");
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = batch[i].a[j];
  }
  return out;
}

void save_critic_bundle(std::ostream& out, const Critic& critic, const ValueNet& value,
                        const ValueNet& v_target) {
  nlohmann::json j;
  j["kind"] = "critic_bundle";
  j["q"] = serialize::mlp_to_json(critic.q);
  j["v"] = serialize::mlp_to_json(value.v);
  j["v_target"] = serialize::mlp_to_json(v_target.v);
  out << j.dump(2) << "\n";
}

void load_critic_bundle(std::istream& in, Critic& critic, ValueNet& value, ValueNet& v_target) {
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("kind", "") != "critic_bundle")
    throw ContractViolation("critic load: unrecognized blob kind");
  critic.q = serialize::mlp_from_json(j.at("q"));
  value.v = serialize::mlp_from_json(j.at("v"));
  v_target.v = serialize::mlp_from_json(j.at("v_target"));
}

}  // namespace arac::sac
