#include "arac/policy.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "arac/error.hpp"
#include "arac/serialize.hpp"
#include "json.hpp"

namespace arac::policy {

namespace {

constexpr double kLogSigmaLo = -5.0;
constexpr double kLogSigmaHi = 1.0;
constexpr double kLogTwoPi = 1.8378770664093454836;  // ln(2*pi)

double soft_clamp(double x) {
  return kLogSigmaLo + (kLogSigmaHi - kLogSigmaLo) * 0.5 * (std::tanh(x) + 1.0);
}

void check_state(const NfPolicy& p, const Vec& state) {
  if (state.size() != p.state_dim())
    throw ContractViolation("policy: state has dimension " + std::to_string(state.size()) +
                            ", expected " + std::to_string(p.state_dim()));
  for (double v : state)
    if (!std::isfinite(v)) throw DomainError("policy: non-finite state");
}

}  // namespace

NfPolicy NfPolicy::make(std::size_t state_dim, std::size_t action_dim, std::size_t hidden,
                        std::size_t n_flows, SigmaMode mode, double sigma, Rng& rng) {
  if (mode == SigmaMode::Fixed && !(sigma > 0.0))
    throw ContractViolation("policy: fixed noise scale must be positive");
  NfPolicy p;
  p.sigma_mode = mode;
  p.sigma = sigma;
  std::vector<std::size_t> dims;
  if (hidden == 0)
    dims = {state_dim, action_dim};
  else
    dims = {state_dim, hidden, action_dim};
  p.mean_net = Mlp::make(dims, rng);
  if (mode == SigmaMode::Learned) p.log_sigma_net = Mlp::make(dims, rng);
  p.chain = FlowChain::make(action_dim, n_flows, rng);
  return p;
}

std::vector<Tensor*> NfPolicy::params() {
  std::vector<Tensor*> out = embedding_params();
  for (Tensor* t : flow_params()) out.push_back(t);
  return out;
}

std::vector<const Tensor*> NfPolicy::params() const {
  std::vector<const Tensor*> out;
  for (const Tensor* t : mean_net.params()) out.push_back(t);
  if (sigma_mode == SigmaMode::Learned)
    for (const Tensor* t : log_sigma_net.params()) out.push_back(t);
  for (const Tensor* t : static_cast<const FlowChain&>(chain).params()) out.push_back(t);
  return out;
}

std::vector<Tensor*> NfPolicy::embedding_params() {
  std::vector<Tensor*> out = mean_net.params();
  if (sigma_mode == SigmaMode::Learned)
    for (Tensor* t : log_sigma_net.params()) out.push_back(t);
  return out;
}

std::vector<Tensor*> NfPolicy::flow_params() { return chain.params(); }

Vec NfPolicy::sigma_at(const Vec& state) const {
  const std::size_t d = action_dim();
  if (sigma_mode == SigmaMode::Fixed) return Vec(d, sigma);
  Vec raw = log_sigma_net.forward(state);
  Vec out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = std::exp(soft_clamp(raw[i]));
  return out;
}

SampleResult sample(const NfPolicy& p, const Vec& state, Rng& rng) {
  Vec a0(p.action_dim());
  for (double& x : a0) x = rng.normal();
  return sample_with_noise(p, state, a0);
}

SampleResult sample_with_noise(const NfPolicy& p, const Vec& state, const Vec& a0) {
  check_state(p, state);
  const std::size_t d = p.action_dim();
  if (a0.size() != d) throw ContractViolation("policy: base noise has wrong dimension");
  const Vec mu = p.mean_net.forward(state);
  const Vec sig = p.sigma_at(state);
  Vec z(d);
  double base_lp = -0.5 * static_cast<double>(d) * kLogTwoPi;
  for (std::size_t i = 0; i < d; ++i) {
    z[i] = a0[i] * sig[i] + mu[i];
    base_lp += -0.5 * a0[i] * a0[i] - std::log(sig[i]);
  }
  flows::FlowValue f = flows::chain_forward(p.chain, z);
  return {f.y, base_lp - f.logdet};
}

double log_prob(const NfPolicy& p, const Vec& state, const Vec& action) {
  check_state(p, state);
  const std::size_t d = p.action_dim();
  if (action.size() != d) throw ContractViolation("policy: action has wrong dimension");
  flows::FlowInverse inv = flows::chain_inverse(p.chain, action);
  const Vec mu = p.mean_net.forward(state);
  const Vec sig = p.sigma_at(state);
  double lp = -0.5 * static_cast<double>(d) * kLogTwoPi + inv.logdet_inv;
  for (std::size_t i = 0; i < d; ++i) {
    const double a0 = (inv.z[i] - mu[i]) / sig[i];
    lp += -0.5 * a0 * a0 - std::log(sig[i]);
  }
  return lp;
}

Vec deterministic_action(const NfPolicy& p, const Vec& state) {
  check_state(p, state);
  return flows::chain_forward(p.chain, p.mean_net.forward(state)).y;
}

namespace {

// Shared tape-path pieces. soft_clamp on tape: lo + (hi-lo)*(tanh(x)+1)/2.
Var soft_clamp_var(Tape& t, Var x) {
  using namespace numerics;
  Var half = t.scalar(0.5 * (kLogSigmaHi - kLogSigmaLo));
  Var one = t.scalar(1.0);
  Var lo = t.scalar(kLogSigmaLo);
  return add(lo, mul(half, add(numerics::tanh(x), one)));
}

struct EmbeddingBatch {
  Var mu;         // (B x d)
  Var log_sigma;  // (B x d) when learned; invalid when fixed
  bool learned;
};

EmbeddingBatch embed(Tape& t, const NfPolicy& p, Var states, Bind bind) {
  EmbeddingBatch e;
  e.mu = p.mean_net.forward(t, states, bind);
  e.learned = p.sigma_mode == SigmaMode::Learned;
  if (e.learned) e.log_sigma = soft_clamp_var(t, p.log_sigma_net.forward(t, states, bind));
  return e;
}

}  // namespace

PolicyBatch sample_batch(Tape& t, const NfPolicy& p, const Tensor& states, const Tensor& noise,
                         Bind bind, bool block_embedding) {
  using namespace numerics;
  const std::size_t d = p.action_dim();
  if (states.rank() != 2 || states.cols() != p.state_dim())
    throw ContractViolation("policy: states batch must be (B x state_dim)");
  if (noise.rank() != 2 || noise.rows() != states.rows() || noise.cols() != d)
    throw ContractViolation("policy: noise batch must be (B x action_dim)");
  const std::size_t B = states.rows();

  Var sv = t.constant(states);
  Var nv = t.constant(noise);
  EmbeddingBatch e = embed(t, p, sv, bind);

  // Base log-density per row: -d/2 ln(2pi) - 1/2 sum a0^2 - sum ln sigma.
  Tensor base_const({B});
  for (std::size_t i = 0; i < B; ++i) {
    double s = -0.5 * static_cast<double>(d) * kLogTwoPi;
    for (std::size_t j = 0; j < d; ++j) s += -0.5 * noise.at(i, j) * noise.at(i, j);
    base_const[i] = s;
  }

  Var z;
  Var base_lp;
  if (e.learned) {
    Var sig = numerics::exp(e.log_sigma);
    z = add(e.mu, mul(nv, sig));
    base_lp = sub(t.constant(base_const), sum_rows(e.log_sigma));
  } else {
    z = add(e.mu, mul(nv, t.scalar(p.sigma)));
    Tensor base = base_const;
    for (std::size_t i = 0; i < B; ++i) base[i] -= static_cast<double>(d) * std::log(p.sigma);
    base_lp = t.constant(base);
  }

  if (block_embedding) {
    z = stop_gradient(z);
    base_lp = stop_gradient(base_lp);
  }

  flows::FlowBatch fb = flows::chain_forward(t, p.chain, z, bind);
  return {fb.y, sub(base_lp, fb.logdet)};
}

Var log_prob_batch(Tape& t, const NfPolicy& p, const Tensor& states, Var actions, Bind bind) {
  using namespace numerics;
  const std::size_t d = p.action_dim();
  if (states.rank() != 2 || states.cols() != p.state_dim())
    throw ContractViolation("policy: states batch must be (B x state_dim)");
  const Tensor& av = t.value(actions);
  if (av.rank() != 2 || av.rows() != states.rows() || av.cols() != d)
    throw ContractViolation("policy: actions batch must be (B x action_dim)");
  const std::size_t B = states.rows();

  flows::FlowBatchInverse ib = flows::chain_inverse(t, p.chain, actions, bind);
  Var sv = t.constant(states);
  EmbeddingBatch e = embed(t, p, sv, bind);

  Var a0;
  Var log_sigma_rows;  // (B): sum of ln sigma per row
  if (e.learned) {
    Var sig = numerics::exp(e.log_sigma);
    a0 = div(sub(ib.z, e.mu), sig);
    log_sigma_rows = sum_rows(e.log_sigma);
  } else {
    a0 = mul(sub(ib.z, e.mu), t.scalar(1.0 / p.sigma));
    log_sigma_rows = t.constant(Tensor::full({B}, static_cast<double>(d) * std::log(p.sigma)));
  }

  Var quad = mul(t.scalar(-0.5), sum_rows(square(a0)));
  Var base = t.constant(Tensor::full({B}, -0.5 * static_cast<double>(d) * kLogTwoPi));
  return add(sub(add(base, quad), log_sigma_rows), ib.logdet_inv);
}

namespace {

using nlohmann::json;
using serialize::mlp_from_json;
using serialize::mlp_to_json;

}  // namespace

void save_policy(std::ostream& out, const NfPolicy& p) {
  json j;
  j["kind"] = "nf_policy";
  j["sigma_mode"] = p.sigma_mode == SigmaMode::Fixed ? "fixed" : "learned";
  j["sigma"] = p.sigma;
  j["mean_net"] = mlp_to_json(p.mean_net);
  if (p.sigma_mode == SigmaMode::Learned) j["log_sigma_net"] = mlp_to_json(p.log_sigma_net);
  json chain;
  chain["dim"] = p.chain.dim;
  json layers = json::array();
  for (const flows::RadialLayer& l : p.chain.layers) {
    json lj;
    lj["alpha_raw"] = l.alpha_raw.value();
    lj["beta_raw"] = l.beta_raw.value();
    lj["z0"] = l.z0.raw();
    layers.push_back(lj);
  }
  chain["layers"] = layers;
  j["chain"] = chain;
  out << j.dump(2) << "\n";
}

NfPolicy load_policy(std::istream& in) {
  json j = json::parse(in);
  if (j.value("kind", "") != "nf_policy")
    throw ContractViolation("policy load: unrecognized blob kind");
  NfPolicy p;
  const std::string mode = j.at("sigma_mode").get<std::string>();
  if (mode == "fixed")
    p.sigma_mode = SigmaMode::Fixed;
  else if (mode == "learned")
    p.sigma_mode = SigmaMode::Learned;
  else
    throw ContractViolation("policy load: unknown sigma mode '" + mode + "'");
  p.sigma = j.at("sigma").get<double>();
  p.mean_net = mlp_from_json(j.at("mean_net"));
  if (p.sigma_mode == SigmaMode::Learned) p.log_sigma_net = mlp_from_json(j.at("log_sigma_net"));
  const json& chain = j.at("chain");
  p.chain.dim = chain.at("dim").get<std::size_t>();
  for (const json& lj : chain.at("layers")) {
    flows::RadialLayer l;
    l.alpha_raw = Tensor::scalar(lj.at("alpha_raw").get<double>());
    l.beta_raw = Tensor::scalar(lj.at("beta_raw").get<double>());
    l.z0 = Tensor::vec(lj.at("z0").get<std::vector<double>>());
    if (l.z0.numel() != p.chain.dim) throw ContractViolation("policy load: layer dim mismatch");
    p.chain.layers.push_back(std::move(l));
  }
  if (p.mean_net.out_dim() != p.chain.dim)
    throw ContractViolation("policy load: mean net and chain dims disagree");
  return p;
}

}  // namespace arac::policy
