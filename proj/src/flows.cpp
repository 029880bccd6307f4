#include "arac/flows.hpp"

#include <cmath>

#include "arac/error.hpp"

namespace arac::flows {

namespace {

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

void check_finite(const Vec& v, const char* op) {
  for (double x : v)
    if (!std::isfinite(x)) throw DomainError(std::string(op) + ": non-finite input");
}

double norm2(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// ln |det dy/dz| at radius r for effective parameters (a, b), dimension d:
//   (d-1) ln(1 + b/(a+r)) + ln(1 + a*b/(a+r)^2).
// Both log arguments are strictly positive for b > -a.
double logdet_at(double a, double b, double r, std::size_t d) {
  const double apr = a + r;
  return (static_cast<double>(d) - 1.0) * std::log1p(b / apr) + std::log1p(a * b / (apr * apr));
}

}  // namespace

double inverse_softplus(double y) {
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

RadialLayer RadialLayer::near_identity(std::size_t d, Rng& rng) {
  RadialLayer l;
  const double unit = inverse_softplus(1.0);
  l.alpha_raw = Tensor::scalar(unit + 0.01 * rng.normal());
  l.beta_raw = Tensor::scalar(unit + 0.01 * rng.normal());
  l.z0 = Tensor({d});
  for (std::size_t i = 0; i < d; ++i) l.z0[i] = 0.5 * rng.normal();
  return l;
}

double RadialLayer::alpha() const { return softplus(alpha_raw.value()); }

double RadialLayer::beta_hat() const { return -alpha() + softplus(beta_raw.value()); }

FlowChain FlowChain::make(std::size_t d, std::size_t n_layers, Rng& rng) {
  FlowChain c;
  c.dim = d;
  for (std::size_t i = 0; i < n_layers; ++i) c.layers.push_back(RadialLayer::near_identity(d, rng));
  return c;
}

std::vector<Tensor*> FlowChain::params() {
  std::vector<Tensor*> out;
  for (RadialLayer& l : layers) {
    out.push_back(&l.alpha_raw);
    out.push_back(&l.beta_raw);
    out.push_back(&l.z0);
  }
  return out;
}

std::vector<const Tensor*> FlowChain::params() const {
  std::vector<const Tensor*> out;
  for (const RadialLayer& l : layers) {
    out.push_back(&l.alpha_raw);
    out.push_back(&l.beta_raw);
    out.push_back(&l.z0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// value path
// ---------------------------------------------------------------------------

FlowValue forward(const RadialLayer& layer, const Vec& z) {
  if (z.size() != layer.dim()) throw ContractViolation("flow forward: dimension mismatch");
  check_finite(z, "flow forward");
  const std::size_t d = z.size();
  const double a = layer.alpha();
  const double b = layer.beta_hat();

  Vec diff(d);
  for (std::size_t i = 0; i < d; ++i) diff[i] = z[i] - layer.z0[i];
  const double r = norm2(diff);
  const double c = b / (a + r);

  FlowValue out;
  out.y.resize(d);
  for (std::size_t i = 0; i < d; ++i) out.y[i] = z[i] + c * diff[i];
  out.logdet = logdet_at(a, b, r, d);
  return out;
}

FlowInverse inverse(const RadialLayer& layer, const Vec& y) {
  if (y.size() != layer.dim()) throw ContractViolation("flow inverse: dimension mismatch");
  check_finite(y, "flow inverse");
  const std::size_t d = y.size();
  const double a = layer.alpha();
  const double b = layer.beta_hat();

  Vec diff(d);
  for (std::size_t i = 0; i < d; ++i) diff[i] = y[i] - layer.z0[i];
  const double R = norm2(diff);

  FlowInverse out;
  out.z.resize(d);
  if (R == 0.0) {
    // y = z0 is the image of z = z0.
    for (std::size_t i = 0; i < d; ++i) out.z[i] = layer.z0[i];
    out.logdet_inv = -logdet_at(a, b, 0.0, d);
    return out;
  }

  // r solves r^2 + r (a + b - R) - R a = 0; take the positive root with the
  // form that avoids cancellation on each sign of t0.
  const double t0 = a + b - R;
  const double root = std::sqrt(t0 * t0 + 4.0 * R * a);
  const double r = t0 > 0.0 ? (2.0 * R * a) / (root + t0) : 0.5 * (root - t0);

  const double ratio = r / R;
  for (std::size_t i = 0; i < d; ++i) out.z[i] = layer.z0[i] + ratio * diff[i];
  out.logdet_inv = -logdet_at(a, b, r, d);
  return out;
}

FlowValue chain_forward(const FlowChain& chain, const Vec& z) {
  if (z.size() != chain.dim) throw ContractViolation("chain forward: dimension mismatch");
  FlowValue out{z, 0.0};
  for (const RadialLayer& layer : chain.layers) {
    FlowValue step = forward(layer, out.y);
    out.y = std::move(step.y);
    out.logdet += step.logdet;
  }
  return out;
}

FlowInverse chain_inverse(const FlowChain& chain, const Vec& y) {
  if (y.size() != chain.dim) throw ContractViolation("chain inverse: dimension mismatch");
  FlowInverse out{y, 0.0};
  for (auto it = chain.layers.rbegin(); it != chain.layers.rend(); ++it) {
    FlowInverse step = inverse(*it, out.z);
    out.z = std::move(step.z);
    out.logdet_inv += step.logdet_inv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// tape path (batched)
// ---------------------------------------------------------------------------

namespace {

struct BoundLayer {
  Var a;   // rank-0, softplus(alpha_raw)
  Var b;   // rank-0, beta_hat
  Var z0;  // (d)
};

BoundLayer bind_layer(Tape& t, const RadialLayer& layer, Bind bind) {
  BoundLayer out;
  Var ar = numerics::bind_param(t, layer.alpha_raw, bind);
  Var br = numerics::bind_param(t, layer.beta_raw, bind);
  out.z0 = numerics::bind_param(t, layer.z0, bind);
  out.a = numerics::softplus(ar);
  out.b = numerics::sub(numerics::softplus(br), out.a);
  return out;
}

// (d-1) ln(1 + b/(a+r)) + ln(1 + a*b/(a+r)^2) for a batch of radii r (B).
Var logdet_from_r(Tape& t, const BoundLayer& L, Var r, std::size_t d) {
  using namespace numerics;
  Var apr = add(r, L.a);
  Var one = t.scalar(1.0);
  Var term1 = log(add(div(L.b, apr), one));
  Var term2 = log(add(div(mul(L.a, L.b), square(apr)), one));
  return add(mul(t.scalar(static_cast<double>(d) - 1.0), term1), term2);
}

}  // namespace

FlowBatch forward(Tape& t, const RadialLayer& layer, Var z, Bind bind) {
  using namespace numerics;
  const Tensor& zv = t.value(z);
  if (zv.rank() != 2 || zv.cols() != layer.dim())
    throw ContractViolation("flow forward: batch shape " + zv.shape_str() +
                            " does not match layer dim");
  const std::size_t d = layer.dim();
  BoundLayer L = bind_layer(t, layer, bind);
  Var diff = sub_rowvec(z, L.z0);
  Var r = rownorm(diff);
  Var c = div(L.b, add(r, L.a));  // (B)
  Var y = add(z, mul_colvec(diff, c));
  return {y, logdet_from_r(t, L, r, d)};
}

FlowBatchInverse inverse(Tape& t, const RadialLayer& layer, Var y, Bind bind) {
  using namespace numerics;
  const Tensor& yv = t.value(y);
  if (yv.rank() != 2 || yv.cols() != layer.dim())
    throw ContractViolation("flow inverse: batch shape " + yv.shape_str() +
                            " does not match layer dim");
  const std::size_t d = layer.dim();
  BoundLayer L = bind_layer(t, layer, bind);
  Var diff = sub_rowvec(y, L.z0);
  Var R = rownorm(diff);  // rows with R = 0 would divide by zero; the callers
                          // feed continuously distributed actions
  Var t0 = sub(add(L.a, L.b), R);
  Var disc = add(square(t0), mul(t.scalar(4.0), mul(R, L.a)));
  Var r = mul(t.scalar(0.5), sub(sqrt(disc), t0));
  Var ratio = div(r, R);
  Var z = add_rowvec(mul_colvec(diff, ratio), L.z0);
  return {z, neg(logdet_from_r(t, L, r, d))};
}

FlowBatch chain_forward(Tape& t, const FlowChain& chain, Var z, Bind bind) {
  using namespace numerics;
  const Tensor& zv = t.value(z);
  if (zv.rank() != 2 || zv.cols() != chain.dim)
    throw ContractViolation("chain forward: batch shape " + zv.shape_str() +
                            " does not match chain dim");
  FlowBatch out{z, t.constant(Tensor({zv.rows()}))};
  for (const RadialLayer& layer : chain.layers) {
    FlowBatch step = forward(t, layer, out.y, bind);
    out.y = step.y;
    out.logdet = add(out.logdet, step.logdet);
  }
  return out;
}

FlowBatchInverse chain_inverse(Tape& t, const FlowChain& chain, Var y, Bind bind) {
  using namespace numerics;
  const Tensor& yv = t.value(y);
  if (yv.rank() != 2 || yv.cols() != chain.dim)
    throw ContractViolation("chain inverse: batch shape " + yv.shape_str() +
                            " does not match chain dim");
  FlowBatchInverse out{y, t.constant(Tensor({yv.rows()}))};
  for (auto it = chain.layers.rbegin(); it != chain.layers.rend(); ++it) {
    FlowBatchInverse step = inverse(t, *it, out.z, bind);
    out.z = step.z;
    out.logdet_inv = add(out.logdet_inv, step.logdet_inv);
  }
  return out;
}

Var l1_penalty(Tape& t, const FlowChain& chain, Bind bind) {
  using namespace numerics;
  Var total = t.scalar(0.0);
  for (const RadialLayer& layer : chain.layers) {
    Var ar = bind_param(t, layer.alpha_raw, bind);
    Var br = bind_param(t, layer.beta_raw, bind);
    Var z0 = bind_param(t, layer.z0, bind);
    total = add(total, add(sum(abs(ar)), add(sum(abs(br)), sum(abs(z0)))));
  }
  return total;
}

}  // namespace arac::flows
