#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "arac/error.hpp"
#include "arac/flows.hpp"
#include "arac/grad_check.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace arac;
using namespace arac::flows;
namespace nm = arac::numerics;

namespace {

RadialLayer layer_from(double alpha, double beta_hat, Vec z0) {
  RadialLayer l;
  l.alpha_raw = nm::Tensor::scalar(inverse_softplus(alpha));
  l.beta_raw = nm::Tensor::scalar(inverse_softplus(beta_hat + alpha));
  l.z0 = nm::Tensor::vec(std::move(z0));
  return l;
}

RadialLayer random_layer(std::size_t d, Rng& rng) {
  RadialLayer l;
  l.alpha_raw = nm::Tensor::scalar(rng.uniform(-1.5, 1.5));
  l.beta_raw = nm::Tensor::scalar(rng.uniform(-2.0, 2.0));
  l.z0 = nm::Tensor({d});
  for (std::size_t i = 0; i < d; ++i) l.z0[i] = rng.uniform(-1.5, 1.5);
  return l;
}

FlowChain random_chain(std::size_t d, std::size_t n, Rng& rng) {
  FlowChain c;
  c.dim = d;
  for (std::size_t i = 0; i < n; ++i) c.layers.push_back(random_layer(d, rng));
  return c;
}

// Finite-difference Jacobian determinant of the value-path forward map.
double fd_jacobian_logdet(const FlowChain& chain, const Vec& z, double h = 1e-6) {
  const std::size_t d = z.size();
  std::vector<double> jac(d * d);
  for (std::size_t j = 0; j < d; ++j) {
    Vec zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    const Vec yp = chain_forward(chain, zp).y;
    const Vec ym = chain_forward(chain, zm).y;
    for (std::size_t i = 0; i < d; ++i) jac[i * d + j] = (yp[i] - ym[i]) / (2.0 * h);
  }
  return std::log(std::fabs(testutil::det_dense(jac, d)));
}

double fd_jacobian_logdet(const RadialLayer& layer, const Vec& z, double h = 1e-6) {
  FlowChain c;
  c.dim = layer.dim();
  c.layers.push_back(layer);
  return fd_jacobian_logdet(c, z, h);
}

double max_abs_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("zero contraction coefficient gives the identity map") {
  RadialLayer l = layer_from(1.0, 0.0, {0.3, -0.4});
  CHECK(l.beta_hat() == doctest::Approx(0.0).epsilon(1e-14));
  const Vec z = {1.2, -0.7};
  FlowValue f = forward(l, z);
  CHECK(f.y[0] == doctest::Approx(z[0]).epsilon(1e-15));
  CHECK(f.y[1] == doctest::Approx(z[1]).epsilon(1e-15));
  CHECK(std::fabs(f.logdet) <= 1e-14);

  FlowInverse inv = inverse(l, z);
  CHECK(max_abs_diff(inv.z, z) <= 1e-12);
}

TEST_CASE("the center is a fixed point with the closed-form log-determinant") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + rng.uniform_index(4);
    RadialLayer l = random_layer(d, rng);
    Vec z0(l.z0.raw());
    FlowValue f = forward(l, z0);
    CHECK(max_abs_diff(f.y, z0) <= 1e-14);
    const double expected = static_cast<double>(d) * std::log1p(l.beta_hat() / l.alpha());
    CHECK(f.logdet == doctest::Approx(expected).epsilon(1e-12));

    // Cross-check against the finite-difference Jacobian near the center.
    Vec nearby = z0;
    for (double& x : nearby) x += 1e-3 * rng.normal();
    CHECK(std::fabs(forward(l, nearby).logdet - fd_jacobian_logdet(l, nearby)) <= 1e-5);

    FlowInverse inv = inverse(l, z0);
    CHECK(max_abs_diff(inv.z, z0) <= 1e-14);
    CHECK(inv.logdet_inv == doctest::Approx(-expected).epsilon(1e-12));
  }
}

TEST_CASE("log-determinant matches the finite-difference Jacobian") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2;
    RadialLayer l = random_layer(d, rng);
    Vec z = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
    const double analytic = forward(l, z).logdet;
    CHECK(std::fabs(analytic - fd_jacobian_logdet(l, z)) <= 1e-5);
  }
}

TEST_CASE("chain log-determinant matches the finite-difference Jacobian") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    FlowChain c = random_chain(2, 3, rng);
    Vec z = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
    CHECK(std::fabs(chain_forward(c, z).logdet - fd_jacobian_logdet(c, z)) <= 1e-5);
  }
}

TEST_CASE("single-layer round trips are exact to 1e-9") {
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.uniform_index(6);
    RadialLayer l = random_layer(d, rng);
    Vec z(d);
    for (double& x : z) x = rng.uniform(-4.0, 4.0);

    FlowValue f = forward(l, z);
    FlowInverse back = inverse(l, f.y);
    CHECK(max_abs_diff(back.z, z) <= 1e-9);
    // Inverse log-determinant is the negated forward one at the preimage.
    CHECK(std::fabs(back.logdet_inv + f.logdet) <= 1e-9);

    Vec y(d);
    for (double& x : y) x = rng.uniform(-4.0, 4.0);
    FlowInverse inv = inverse(l, y);
    FlowValue fwd = forward(l, inv.z);
    CHECK(max_abs_diff(fwd.y, y) <= 1e-9);
  }
}

TEST_CASE("deep chain round trips stay within 1e-8 in dimension 6") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    FlowChain c = random_chain(6, 4, rng);
    Vec z(6);
    for (double& x : z) x = rng.uniform(-4.0, 4.0);
    FlowValue f = chain_forward(c, z);
    FlowInverse back = chain_inverse(c, f.y);
    CHECK(max_abs_diff(back.z, z) <= 1e-8);
    CHECK(std::fabs(back.logdet_inv + f.logdet) <= 1e-8);
  }
}

TEST_CASE("empty chain is the identity with zero log-determinant") {
  FlowChain c;
  c.dim = 3;
  const Vec z = {0.1, -2.0, 5.0};
  FlowValue f = chain_forward(c, z);
  CHECK(f.y == z);
  CHECK(f.logdet == 0.0);
  FlowInverse inv = chain_inverse(c, z);
  CHECK(inv.z == z);
  CHECK(inv.logdet_inv == 0.0);
}

TEST_CASE("forward map rejects non-finite input") {
  RadialLayer l = layer_from(1.0, 0.5, {0.0, 0.0});
  CHECK_THROWS_AS(forward(l, {std::nan(""), 0.0}), DomainError);
  CHECK_THROWS_AS(inverse(l, {0.0, std::numeric_limits<double>::infinity()}), DomainError);
}

TEST_CASE("pushforward of a standard normal integrates to one") {
  Rng rng(6);

  // d = 1: trapezoid rule over a wide interval.
  for (int trial = 0; trial < 5; ++trial) {
    FlowChain c = random_chain(1, 3, rng);
    double span = 8.0;
    for (const RadialLayer& l : c.layers) span += std::fabs(l.beta_hat()) + std::fabs(l.z0[0]);
    const std::size_t n = 8001;
    const double step = 2.0 * span / static_cast<double>(n - 1);
    double mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = -span + static_cast<double>(i) * step;
      FlowInverse inv = chain_inverse(c, {y});
      const double logp =
          -0.5 * std::log(2.0 * M_PI) - 0.5 * inv.z[0] * inv.z[0] + inv.logdet_inv;
      const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
      mass += w * std::exp(logp) * step;
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-2));
  }

  // d = 2: tensor-product trapezoid grid.
  for (int trial = 0; trial < 2; ++trial) {
    FlowChain c = random_chain(2, 2, rng);
    double span = 7.0;
    for (const RadialLayer& l : c.layers)
      span += std::fabs(l.beta_hat()) + std::max(std::fabs(l.z0[0]), std::fabs(l.z0[1]));
    const std::size_t n = 401;
    const double step = 2.0 * span / static_cast<double>(n - 1);
    double mass = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double y0 = -span + static_cast<double>(i) * step;
        const double y1 = -span + static_cast<double>(j) * step;
        FlowInverse inv = chain_inverse(c, {y0, y1});
        const double logp = -std::log(2.0 * M_PI) -
                            0.5 * (inv.z[0] * inv.z[0] + inv.z[1] * inv.z[1]) + inv.logdet_inv;
        double w = 1.0;
        if (i == 0 || i == n - 1) w *= 0.5;
        if (j == 0 || j == n - 1) w *= 0.5;
        mass += w * std::exp(logp) * step * step;
      }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-2));
  }
}

TEST_CASE("batched tape transforms agree with the value path") {
  Rng rng(7);
  FlowChain c = random_chain(3, 3, rng);
  const std::size_t B = 7;
  nm::Tensor zb({B, 3});
  for (std::size_t i = 0; i < zb.numel(); ++i) zb[i] = rng.uniform(-3.0, 3.0);

  nm::Tape t;
  FlowBatch fb = chain_forward(t, c, t.constant(zb), Bind::Frozen);
  nm::Tape ti;
  FlowBatchInverse ib = chain_inverse(ti, c, ti.constant(t.value(fb.y)), Bind::Frozen);

  for (std::size_t i = 0; i < B; ++i) {
    Vec z = {zb.at(i, 0), zb.at(i, 1), zb.at(i, 2)};
    FlowValue f = chain_forward(c, z);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(t.value(fb.y).at(i, j) == doctest::Approx(f.y[j]).epsilon(1e-12));
      CHECK(ti.value(ib.z).at(i, j) == doctest::Approx(z[j]).epsilon(1e-9));
    }
    CHECK(t.value(fb.logdet)[i] == doctest::Approx(f.logdet).epsilon(1e-10));
    CHECK(ti.value(ib.logdet_inv)[i] == doctest::Approx(-f.logdet).epsilon(1e-9));
  }
}

TEST_CASE("gradients of the transform pass the finite-difference check") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2;
    const std::size_t B = 3;
    FlowChain c = random_chain(d, 2, rng);
    nm::Tensor zb({B, d});
    for (std::size_t i = 0; i < zb.numel(); ++i) zb[i] = rng.uniform(-2.0, 2.0);
    nm::Tensor w({B, d});
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-1.0, 1.0);

    auto f = [&](nm::Tape& t) {
      FlowBatch fb = chain_forward(t, c, t.constant(zb), Bind::Train);
      return nm::add(nm::sum(nm::mul(fb.y, t.constant(w))), nm::sum(fb.logdet));
    };
    CHECK(nm::grad_check(f, c.params(), 1e-5) <= 1e-5);

    auto g = [&](nm::Tape& t) {
      FlowBatchInverse ib = chain_inverse(t, c, t.constant(zb), Bind::Train);
      return nm::add(nm::sum(nm::mul(ib.z, t.constant(w))), nm::sum(ib.logdet_inv));
    };
    CHECK(nm::grad_check(g, c.params(), 1e-5) <= 1e-5);
  }
}

TEST_CASE("l1 penalty sums absolute raw parameter values") {
  Rng rng(9);
  FlowChain c = random_chain(2, 3, rng);
  double expected = 0.0;
  for (const nm::Tensor* p : static_cast<const FlowChain&>(c).params())
    for (std::size_t i = 0; i < p->numel(); ++i) expected += std::fabs((*p)[i]);
  nm::Tape t;
  Var v = l1_penalty(t, c, Bind::Frozen);
  CHECK(t.value(v).value() == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("near-identity initialization stays close to the identity map") {
  Rng rng(10);
  RadialLayer l = RadialLayer::near_identity(2, rng);
  const Vec z = {0.7, -1.1};
  FlowValue f = forward(l, z);
  CHECK(max_abs_diff(f.y, z) <= 0.2);
  CHECK(std::fabs(f.logdet) <= 0.2);
}
