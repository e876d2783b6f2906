#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "olvae/decoder.hpp"
#include "olvae/oracles.hpp"

using olvae::DecoderNet;
namespace ad = olvae::ad;
namespace oracle = olvae::oracle;

TEST_SUITE("decoder") {

TEST_CASE("zero-weight decoder emits 0.5 everywhere") {
  DecoderNet net = DecoderNet::zero(4, 9);
  std::vector<double> p =
      olvae::decode_numeric(net, std::vector<double>(2, 1.3),
                            std::vector<double>(2, -0.7));
  REQUIRE(p.size() == 9);
  for (double v : p) CHECK(v == 0.5);
}

TEST_CASE("outputs live strictly inside the clamped unit interval") {
  std::mt19937_64 rng(23);
  DecoderNet net = DecoderNet::init(4, 16, rng);
  // Saturate the output head to probe the squashing bounds.
  for (double& b : net.l3.b.values) b = 50.0;
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<double> v{u(rng), u(rng)}, s{u(rng), u(rng)};
  // Saturated logits may land one ulp past 1 - eps; the hard requirement is
  // strict interiority of (0, 1) with the eps-sized margin.
  for (double p : olvae::decode_numeric(net, v, s)) {
    CHECK(p < 1.0);
    CHECK(p <= 1.0 - 0.99 * olvae::kBernoulliEps);
  }
  for (double& b : net.l3.b.values) b = -50.0;
  for (double p : olvae::decode_numeric(net, v, s)) {
    CHECK(p > 0.0);
    CHECK(p >= 0.99 * olvae::kBernoulliEps);
  }
}

TEST_CASE("decoding is deterministic") {
  std::mt19937_64 rng(29);
  DecoderNet net = DecoderNet::init(6, 12, rng);
  std::vector<double> v{0.1, -0.4, 2.0}, s{1.0, 0.0, -1.0};
  CHECK(olvae::decode_numeric(net, v, s) == olvae::decode_numeric(net, v, s));
}

TEST_CASE("bernoulli log-likelihood analytic values") {
  const std::size_t d = 10;
  std::vector<double> half(d, 0.5);
  CHECK(olvae::bernoulli_loglik(half, half) ==
        doctest::Approx(-static_cast<double>(d) * std::log(2.0)).epsilon(1e-14));

  // Near-perfect reconstruction of a binary vector.
  std::vector<double> x = {1, 0, 1, 1, 0};
  std::vector<double> p(5);
  for (std::size_t i = 0; i < 5; ++i)
    p[i] = x[i] == 1.0 ? 1.0 - olvae::kBernoulliEps : olvae::kBernoulliEps;
  const double ll = olvae::bernoulli_loglik(x, p);
  CHECK(ll <= 0.0);
  CHECK(ll > -1e-4);
}

TEST_CASE("log-likelihood is non-positive and concave in each mean") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> ux(0.0, 1.0), up(0.1, 0.9);
  std::vector<double> x(6), p(6);
  for (double& v : x) v = ux(rng);
  for (double& v : p) v = up(rng);
  CHECK(olvae::bernoulli_loglik(x, p) <= 0.0);
  const double h = 1e-4;
  for (std::size_t k = 0; k < 6; ++k) {
    std::vector<double> hi = p, lo = p;
    hi[k] += h;
    lo[k] -= h;
    const double second = olvae::bernoulli_loglik(x, hi) -
                          2.0 * olvae::bernoulli_loglik(x, p) +
                          olvae::bernoulli_loglik(x, lo);
    CHECK(second <= 0.0);
  }
}

TEST_CASE("log-likelihood rejects bad input") {
  std::vector<double> x = {0.5, 0.5};
  CHECK_THROWS_AS(olvae::bernoulli_loglik(x, std::vector<double>{0.5}),
                  olvae::ShapeError);
  CHECK_THROWS_AS(olvae::bernoulli_loglik(x, std::vector<double>{0.5, 0.0}),
                  olvae::DomainError);
  CHECK_THROWS_AS(olvae::bernoulli_loglik(x, std::vector<double>{1.0, 0.5}),
                  olvae::DomainError);
}

TEST_CASE("log-likelihood gradient matches finite differences") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> ux(0.0, 1.0), up(0.1, 0.9);
  std::vector<double> x(8), p0(8);
  for (double& v : x) v = ux(rng);
  for (double& v : p0) v = up(rng);

  ad::Tape t;
  ad::Var p = t.leaf(ad::Tensor({1, 8}, p0));
  ad::Var ll = olvae::bernoulli_loglik_op(t, ad::Tensor({1, 8}, x), p);
  CHECK(t.values_of(ll)[0] == doctest::Approx(olvae::bernoulli_loglik(x, p0)).epsilon(1e-13));
  t.backward(ll);
  auto g = t.grad(p);
  std::vector<double> analytic(g.begin(), g.end());

  auto f = [&](std::span<const double> pv) {
    return olvae::bernoulli_loglik(x, pv);
  };
  std::vector<std::size_t> coords(8);
  std::iota(coords.begin(), coords.end(), 0);
  oracle::GradCheck gc = oracle::check_gradient(f, p0, analytic, coords);
  CHECK(gc.max_rel_err < 1e-4);
}

TEST_CASE("decoder gradients match finite differences on sampled weights") {
  std::mt19937_64 rng(41);
  DecoderNet net = DecoderNet::init(4, 6, rng);
  std::uniform_real_distribution<double> ux(0.0, 1.0), uz(-1.0, 1.0);
  std::vector<double> x(6), z(4);
  for (double& v : x) v = ux(rng);
  for (double& v : z) v = uz(rng);

  std::vector<ad::Tensor*> params = {&net.l1.w, &net.l1.b, &net.l2.w,
                                     &net.l2.b, &net.l3.w, &net.l3.b};
  std::vector<double> flat;
  for (ad::Tensor* p : params)
    flat.insert(flat.end(), p->values.begin(), p->values.end());

  auto eval = [&](std::span<const double> theta, ad::Tape& t,
                  std::vector<ad::Var>* leaves) {
    std::size_t off = 0;
    std::vector<ad::Var> vs;
    for (ad::Tensor* p : params) {
      ad::Tensor copy = *p;
      std::copy(theta.begin() + off, theta.begin() + off + copy.size(),
                copy.values.begin());
      off += copy.size();
      vs.push_back(t.leaf(copy));
    }
    olvae::DecoderVars dv{{vs[0], vs[1]}, {vs[2], vs[3]}, {vs[4], vs[5]}};
    ad::Var p = olvae::decode(t, dv, t.constant(ad::Tensor({1, 4}, z)));
    ad::Var loss = olvae::bernoulli_loglik_op(t, ad::Tensor({1, 6}, x), p);
    if (leaves) *leaves = vs;
    return loss;
  };

  ad::Tape t;
  std::vector<ad::Var> leaves;
  ad::Var loss = eval(flat, t, &leaves);
  t.backward(loss);
  std::vector<double> analytic;
  for (ad::Var v : leaves) {
    auto g = t.grad(v);
    analytic.insert(analytic.end(), g.begin(), g.end());
  }
  auto f = [&](std::span<const double> theta) {
    ad::Tape t2;
    return t2.values_of(eval(theta, t2, nullptr))[0];
  };
  std::vector<std::size_t> coords;
  for (std::size_t i = 0; i < flat.size(); i += 211) coords.push_back(i);
  oracle::GradCheck gc = oracle::check_gradient(f, flat, analytic, coords);
  CAPTURE(gc.worst_coord);
  CHECK(gc.checked > 20);
  CHECK(gc.max_rel_err < 1e-4);
}

TEST_CASE("latent length mismatches throw") {
  DecoderNet net = DecoderNet::zero(4, 8);
  CHECK_THROWS_AS(olvae::decode_numeric(net, std::vector<double>(3, 0.0),
                                        std::vector<double>(2, 0.0)),
                  olvae::ShapeError);
}

}  // TEST_SUITE
