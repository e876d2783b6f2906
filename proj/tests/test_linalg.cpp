#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "olvae/linalg.hpp"
#include "olvae/oracles.hpp"

using olvae::SpdMatrix;
namespace ad = olvae::ad;
namespace oracle = olvae::oracle;

namespace {

SpdMatrix random_spd(std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> b(k * k);
  for (double& x : b) x = u(rng);
  std::vector<double> c(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += b[i * k + p] * b[j * k + p];
      c[i * k + j] = acc + (i == j ? 1.5 : 0.0);
    }
  return SpdMatrix(k, std::move(c));
}

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("cholesky reconstructs the matrix") {
  std::mt19937_64 rng(11);
  const std::size_t k = 5;
  SpdMatrix C = random_spd(k, rng);
  std::vector<double> L = olvae::cholesky(C);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += L[i * k + p] * L[j * k + p];
      CHECK(acc == doctest::Approx(C.at(i, j)).epsilon(1e-12));
      if (j > i) CHECK(L[i * k + j] == 0.0);
    }
}

TEST_CASE("logdet matches diagonal product and LU") {
  SpdMatrix D(3, {4, 0, 0, 0, 9, 0, 0, 0, 0.25});
  CHECK(olvae::logdet(D) == doctest::Approx(std::log(4.0 * 9.0 * 0.25)).epsilon(1e-14));

  std::mt19937_64 rng(12);
  SpdMatrix C = random_spd(4, rng);
  // Independent route: logdet from the LU-based density at the mean.
  std::vector<double> zero(4, 0.0);
  const double lp = oracle::lu_gaussian_logpdf(zero, zero, C.entries());
  const double logdet_lu = -2.0 * lp - 4.0 * std::log(2.0 * M_PI);
  CHECK(olvae::logdet(C) == doctest::Approx(logdet_lu).epsilon(1e-10));
}

TEST_CASE("solve and inverse round trip") {
  std::mt19937_64 rng(13);
  const std::size_t k = 6;
  SpdMatrix C = random_spd(k, rng);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> b(k);
  for (double& x : b) x = u(rng);
  std::vector<double> x = olvae::solve(C, b);
  for (std::size_t i = 0; i < k; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += C.at(i, j) * x[j];
    CHECK(acc == doctest::Approx(b[i]).epsilon(1e-10));
  }
  std::vector<double> inv = olvae::inverse(C);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += C.at(i, p) * inv[p * k + j];
      CHECK(acc == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
    }
}

TEST_CASE("non-positive-definite input names the pivot") {
  SpdMatrix M(3, {1, 0, 0, 0, -1, 0, 0, 0, 1});
  try {
    olvae::cholesky(M);
    FAIL("expected NotPositiveDefiniteError");
  } catch (const olvae::NotPositiveDefiniteError& e) {
    CHECK(e.pivot == 1);
  }
  // Loss of definiteness through correlation, not a negative diagonal.
  SpdMatrix N(2, {1, 2, 2, 1});
  CHECK_THROWS_AS(olvae::cholesky(N), olvae::NotPositiveDefiniteError);
}

TEST_CASE("constructor rejects bad input") {
  CHECK_THROWS_AS(SpdMatrix(2, {1, 0, 0}), olvae::ShapeError);
  CHECK_THROWS_AS(SpdMatrix(2, {1, 0.5, 0.5 + 1e-6, 1}), olvae::ShapeError);
  CHECK_NOTHROW(SpdMatrix(2, {1, 0.5, 0.5, 1}));
}

TEST_CASE("kl of a distribution against itself is zero") {
  std::vector<double> m = {0.3, -1.2, 2.0};
  std::vector<double> s = {0.5, 1.0, 2.5};
  SpdMatrix C(3, {0.5, 0, 0, 0, 1.0, 0, 0, 0, 2.5});
  CHECK(olvae::kl_diag_full(m, s, m, C) == doctest::Approx(0.0).epsilon(1e-13));
}

TEST_CASE("kl matches the scalar closed form") {
  const double m = 0.7, s = 0.6, a = -0.4, c = 2.1;
  SpdMatrix C(1, {c});
  const double expect =
      0.5 * (s / c + (m - a) * (m - a) / c - 1.0 + std::log(c) - std::log(s));
  CHECK(olvae::kl_diag_full({{m}}, {{s}}, {{a}}, C) ==
        doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("kl matches a monte-carlo estimate") {
  std::mt19937_64 rng(21);
  const std::size_t k = 4;
  SpdMatrix C = random_spd(k, rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> m(k), s(k), a(k);
  for (double& x : m) x = u(rng);
  for (double& x : a) x = u(rng);
  for (double& x : s) x = 0.4 + 0.3 * (u(rng) + 1.0);
  const double kl = olvae::kl_diag_full(m, s, a, C);

  oracle::McKl mc(m, s, a, C.entries());
  std::mt19937_64 srng(22);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> z(k);
  for (int it = 0; it < 200000; ++it) {
    for (std::size_t i = 0; i < k; ++i)
      z[i] = m[i] + std::sqrt(s[i]) * n01(srng);
    mc.add(z);
  }
  oracle::McEstimate est = mc.estimate();
  CHECK(std::fabs(est.value - kl) < 5.0 * est.std_error + 1e-3);
}

TEST_CASE("kl rejects bad domains") {
  SpdMatrix C = SpdMatrix::identity(2);
  std::vector<double> ok = {1.0, 1.0};
  CHECK_THROWS_AS(olvae::kl_diag_full(ok, {{1.0, 0.0}}, ok, C), olvae::DomainError);
  CHECK_THROWS_AS(olvae::kl_diag_full(ok, {{1.0, -1.0}}, ok, C), olvae::DomainError);
  CHECK_THROWS_AS(olvae::kl_diag_full({{1.0}}, ok, ok, C), olvae::ShapeError);
}

TEST_CASE("kl op matches the numeric path and finite differences") {
  std::mt19937_64 rng(31);
  const std::size_t k = 4;
  SpdMatrix C = random_spd(k, rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> m(k), s(k), a(k);
  for (double& x : m) x = u(rng);
  for (double& x : a) x = u(rng);
  for (double& x : s) x = 0.5 + 0.3 * (u(rng) + 1.0);

  std::vector<double> flat;
  flat.insert(flat.end(), m.begin(), m.end());
  flat.insert(flat.end(), s.begin(), s.end());
  flat.insert(flat.end(), a.begin(), a.end());
  flat.insert(flat.end(), C.entries().begin(), C.entries().end());

  auto build = [k](ad::Tape& t, std::span<const double> x) {
    std::vector<double> mm(x.begin(), x.begin() + k);
    std::vector<double> ss(x.begin() + k, x.begin() + 2 * k);
    std::vector<double> aa(x.begin() + 2 * k, x.begin() + 3 * k);
    std::vector<double> cc(x.begin() + 3 * k, x.end());
    ad::Var vm = t.leaf(ad::Tensor({k}, std::move(mm)));
    ad::Var vs = t.leaf(ad::Tensor({k}, std::move(ss)));
    ad::Var va = t.leaf(ad::Tensor({k}, std::move(aa)));
    ad::Var vc = t.leaf(ad::Tensor({k, k}, std::move(cc)));
    return std::tuple{olvae::kl_diag_full_op(vm, vs, va, vc), vm, vs, va, vc};
  };

  ad::Tape t;
  auto [kl, vm, vs, va, vc] = build(t, flat);
  CHECK(t.values_of(kl)[0] ==
        doctest::Approx(olvae::kl_diag_full(m, s, a, C)).epsilon(1e-13));
  t.backward(kl);
  std::vector<double> analytic;
  for (ad::Var v : {vm, vs, va, vc}) {
    auto g = t.grad(v);
    analytic.insert(analytic.end(), g.begin(), g.end());
  }

  auto f = [&](std::span<const double> x) {
    ad::Tape t2;
    auto [out, m2, s2, a2, c2] = build(t2, x);
    return t2.values_of(out)[0];
  };
  std::vector<std::size_t> coords(flat.size());
  std::iota(coords.begin(), coords.end(), 0);
  oracle::GradCheck gc = oracle::check_gradient(f, flat, analytic, coords);
  CAPTURE(gc.worst_coord);
  CHECK(gc.max_rel_err < 1e-4);
}

TEST_CASE("kl op is bit-identical across runs") {
  auto run = [] {
    std::mt19937_64 rng(41);
    SpdMatrix C = random_spd(3, rng);
    ad::Tape t;
    ad::Var m = t.leaf(ad::Tensor({3}, {0.1, -0.2, 0.3}));
    ad::Var s = t.leaf(ad::Tensor({3}, {0.7, 1.1, 0.9}));
    ad::Var a = t.leaf(ad::Tensor({3}, {0.0, 0.5, -0.5}));
    ad::Var c = t.leaf(ad::Tensor({3, 3}, C.entries()));
    ad::Var kl = olvae::kl_diag_full_op(m, s, a, c);
    t.backward(kl);
    std::vector<double> out{t.values_of(kl)[0]};
    for (ad::Var v : {m, s, a, c}) {
      auto g = t.grad(v);
      out.insert(out.end(), g.begin(), g.end());
    }
    return out;
  };
  std::vector<double> r1 = run(), r2 = run();
  REQUIRE(r1.size() == r2.size());
  for (std::size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}

}  // TEST_SUITE
