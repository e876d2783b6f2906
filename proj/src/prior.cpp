#include "olvae/prior.hpp"

#include <cmath>
#include <string>

#include "olvae/errors.hpp"

namespace olvae {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require_params(const SpacingParams& p) {
  if (p.d == 0 || p.k == 0)
    throw ContractError("SpacingParams: need d >= 1 and K >= 1");
  const std::size_t width = p.k - 1;
  if (p.mu1.size() != p.d || p.delta_bar.size() != p.d * width ||
      p.sigma_bar.size() != p.d * width)
    throw ShapeError("SpacingParams: field lengths do not match d=" +
                     std::to_string(p.d) + ", K=" + std::to_string(p.k));
}

void require_chain(const Chain1d& g) {
  if (g.sigma.empty()) throw ContractError("chain prior has no levels");
  if (g.delta.size() + 1 != g.sigma.size())
    throw ShapeError("chain prior: " + std::to_string(g.delta.size()) +
                     " spacings do not fit " + std::to_string(g.sigma.size()) +
                     " levels");
}

}  // namespace

SpacingParams SpacingParams::init(std::size_t d, std::size_t k) {
  if (d == 0 || k == 0)
    throw ContractError("SpacingParams: need d >= 1 and K >= 1");
  SpacingParams p;
  p.d = d;
  p.k = k;
  p.mu1.assign(d, 0.0);
  p.delta_bar.assign(d * (k - 1), 0.0);
  p.sigma_bar.assign(d * (k - 1), 0.0);
  return p;
}

Chain1d constrain_dim(const SpacingParams& p, std::size_t dim) {
  require_params(p);
  if (dim >= p.d)
    throw ContractError("constrain_dim: dimension " + std::to_string(dim) +
                        " out of range");
  const std::size_t width = p.k - 1;
  Chain1d g;
  g.mu1 = p.mu1[dim];
  g.delta.resize(width);
  g.sigma.resize(p.k);
  g.sigma[0] = 1.0;
  for (std::size_t i = 0; i < width; ++i) {
    g.delta[i] = std::exp(p.delta_bar[dim * width + i]);
    g.sigma[i + 1] = g.delta[i] / 3.0 * logistic(p.sigma_bar[dim * width + i]);
  }
  return g;
}

std::vector<Chain1d> constrain(const SpacingParams& p) {
  require_params(p);
  std::vector<Chain1d> out;
  out.reserve(p.d);
  for (std::size_t l = 0; l < p.d; ++l) out.push_back(constrain_dim(p, l));
  return out;
}

JointMoments dim_moments(const Chain1d& g) {
  require_chain(g);
  const std::size_t k = g.sigma.size();
  std::vector<double> mean(k);
  mean[0] = g.mu1;
  for (std::size_t i = 1; i < k; ++i) mean[i] = mean[i - 1] + g.delta[i - 1];

  std::vector<double> cum(k);
  double run = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    run += g.sigma[i] * g.sigma[i];
    cum[i] = run;
  }
  std::vector<double> cov(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) cov[i * k + j] = cum[i < j ? i : j];
  return {std::move(mean), SpdMatrix(k, std::move(cov))};
}

ChainGaussian joint_moments(const SpacingParams& p) {
  ChainGaussian out;
  for (const Chain1d& g : constrain(p)) {
    JointMoments jm = dim_moments(g);
    out.mean.push_back(std::move(jm.mean));
    out.cov.push_back(std::move(jm.cov));
  }
  return out;
}

ChainGaussian iid_prior_moments(std::size_t d, std::size_t k) {
  if (d == 0 || k == 0)
    throw ContractError("iid prior needs d >= 1 and K >= 1");
  ChainGaussian out;
  for (std::size_t l = 0; l < d; ++l) {
    out.mean.emplace_back(k, 0.0);
    out.cov.push_back(SpdMatrix::identity(k));
  }
  return out;
}

std::vector<double> sample_chain_raw(double mu1, std::span<const double> delta,
                                     std::span<const double> sigma,
                                     std::mt19937_64& rng) {
  if (delta.size() + 1 != sigma.size())
    throw ShapeError("sample_chain_raw: spacing and noise lengths disagree");
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> v(sigma.size());
  v[0] = mu1 + sigma[0] * n01(rng);
  for (std::size_t i = 1; i < v.size(); ++i)
    v[i] = v[i - 1] + delta[i - 1] + sigma[i] * n01(rng);
  return v;
}

std::vector<double> sample_chain_dim(const Chain1d& g, std::mt19937_64& rng) {
  require_chain(g);
  return sample_chain_raw(g.mu1, g.delta, g.sigma, rng);
}

std::vector<std::vector<double>> sample_chain(const SpacingParams& p,
                                              std::mt19937_64& rng) {
  std::vector<std::vector<double>> out;
  out.reserve(p.d);
  for (const Chain1d& g : constrain(p)) out.push_back(sample_chain_dim(g, rng));
  return out;
}

double chain_log_density_dim(const Chain1d& g, std::span<const double> v) {
  require_chain(g);
  if (v.size() != g.sigma.size())
    throw ShapeError("chain_log_density_dim: point has " +
                     std::to_string(v.size()) + " coordinates for " +
                     std::to_string(g.sigma.size()) + " levels");
  auto term = [](double x, double mean, double sigma) {
    const double d = (x - mean) / sigma;
    return -0.5 * (kLog2Pi + d * d) - std::log(sigma);
  };
  double acc = term(v[0], g.mu1, g.sigma[0]);
  for (std::size_t i = 1; i < v.size(); ++i)
    acc += term(v[i], v[i - 1] + g.delta[i - 1], g.sigma[i]);
  return acc;
}

double log_density(const SpacingParams& p,
                   const std::vector<std::vector<double>>& v) {
  if (v.size() != p.d)
    throw ShapeError("log_density: " + std::to_string(v.size()) +
                     " dimension rows for d=" + std::to_string(p.d));
  double acc = 0.0;
  std::vector<Chain1d> chains = constrain(p);
  for (std::size_t l = 0; l < p.d; ++l)
    acc += chain_log_density_dim(chains[l], v[l]);
  return acc;
}

PriorNodes build_prior_moments(ad::Tape& t, ad::Var mu1, ad::Var delta_bar,
                               ad::Var sigma_bar) {
  const ad::Tensor& db = t.value(delta_bar);
  const ad::Tensor& sb = t.value(sigma_bar);
  if (t.value(mu1).size() != 1)
    throw ShapeError("build_prior_moments: mu1 must be a scalar");
  if (db.shape != sb.shape || db.shape.size() != 1 || db.size() == 0)
    throw ShapeError("build_prior_moments: delta_bar and sigma_bar must be "
                     "equal-length vectors");
  const std::size_t k = db.size() + 1;

  ad::Var delta = ad::exp(delta_bar);                                   // {K-1}
  ad::Var sigma_rest =
      ad::mul(ad::mul_scalar(delta, 1.0 / 3.0), ad::sigmoid(sigma_bar));

  // mean = mu1 + P * delta with P[i][j] = 1 for j < i.
  std::vector<double> p(k * (k - 1), 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j + 1 < k; ++j)
      if (j < i) p[i * (k - 1) + j] = 1.0;
  ad::Var steps = ad::matmul(t.constant(ad::Tensor({k, k - 1}, std::move(p))),
                             ad::reshape(delta, {k - 1, 1}));
  ad::Var mean = ad::add(ad::reshape(ad::broadcast(mu1, {k, 1}), {k}),
                         ad::reshape(steps, {k}));

  // sigma^2 with the pinned first level, then cov = T diag(sigma^2) T^T
  // for the lower-triangular all-ones T.
  ad::Var s2_rest = ad::mul(sigma_rest, sigma_rest);                    // {K-1}
  ad::Var s2 = ad::concat_rows(t.constant(ad::Tensor({1, 1}, {1.0})),
                               ad::reshape(s2_rest, {k - 1, 1}));       // {K,1}
  std::vector<double> tri(k * k, 0.0), tri_t(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      tri[i * k + j] = 1.0;
      tri_t[j * k + i] = 1.0;
    }
  ad::Var scaled = ad::mul(t.constant(ad::Tensor({k, k}, std::move(tri))),
                           ad::broadcast(ad::reshape(s2, {k}), {k, k}));
  ad::Var cov = ad::matmul(scaled, t.constant(ad::Tensor({k, k}, std::move(tri_t))));
  return {mean, cov};
}

}  // namespace olvae
