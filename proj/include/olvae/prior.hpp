#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "olvae/linalg.hpp"
#include "olvae/tape.hpp"

namespace olvae {

// Unconstrained parameters of the ordered spacing prior: d independent
// chains over K levels. Row-major d x (K-1) layouts.
struct SpacingParams {
  std::size_t d = 0;
  std::size_t k = 0;
  std::vector<double> mu1;        // d
  std::vector<double> delta_bar;  // d * (K-1)
  std::vector<double> sigma_bar;  // d * (K-1)

  // mu1 = 0, delta_bar = 0 (spacing 1), sigma_bar = 0 (sigma = spacing / 6).
  static SpacingParams init(std::size_t d, std::size_t k);
};

// One dimension after the constraint map: delta[i] = exp(delta_bar[i]) > 0,
// sigma[i+1] = (delta[i] / 3) * logistic(sigma_bar[i]), sigma[0] = 1 pinned.
struct Chain1d {
  double mu1 = 0.0;
  std::vector<double> delta;  // K-1
  std::vector<double> sigma;  // K, sigma[0] == 1
};

Chain1d constrain_dim(const SpacingParams& p, std::size_t dim);
std::vector<Chain1d> constrain(const SpacingParams& p);

// Joint moments of the K level anchors, one mean/covariance pair per
// dimension. mean[i] = mu1 + sum of the first i spacings; cov[i][j] is the
// running sum of sigma^2 up to min(i, j), accumulated in increasing level
// order so tests can reproduce entries bit for bit.
struct JointMoments {
  std::vector<double> mean;
  SpdMatrix cov;
};
JointMoments dim_moments(const Chain1d& g);

struct ChainGaussian {
  std::vector<std::vector<double>> mean;  // [d][K]
  std::vector<SpdMatrix> cov;             // [d]

  std::size_t dims() const { return mean.size(); }
  std::size_t levels() const { return mean.empty() ? 0 : mean[0].size(); }
};

ChainGaussian joint_moments(const SpacingParams& p);

// Ablation prior: independent standard normal anchors in every dimension.
ChainGaussian iid_prior_moments(std::size_t d, std::size_t k);

// Ancestral walk v[0] = mu1 + sigma[0] e, v[i] = v[i-1] + delta[i-1] + sigma[i] e,
// with caller-supplied quantities (sigma entries may be zero for a noiseless
// walk); draws K normals in level order.
std::vector<double> sample_chain_raw(double mu1, std::span<const double> delta,
                                     std::span<const double> sigma,
                                     std::mt19937_64& rng);
std::vector<double> sample_chain_dim(const Chain1d& g, std::mt19937_64& rng);
// All d dimensions, dimension-major draw order.
std::vector<std::vector<double>> sample_chain(const SpacingParams& p,
                                              std::mt19937_64& rng);

// Log-density of the chain factorization, term by term, summed over
// dimensions for the full factorized prior.
double chain_log_density_dim(const Chain1d& g, std::span<const double> v);
double log_density(const SpacingParams& p,
                   const std::vector<std::vector<double>>& v);

// Tape mirror of constrain_dim + dim_moments, built from primitive ops.
// mu1 has shape {1}; delta_bar and sigma_bar have shape {K-1}.
struct PriorNodes {
  ad::Var mean;  // {K}
  ad::Var cov;   // {K, K}
};
PriorNodes build_prior_moments(ad::Tape& t, ad::Var mu1, ad::Var delta_bar,
                               ad::Var sigma_bar);

}  // namespace olvae
