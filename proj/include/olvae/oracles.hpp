#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

// Reference computations kept deliberately independent of the main library:
// finite differences against closures, plain LU for dense Gaussian densities,
// streaming moments, and a quadrature check for products of 1-D Gaussians.
// Tests and the selftest compare library output against these.
namespace olvae::oracle {

// Central difference of f at x along coordinate i.
double central_diff(const std::function<double(std::span<const double>)>& f,
                    std::vector<double> x, std::size_t i, double h);

struct GradCheck {
  std::size_t checked = 0;
  double max_rel_err = 0.0;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares analytic[i] to a central difference for each i in coords.
// Relative error uses max(|a|, |b|, floor) as denominator.
GradCheck check_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, std::span<const double> analytic,
    std::span<const std::size_t> coords, double h = 1e-5,
    double floor = 1e-2);

// Streaming empirical mean and covariance of fixed-length vectors.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(std::size_t dim);
  void add(std::span<const double> sample);
  std::size_t count() const { return n_; }
  std::vector<double> mean() const;
  std::vector<double> covariance() const;  // 1/n normalization

 private:
  std::size_t d_;
  std::size_t n_ = 0;
  std::vector<double> sum_;
  std::vector<double> outer_;
};

// Dense Gaussian N(mean, cov) log-density via LU with partial pivoting.
// Shares nothing with the Cholesky path in the main library.
double lu_gaussian_logpdf(std::span<const double> x,
                          std::span<const double> mean,
                          std::span<const double> cov);

// Diagonal Gaussian log-density, elementary form.
double diag_gaussian_logpdf(std::span<const double> x,
                            std::span<const double> mean,
                            std::span<const double> var);

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo KL( N(m, diag(s)) || N(a, C) ): callers supply samples drawn
// from the diagonal Gaussian; both densities are evaluated here.
class McKl {
 public:
  McKl(std::vector<double> m, std::vector<double> s, std::vector<double> a,
       std::vector<double> c);
  void add(std::span<const double> sample);
  McEstimate estimate() const;

 private:
  std::vector<double> m_, s_, a_, c_;
  std::size_t n_ = 0;
  double sum_ = 0.0, sumsq_ = 0.0;
};

// Mean and variance of the normalized product of 1-D Gaussian densities,
// computed by brute-force quadrature on a wide uniform grid.
struct GridMoments {
  double mean = 0.0;
  double var = 0.0;
};
GridMoments product_of_gaussians_grid(std::span<const double> means,
                                      std::span<const double> vars,
                                      std::size_t points = 200001,
                                      double half_width = 40.0);

}  // namespace olvae::oracle
