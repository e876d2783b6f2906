#include "olvae/oracles.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace olvae::oracle {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// LU with partial pivoting; returns false if singular. a is n x n, row major,
// overwritten with the factors; piv records row swaps.
bool lu_factor(std::size_t n, std::vector<double>& a,
               std::vector<std::size_t>& piv, int& sign) {
  piv.resize(n);
  sign = 1;
  for (std::size_t i = 0; i < n; ++i) piv[i] = i;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t best = c;
    double mx = std::fabs(a[c * n + c]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double v = std::fabs(a[r * n + c]);
      if (v > mx) mx = v, best = r;
    }
    if (mx == 0.0) return false;
    if (best != c) {
      for (std::size_t j = 0; j < n; ++j)
        std::swap(a[c * n + j], a[best * n + j]);
      std::swap(piv[c], piv[best]);
      sign = -sign;
    }
    const double pivot = a[c * n + c];
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / pivot;
      a[r * n + c] = f;
      for (std::size_t j = c + 1; j < n; ++j) a[r * n + j] -= f * a[c * n + j];
    }
  }
  return true;
}

void lu_solve(std::size_t n, const std::vector<double>& lu,
              const std::vector<std::size_t>& piv, std::vector<double>& b) {
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = b[piv[i]];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) y[i] -= lu[i * n + j] * y[j];
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = i + 1; j < n; ++j) y[i] -= lu[i * n + j] * y[j];
    y[i] /= lu[i * n + i];
  }
  b = y;
}

}  // namespace

double central_diff(const std::function<double(std::span<const double>)>& f,
                    std::vector<double> x, std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double fp = f(x);
  x[i] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

GradCheck check_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, std::span<const double> analytic,
    std::span<const std::size_t> coords, double h, double floor) {
  GradCheck out;
  std::vector<double> xv(x.begin(), x.end());
  for (std::size_t i : coords) {
    const double num = central_diff(f, xv, i, h);
    const double ana = analytic[i];
    const double denom =
        std::max({std::fabs(num), std::fabs(ana), floor});
    const double rel = std::fabs(num - ana) / denom;
    if (rel > out.max_rel_err) {
      out.max_rel_err = rel;
      out.worst_coord = i;
      out.worst_analytic = ana;
      out.worst_numeric = num;
    }
    ++out.checked;
  }
  return out;
}

MomentAccumulator::MomentAccumulator(std::size_t dim)
    : d_(dim), sum_(dim, 0.0), outer_(dim * dim, 0.0) {}

void MomentAccumulator::add(std::span<const double> sample) {
  if (sample.size() != d_)
    throw std::invalid_argument("MomentAccumulator: wrong sample length");
  for (std::size_t i = 0; i < d_; ++i) {
    sum_[i] += sample[i];
    for (std::size_t j = 0; j < d_; ++j)
      outer_[i * d_ + j] += sample[i] * sample[j];
  }
  ++n_;
}

std::vector<double> MomentAccumulator::mean() const {
  std::vector<double> m(d_);
  for (std::size_t i = 0; i < d_; ++i)
    m[i] = sum_[i] / static_cast<double>(n_);
  return m;
}

std::vector<double> MomentAccumulator::covariance() const {
  const std::vector<double> m = mean();
  std::vector<double> c(d_ * d_);
  for (std::size_t i = 0; i < d_; ++i)
    for (std::size_t j = 0; j < d_; ++j)
      c[i * d_ + j] = outer_[i * d_ + j] / static_cast<double>(n_) -
                      m[i] * m[j];
  return c;
}

double lu_gaussian_logpdf(std::span<const double> x,
                          std::span<const double> mean,
                          std::span<const double> cov) {
  const std::size_t n = x.size();
  if (mean.size() != n || cov.size() != n * n)
    throw std::invalid_argument("lu_gaussian_logpdf: size mismatch");
  std::vector<double> lu(cov.begin(), cov.end());
  std::vector<std::size_t> piv;
  int sign = 0;
  if (!lu_factor(n, lu, piv, sign))
    throw std::domain_error("lu_gaussian_logpdf: singular covariance");
  double logdet = 0.0;
  int det_sign = sign;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = lu[i * n + i];
    if (d < 0.0) det_sign = -det_sign;
    logdet += std::log(std::fabs(d));
  }
  if (det_sign <= 0)
    throw std::domain_error("lu_gaussian_logpdf: non-positive determinant");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = x[i] - mean[i];
  std::vector<double> sol = d;
  lu_solve(n, lu, piv, sol);
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) quad += d[i] * sol[i];
  return -0.5 * (static_cast<double>(n) * kLog2Pi + logdet + quad);
}

double diag_gaussian_logpdf(std::span<const double> x,
                            std::span<const double> mean,
                            std::span<const double> var) {
  const std::size_t n = x.size();
  if (mean.size() != n || var.size() != n)
    throw std::invalid_argument("diag_gaussian_logpdf: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - mean[i];
    acc += kLog2Pi + std::log(var[i]) + d * d / var[i];
  }
  return -0.5 * acc;
}

McKl::McKl(std::vector<double> m, std::vector<double> s, std::vector<double> a,
           std::vector<double> c)
    : m_(std::move(m)), s_(std::move(s)), a_(std::move(a)), c_(std::move(c)) {}

void McKl::add(std::span<const double> sample) {
  const double lq = diag_gaussian_logpdf(sample, m_, s_);
  const double lp = lu_gaussian_logpdf(sample, a_, c_);
  const double w = lq - lp;
  sum_ += w;
  sumsq_ += w * w;
  ++n_;
}

McEstimate McKl::estimate() const {
  McEstimate e;
  const double n = static_cast<double>(n_);
  e.value = sum_ / n;
  const double var = sumsq_ / n - e.value * e.value;
  e.std_error = std::sqrt(std::max(var, 0.0) / n);
  return e;
}

GridMoments product_of_gaussians_grid(std::span<const double> means,
                                      std::span<const double> vars,
                                      std::size_t points, double half_width) {
  const double lo = -half_width, hi = half_width;
  const double step = (hi - lo) / static_cast<double>(points - 1);
  double z = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double x = lo + step * static_cast<double>(i);
    double lp = 0.0;
    for (std::size_t n = 0; n < means.size(); ++n) {
      const double d = x - means[n];
      lp += -0.5 * (kLog2Pi + std::log(vars[n]) + d * d / vars[n]);
    }
    const double p = std::exp(lp);
    z += p;
    m1 += x * p;
    m2 += x * x * p;
  }
  GridMoments g;
  g.mean = m1 / z;
  g.var = m2 / z - g.mean * g.mean;
  return g;
}

}  // namespace olvae::oracle
