#include "olvae/linalg.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <utility>

namespace olvae {
namespace {

constexpr double kSymTol = 1e-12;

std::vector<double> chol_factor(std::size_t k, const std::vector<double>& e) {
  std::vector<double> L(k * k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    double d = e[j * k + j];
    for (std::size_t p = 0; p < j; ++p) d -= L[j * k + p] * L[j * k + p];
    if (!(d > 0.0)) throw NotPositiveDefiniteError(j, d);
    const double ljj = std::sqrt(d);
    L[j * k + j] = ljj;
    for (std::size_t i = j + 1; i < k; ++i) {
      double s = e[i * k + j];
      for (std::size_t p = 0; p < j; ++p) s -= L[i * k + p] * L[j * k + p];
      L[i * k + j] = s / ljj;
    }
  }
  return L;
}

// x := L^{-1} b in place (forward substitution).
void fwd_solve(std::size_t k, const std::vector<double>& L, double* x) {
  for (std::size_t i = 0; i < k; ++i) {
    double s = x[i];
    for (std::size_t p = 0; p < i; ++p) s -= L[i * k + p] * x[p];
    x[i] = s / L[i * k + i];
  }
}

// x := L^{-T} b in place (back substitution).
void bwd_solve(std::size_t k, const std::vector<double>& L, double* x) {
  for (std::size_t i = k; i-- > 0;) {
    double s = x[i];
    for (std::size_t p = i + 1; p < k; ++p) s -= L[p * k + i] * x[p];
    x[i] = s / L[i * k + i];
  }
}

struct KlParts {
  double kl;
  std::vector<double> L;  // Cholesky factor of the (symmetrized) C
  std::vector<double> u;  // C^{-1} (a - m)
  std::vector<double> x;  // L^{-1}, lower triangular; C^{-1} = X^T X
};

KlParts kl_core(std::size_t k, std::span<const double> m,
                std::span<const double> s, std::span<const double> a,
                const std::vector<double>& centries, bool want_grads) {
  if (m.size() != k || s.size() != k || a.size() != k)
    throw ShapeError("kl_diag_full: m, s, a must have length " +
                     std::to_string(k));
  for (std::size_t i = 0; i < k; ++i)
    if (!(s[i] > 0.0))
      throw DomainError("kl_diag_full: diagonal variance s[" +
                        std::to_string(i) + "] must be > 0");

  KlParts out;
  out.L = chol_factor(k, centries);
  const std::vector<double>& L = out.L;

  double logdet_c = 0.0;
  for (std::size_t i = 0; i < k; ++i) logdet_c += std::log(L[i * k + i]);
  logdet_c *= 2.0;

  out.u.resize(k);
  for (std::size_t i = 0; i < k; ++i) out.u[i] = a[i] - m[i];
  fwd_solve(k, L, out.u.data());
  double quad = 0.0;
  for (std::size_t i = 0; i < k; ++i) quad += out.u[i] * out.u[i];
  bwd_solve(k, L, out.u.data());  // now u = C^{-1}(a - m)

  // X = L^{-1}; (C^{-1})_{ii} = sum_p X_{pi}^2.
  out.x.assign(k * k, 0.0);
  std::vector<double> col(k);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < k; ++i) col[i] = (i == j) ? 1.0 : 0.0;
    fwd_solve(k, L, col.data());
    for (std::size_t i = 0; i < k; ++i) out.x[i * k + j] = col[i];
  }

  double trace = 0.0, logdet_s = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double cii = 0.0;
    for (std::size_t p = 0; p < k; ++p) cii += out.x[p * k + i] * out.x[p * k + i];
    trace += s[i] * cii;
    logdet_s += std::log(s[i]);
  }

  out.kl = 0.5 * (trace + quad - static_cast<double>(k) + logdet_c - logdet_s);
  if (!want_grads) {
    out.x.clear();
    out.u.clear();
  }
  return out;
}

}  // namespace

SpdMatrix::SpdMatrix(std::size_t order, std::vector<double> entries)
    : k_(order), e_(std::move(entries)) {
  if (k_ == 0) throw ShapeError("SpdMatrix: order must be positive");
  if (e_.size() != k_ * k_)
    throw ShapeError("SpdMatrix: expected " + std::to_string(k_ * k_) +
                     " entries, got " + std::to_string(e_.size()));
  for (std::size_t i = 0; i < k_; ++i)
    for (std::size_t j = i + 1; j < k_; ++j) {
      const double d = std::fabs(e_[i * k_ + j] - e_[j * k_ + i]);
      if (!(d <= kSymTol)) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%zu,%zu by %.3g", i, j, d);
        throw ShapeError(std::string("SpdMatrix: not symmetric at ") + buf);
      }
    }
}

SpdMatrix SpdMatrix::identity(std::size_t order) {
  std::vector<double> e(order * order, 0.0);
  for (std::size_t i = 0; i < order; ++i) e[i * order + i] = 1.0;
  return SpdMatrix(order, std::move(e));
}

const std::vector<double>& SpdMatrix::chol() const {
  if (!chol_done_) {
    chol_ = chol_factor(k_, e_);
    chol_done_ = true;
  }
  return chol_;
}

std::vector<double> cholesky(const SpdMatrix& C) { return C.chol(); }

double logdet(const SpdMatrix& C) {
  const std::size_t k = C.order();
  const std::vector<double>& L = C.chol();
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) acc += std::log(L[i * k + i]);
  return 2.0 * acc;
}

std::vector<double> solve(const SpdMatrix& C, std::span<const double> b) {
  const std::size_t k = C.order();
  if (b.size() != k)
    throw ShapeError("solve: rhs length " + std::to_string(b.size()) +
                     " does not match order " + std::to_string(k));
  std::vector<double> x(b.begin(), b.end());
  fwd_solve(k, C.chol(), x.data());
  bwd_solve(k, C.chol(), x.data());
  return x;
}

std::vector<double> inverse(const SpdMatrix& C) {
  const std::size_t k = C.order();
  std::vector<double> inv(k * k);
  std::vector<double> col(k);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < k; ++i) col[i] = (i == j) ? 1.0 : 0.0;
    fwd_solve(k, C.chol(), col.data());
    bwd_solve(k, C.chol(), col.data());
    for (std::size_t i = 0; i < k; ++i) inv[i * k + j] = col[i];
  }
  return inv;
}

double kl_diag_full(std::span<const double> m, std::span<const double> s,
                    std::span<const double> a, const SpdMatrix& C) {
  return kl_core(C.order(), m, s, a, C.entries(), /*want_grads=*/false).kl;
}

ad::Var kl_diag_full_op(ad::Var m, ad::Var s, ad::Var a, ad::Var C) {
  ad::Tape& t = *m.tape;
  if (s.tape != &t || a.tape != &t || C.tape != &t)
    throw ContractError("kl_diag_full_op: vars from different tapes");
  const ad::Tensor& mv = t.value(m);
  const ad::Tensor& sv = t.value(s);
  const ad::Tensor& av = t.value(a);
  const ad::Tensor& cv = t.value(C);
  const std::size_t k = mv.size();
  if (cv.shape.size() != 2 || cv.shape[0] != k || cv.shape[1] != k)
    throw ShapeError("kl_diag_full_op: C must be {K,K} with K = len(m), got " +
                     ad::shape_str(cv.shape));

  // Symmetrize so single-entry perturbations keep a factorizable argument.
  std::vector<double> cs(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      cs[i * k + j] = 0.5 * (cv.values[i * k + j] + cv.values[j * k + i]);

  KlParts parts = kl_core(k, mv.values, sv.values, av.values, cs, true);

  const bool ng = t.needs_grad(m) || t.needs_grad(s) || t.needs_grad(a) ||
                  t.needs_grad(C);
  std::vector<double> sval = sv.values;
  std::vector<double> u = std::move(parts.u);
  std::vector<double> x = std::move(parts.x);
  return t.make_node(
      {1}, {parts.kl}, ng,
      [m, s, a, C, k, sval = std::move(sval), u = std::move(u),
       x = std::move(x)](ad::Tape& tp, ad::Var self) {
        const double g = tp.grad(self)[0];
        if (g == 0.0) return;
        // cinv = X^T X.
        std::vector<double> cinv(k * k);
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j <= i; ++j) {
            double acc = 0.0;
            for (std::size_t p = i; p < k; ++p)
              acc += x[p * k + i] * x[p * k + j];
            cinv[i * k + j] = acc;
            cinv[j * k + i] = acc;
          }
        if (tp.needs_grad(m)) {
          auto gm = tp.grad_of(m);
          for (std::size_t i = 0; i < k; ++i) gm[i] -= g * u[i];
        }
        if (tp.needs_grad(a)) {
          auto ga = tp.grad_of(a);
          for (std::size_t i = 0; i < k; ++i) ga[i] += g * u[i];
        }
        if (tp.needs_grad(s)) {
          auto gs = tp.grad_of(s);
          for (std::size_t i = 0; i < k; ++i)
            gs[i] += g * 0.5 * (cinv[i * k + i] - 1.0 / sval[i]);
        }
        if (tp.needs_grad(C)) {
          // 0.5 * (Cinv - Cinv S Cinv - u u^T), symmetric already.
          auto gc = tp.grad_of(C);
          std::vector<double> w(k * k);  // Cinv * S: scale columns by s
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
              w[i * k + j] = cinv[i * k + j] * sval[j];
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) {
              double csc = 0.0;
              for (std::size_t p = 0; p < k; ++p)
                csc += w[i * k + p] * cinv[p * k + j];
              gc[i * k + j] +=
                  g * 0.5 * (cinv[i * k + j] - csc - u[i] * u[j]);
            }
        }
      });
}

}  // namespace olvae
