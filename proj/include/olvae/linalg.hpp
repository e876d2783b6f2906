#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "olvae/errors.hpp"
#include "olvae/tape.hpp"

namespace olvae {

// Dense symmetric positive-definite matrix of small order (K <= a few dozen).
// The Cholesky factor is computed on first use and cached; factor before
// sharing an instance across threads.
class SpdMatrix {
 public:
  SpdMatrix(std::size_t order, std::vector<double> entries);
  static SpdMatrix identity(std::size_t order);

  std::size_t order() const { return k_; }
  double at(std::size_t i, std::size_t j) const { return e_[i * k_ + j]; }
  const std::vector<double>& entries() const { return e_; }

  // Lower-triangular factor L with L*L^T = C. Throws NotPositiveDefiniteError.
  const std::vector<double>& chol() const;

 private:
  std::size_t k_;
  std::vector<double> e_;
  mutable std::vector<double> chol_;
  mutable bool chol_done_ = false;
};

std::vector<double> cholesky(const SpdMatrix& C);
double logdet(const SpdMatrix& C);
std::vector<double> solve(const SpdMatrix& C, std::span<const double> b);
// Explicit inverse, kept for tests and cross-checks; solves are preferred.
std::vector<double> inverse(const SpdMatrix& C);

// KL( N(m, diag(s)) || N(a, C) ) including the -K constant, so the divergence
// of a distribution against itself is exactly zero.
double kl_diag_full(std::span<const double> m, std::span<const double> s,
                    std::span<const double> a, const SpdMatrix& C);

// Tape version of the same scalar, differentiable in m, s, a and the entries
// of C. C is symmetrized internally so perturbations of single entries stay
// factorizable. m, s, a have shape {K}; C has shape {K, K}.
ad::Var kl_diag_full_op(ad::Var m, ad::Var s, ad::Var a, ad::Var C);

}  // namespace olvae
