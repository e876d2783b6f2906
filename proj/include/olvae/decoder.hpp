#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "olvae/encoder.hpp"
#include "olvae/tape.hpp"

namespace olvae {

// Maps a concatenated (content, style) latent to Bernoulli means:
// (d_c + d_s) -> 128 -> 256 -> out_dim, tanh hidden, logistic output squashed
// into (eps, 1 - eps) with eps = 1e-6.
struct DecoderNet {
  std::size_t latent_dim = 0;  // d_c + d_s
  std::size_t out_dim = 0;
  DenseParams l1, l2, l3;

  static DecoderNet init(std::size_t latent_dim, std::size_t out_dim,
                         std::mt19937_64& rng);
  static DecoderNet zero(std::size_t latent_dim, std::size_t out_dim);
};

struct DecoderVars {
  DenseVars l1, l2, l3;
};

DecoderVars lift(ad::Tape& t, const DecoderNet& net);

inline constexpr double kBernoulliEps = 1e-6;

// z has shape {B, latent_dim}; result {B, out_dim} of means in (eps, 1-eps).
ad::Var decode(ad::Tape& t, const DecoderVars& vars, ad::Var z);

// Single-pair convenience wrapper over the tape path.
std::vector<double> decode_numeric(const DecoderNet& net,
                                   std::span<const double> v,
                                   std::span<const double> s);

// Sum over entries of x log p + (1-x) log(1-p).
double bernoulli_loglik(std::span<const double> x, std::span<const double> p);
// Tape version; x is observed data (constant), p is {B, D} on the tape.
ad::Var bernoulli_loglik_op(ad::Tape& t, const ad::Tensor& x, ad::Var p);

}  // namespace olvae
