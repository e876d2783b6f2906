#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "olvae/tape.hpp"

namespace olvae {

struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> var;  // strictly positive
};

// One fully connected layer. Weights are stored {in, out} so a forward pass
// is a plain row-vector matmul with no transposition.
struct DenseParams {
  ad::Tensor w;  // {in, out}
  ad::Tensor b;  // {out}
};

DenseParams dense_init(std::size_t in, std::size_t out, std::mt19937_64& rng);
DenseParams dense_zero(std::size_t in, std::size_t out);

struct DenseVars {
  ad::Var w, b;
};

// h = act(x W + b) for a batch x of shape {B, in}.
ad::Var dense_forward(ad::Tape& t, const DenseVars& l, ad::Var x);

// Maps a data vector to the (mean, log-variance) pair of a diagonal Gaussian:
// in_dim -> 256 -> 128 -> 2 * latent_dim, tanh hidden activations.
struct EncoderNet {
  std::size_t in_dim = 0;
  std::size_t latent_dim = 0;
  DenseParams l1, l2, l3;

  static EncoderNet init(std::size_t in_dim, std::size_t latent_dim,
                         std::mt19937_64& rng);
  static EncoderNet zero(std::size_t in_dim, std::size_t latent_dim);
};

struct EncoderVars {
  DenseVars l1, l2, l3;
};

EncoderVars lift(ad::Tape& t, const EncoderNet& net);

struct GaussianVars {
  ad::Var mean;  // {B, d}
  ad::Var var;   // {B, d}
};

// Batched posterior for x of shape {B, in_dim}. Log-variance is clamped to
// [-10, 10] before exponentiation so later precision sums cannot overflow.
GaussianVars encode(ad::Tape& t, const EncoderVars& vars, ad::Var x,
                    std::size_t latent_dim);

// Single-vector convenience wrapper running the tape path underneath.
DiagGaussian encode_numeric(const EncoderNet& net, std::span<const double> x);

// Precision-additive product of diagonal Gaussian experts.
DiagGaussian poe_fuse(const std::vector<DiagGaussian>& experts);
GaussianVars poe_fuse_vars(ad::Tape& t, const std::vector<GaussianVars>& experts);

// mean + sqrt(variance) * noise, elementwise.
std::vector<double> reparam_sample(const DiagGaussian& q,
                                   std::span<const double> noise);
ad::Var reparam_sample_var(ad::Tape& t, const GaussianVars& q,
                           const ad::Tensor& noise);

}  // namespace olvae
