#include "olvae/decoder.hpp"

#include <cmath>
#include <string>

#include "olvae/errors.hpp"

namespace olvae {
namespace {

constexpr std::size_t kHidden1 = 128;
constexpr std::size_t kHidden2 = 256;

}  // namespace

DecoderNet DecoderNet::init(std::size_t latent_dim, std::size_t out_dim,
                            std::mt19937_64& rng) {
  DecoderNet n;
  n.latent_dim = latent_dim;
  n.out_dim = out_dim;
  n.l1 = dense_init(latent_dim, kHidden1, rng);
  n.l2 = dense_init(kHidden1, kHidden2, rng);
  n.l3 = dense_init(kHidden2, out_dim, rng);
  return n;
}

DecoderNet DecoderNet::zero(std::size_t latent_dim, std::size_t out_dim) {
  DecoderNet n;
  n.latent_dim = latent_dim;
  n.out_dim = out_dim;
  n.l1 = dense_zero(latent_dim, kHidden1);
  n.l2 = dense_zero(kHidden1, kHidden2);
  n.l3 = dense_zero(kHidden2, out_dim);
  return n;
}

DecoderVars lift(ad::Tape& t, const DecoderNet& net) {
  return {{t.leaf(net.l1.w), t.leaf(net.l1.b)},
          {t.leaf(net.l2.w), t.leaf(net.l2.b)},
          {t.leaf(net.l3.w), t.leaf(net.l3.b)}};
}

ad::Var decode(ad::Tape& t, const DecoderVars& vars, ad::Var z) {
  const ad::Tensor& zv = t.value(z);
  if (zv.shape.size() != 2 || zv.shape[1] != t.value(vars.l1.w).shape[0])
    throw ShapeError("decode: latent " + ad::shape_str(zv.shape) +
                     " does not match first layer input width " +
                     std::to_string(t.value(vars.l1.w).shape[0]));
  ad::Var h1 = ad::tanh(dense_forward(t, vars.l1, z));
  ad::Var h2 = ad::tanh(dense_forward(t, vars.l2, h1));
  ad::Var logits = dense_forward(t, vars.l3, h2);
  // Affine squeeze keeps means strictly inside (eps, 1-eps).
  return ad::add_scalar(
      ad::mul_scalar(ad::sigmoid(logits), 1.0 - 2.0 * kBernoulliEps),
      kBernoulliEps);
}

std::vector<double> decode_numeric(const DecoderNet& net,
                                   std::span<const double> v,
                                   std::span<const double> s) {
  if (v.size() + s.size() != net.latent_dim)
    throw ShapeError("decode_numeric: latent lengths " +
                     std::to_string(v.size()) + "+" + std::to_string(s.size()) +
                     " do not sum to " + std::to_string(net.latent_dim));
  std::vector<double> z(v.begin(), v.end());
  z.insert(z.end(), s.begin(), s.end());
  ad::Tape t;
  DecoderVars vars{{t.constant(net.l1.w), t.constant(net.l1.b)},
                   {t.constant(net.l2.w), t.constant(net.l2.b)},
                   {t.constant(net.l3.w), t.constant(net.l3.b)}};
  const std::size_t zlen = z.size();
  ad::Var p = decode(t, vars, t.constant(ad::Tensor({1, zlen}, std::move(z))));
  auto pv = t.values_of(p);
  return {pv.begin(), pv.end()};
}

double bernoulli_loglik(std::span<const double> x, std::span<const double> p) {
  if (x.size() != p.size())
    throw ShapeError("bernoulli_loglik: lengths " + std::to_string(x.size()) +
                     " and " + std::to_string(p.size()) + " differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(p[i] > 0.0 && p[i] < 1.0))
      throw DomainError("bernoulli_loglik: p[" + std::to_string(i) +
                        "] outside (0,1)");
    acc += x[i] * std::log(p[i]) + (1.0 - x[i]) * std::log(1.0 - p[i]);
  }
  return acc;
}

ad::Var bernoulli_loglik_op(ad::Tape& t, const ad::Tensor& x, ad::Var p) {
  if (x.shape != t.value(p).shape)
    throw ShapeError("bernoulli_loglik_op: x shape " + ad::shape_str(x.shape) +
                     " does not match p shape " +
                     ad::shape_str(t.value(p).shape));
  for (double v : t.values_of(p))
    if (!(v > 0.0 && v < 1.0))
      throw DomainError("bernoulli_loglik_op: p outside (0,1)");
  ad::Var xc = t.constant(x);
  ad::Tensor ones_minus = x;
  for (double& v : ones_minus.values) v = 1.0 - v;
  ad::Var xm = t.constant(std::move(ones_minus));
  ad::Var one_minus_p = ad::add_scalar(ad::mul_scalar(p, -1.0), 1.0);
  return ad::sum(ad::add(ad::mul(xc, ad::log(p)),
                         ad::mul(xm, ad::log(one_minus_p))));
}

}  // namespace olvae
