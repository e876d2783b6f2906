#include "olvae/encoder.hpp"

#include <cmath>
#include <string>

#include "olvae/errors.hpp"

namespace olvae {
namespace {

constexpr std::size_t kHidden1 = 256;
constexpr std::size_t kHidden2 = 128;

void require_expert(const DiagGaussian& q, std::size_t d, std::size_t idx) {
  if (q.mean.size() != d || q.var.size() != d)
    throw ShapeError("poe_fuse: expert " + std::to_string(idx) +
                     " dimensionality differs from the first expert");
  for (std::size_t i = 0; i < q.var.size(); ++i)
    if (!(q.var[i] > 0.0))
      throw DomainError("poe_fuse: expert " + std::to_string(idx) +
                        " variance[" + std::to_string(i) + "] must be > 0");
}

}  // namespace

DenseParams dense_init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  DenseParams p{ad::Tensor::zeros({in, out}), ad::Tensor::zeros({out})};
  for (double& x : p.w.values) x = u(rng);
  return p;
}

DenseParams dense_zero(std::size_t in, std::size_t out) {
  return {ad::Tensor::zeros({in, out}), ad::Tensor::zeros({out})};
}

ad::Var dense_forward(ad::Tape& t, const DenseVars& l, ad::Var x) {
  const std::size_t b = t.value(x).shape[0];
  const std::size_t out = t.value(l.b).size();
  return ad::add(ad::matmul(x, l.w), ad::broadcast(l.b, {b, out}));
}

EncoderNet EncoderNet::init(std::size_t in_dim, std::size_t latent_dim,
                            std::mt19937_64& rng) {
  EncoderNet n;
  n.in_dim = in_dim;
  n.latent_dim = latent_dim;
  n.l1 = dense_init(in_dim, kHidden1, rng);
  n.l2 = dense_init(kHidden1, kHidden2, rng);
  n.l3 = dense_init(kHidden2, 2 * latent_dim, rng);
  return n;
}

EncoderNet EncoderNet::zero(std::size_t in_dim, std::size_t latent_dim) {
  EncoderNet n;
  n.in_dim = in_dim;
  n.latent_dim = latent_dim;
  n.l1 = dense_zero(in_dim, kHidden1);
  n.l2 = dense_zero(kHidden1, kHidden2);
  n.l3 = dense_zero(kHidden2, 2 * latent_dim);
  return n;
}

EncoderVars lift(ad::Tape& t, const EncoderNet& net) {
  return {{t.leaf(net.l1.w), t.leaf(net.l1.b)},
          {t.leaf(net.l2.w), t.leaf(net.l2.b)},
          {t.leaf(net.l3.w), t.leaf(net.l3.b)}};
}

GaussianVars encode(ad::Tape& t, const EncoderVars& vars, ad::Var x,
                    std::size_t latent_dim) {
  const ad::Tensor& xv = t.value(x);
  if (xv.shape.size() != 2 || xv.shape[1] != t.value(vars.l1.w).shape[0])
    throw ShapeError("encode: input " + ad::shape_str(xv.shape) +
                     " does not match first layer input width " +
                     std::to_string(t.value(vars.l1.w).shape[0]));
  ad::Var h1 = ad::tanh(dense_forward(t, vars.l1, x));
  ad::Var h2 = ad::tanh(dense_forward(t, vars.l2, h1));
  ad::Var raw = dense_forward(t, vars.l3, h2);
  if (t.value(raw).shape[1] != 2 * latent_dim)
    throw ShapeError("encode: head width " +
                     std::to_string(t.value(raw).shape[1]) +
                     " does not hold mean and log-variance of length " +
                     std::to_string(latent_dim));
  ad::Var mean = ad::cols(raw, 0, latent_dim);
  ad::Var logvar = ad::clamp(ad::cols(raw, latent_dim, 2 * latent_dim), -10.0, 10.0);
  return {mean, ad::exp(logvar)};
}

DiagGaussian encode_numeric(const EncoderNet& net, std::span<const double> x) {
  if (x.size() != net.in_dim)
    throw ShapeError("encode_numeric: input length " + std::to_string(x.size()) +
                     " does not match in_dim " + std::to_string(net.in_dim));
  ad::Tape t;
  EncoderVars vars{{t.constant(net.l1.w), t.constant(net.l1.b)},
                   {t.constant(net.l2.w), t.constant(net.l2.b)},
                   {t.constant(net.l3.w), t.constant(net.l3.b)}};
  ad::Var xv = t.constant(ad::Tensor({1, x.size()}, {x.begin(), x.end()}));
  GaussianVars q = encode(t, vars, xv, net.latent_dim);
  auto mv = t.values_of(q.mean);
  auto vv = t.values_of(q.var);
  return {{mv.begin(), mv.end()}, {vv.begin(), vv.end()}};
}

DiagGaussian poe_fuse(const std::vector<DiagGaussian>& experts) {
  if (experts.empty()) throw ContractError("poe_fuse: empty expert list");
  const std::size_t d = experts[0].mean.size();
  for (std::size_t n = 0; n < experts.size(); ++n)
    require_expert(experts[n], d, n);
  DiagGaussian out{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  std::vector<double> prec(d, 0.0), wm(d, 0.0);
  for (const DiagGaussian& q : experts)
    for (std::size_t i = 0; i < d; ++i) {
      prec[i] += 1.0 / q.var[i];
      wm[i] += q.mean[i] / q.var[i];
    }
  for (std::size_t i = 0; i < d; ++i) {
    out.var[i] = 1.0 / prec[i];
    out.mean[i] = out.var[i] * wm[i];
  }
  return out;
}

GaussianVars poe_fuse_vars(ad::Tape& t, const std::vector<GaussianVars>& experts) {
  if (experts.empty()) throw ContractError("poe_fuse_vars: empty expert list");
  ad::Var prec = ad::recip(experts[0].var);
  ad::Var wm = ad::mul(experts[0].mean, prec);
  for (std::size_t n = 1; n < experts.size(); ++n) {
    ad::Var p = ad::recip(experts[n].var);
    prec = ad::add(prec, p);
    wm = ad::add(wm, ad::mul(experts[n].mean, p));
  }
  ad::Var var = ad::recip(prec);
  return {ad::mul(var, wm), var};
}

std::vector<double> reparam_sample(const DiagGaussian& q,
                                   std::span<const double> noise) {
  if (noise.size() != q.mean.size())
    throw ShapeError("reparam_sample: noise length mismatch");
  std::vector<double> z(q.mean.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    z[i] = q.mean[i] + std::sqrt(q.var[i]) * noise[i];
  return z;
}

ad::Var reparam_sample_var(ad::Tape& t, const GaussianVars& q,
                           const ad::Tensor& noise) {
  if (noise.shape != t.value(q.mean).shape)
    throw ShapeError("reparam_sample_var: noise shape " +
                     ad::shape_str(noise.shape) + " does not match " +
                     ad::shape_str(t.value(q.mean).shape));
  return ad::add(q.mean, ad::mul(ad::sqrt(q.var), t.constant(noise)));
}

}  // namespace olvae
