#include "olvae/elbo.hpp"

#include <algorithm>
#include <cmath>

#include "olvae/errors.hpp"

namespace olvae {

Model Model::init(std::size_t data_dim, std::size_t d_c, std::size_t d_s,
                  std::size_t k, PriorMode mode, std::uint64_t seed) {
  if (data_dim == 0 || d_c == 0 || d_s == 0 || k == 0)
    throw ContractError("model dimensions must be positive");
  Model m;
  m.data_dim = data_dim;
  m.d_c = d_c;
  m.d_s = d_s;
  m.k = k;
  m.prior_mode = mode;
  std::mt19937_64 rng(seed);
  m.content_enc = EncoderNet::init(data_dim, d_c, rng);
  m.style_enc = EncoderNet::init(data_dim, d_s, rng);
  m.dec = DecoderNet::init(d_c + d_s, data_dim, rng);
  m.prior = SpacingParams::init(d_c, k);
  return m;
}

namespace {

template <typename Net>
void catalog_net(std::vector<ParamRef>& out, const std::string& prefix,
                 Net& net) {
  DenseParams* layers[] = {&net.l1, &net.l2, &net.l3};
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string base = prefix + ".l" + std::to_string(i + 1);
    out.push_back({base + ".w", layers[i]->w.shape, &layers[i]->w.values});
    out.push_back({base + ".b", layers[i]->b.shape, &layers[i]->b.values});
  }
}

}  // namespace

std::vector<ParamRef> parameters(Model& m) {
  std::vector<ParamRef> out;
  catalog_net(out, "content_enc", m.content_enc);
  catalog_net(out, "style_enc", m.style_enc);
  catalog_net(out, "dec", m.dec);
  out.push_back({"prior.mu1", {m.d_c}, &m.prior.mu1});
  out.push_back({"prior.delta_bar", {m.d_c, m.k - 1}, &m.prior.delta_bar});
  out.push_back({"prior.sigma_bar", {m.d_c, m.k - 1}, &m.prior.sigma_bar});
  return out;
}

ElboNoise make_elbo_noise(const Model& m, const GroupedBatch& batch,
                          std::mt19937_64& rng) {
  if (batch.groups.size() != m.k)
    throw ContractError("batch level count does not match model");
  std::normal_distribution<double> unit(0.0, 1.0);
  ElboNoise noise;
  noise.content.resize(m.k);
  for (std::size_t lv = 0; lv < m.k; ++lv) {
    noise.content[lv].resize(m.d_c);
    for (double& e : noise.content[lv]) e = unit(rng);
  }
  std::vector<std::size_t> members;
  for (const auto& g : batch.groups)
    members.insert(members.end(), g.begin(), g.end());
  std::sort(members.begin(), members.end());
  for (std::size_t idx : members) {
    auto& s = noise.style[idx];
    s.resize(m.d_s);
    for (double& e : s) e = unit(rng);
  }
  return noise;
}

namespace {

struct ElboVars {
  ad::Var recon, ckl, skl, total;
  std::vector<ad::Var> leaves;  // catalog order
};

// Rows r0..r0+rows of a {n, cols} matrix node (a contiguous flat range).
ad::Var row_range(ad::Var mat, std::size_t cols, std::size_t r0,
                  std::size_t rows) {
  ad::Var flat = ad::reshape(mat, {mat.tape->value(mat).size()});
  return ad::reshape(ad::slice(flat, r0 * cols, rows * cols), {rows, cols});
}

ElboVars build_elbo(ad::Tape& t, const Model& m,
                    const std::vector<LabeledInstance>& data,
                    const GroupedBatch& batch, const ElboNoise& noise) {
  const std::size_t k = m.k;
  if (batch.groups.size() != k)
    throw ContractError("batch level count does not match model");
  if (noise.content.size() != k)
    throw ContractError("noise level count does not match model");

  // Flatten the batch level-major with members sorted by index, so any
  // reordering of the same batch builds a bit-identical tape.
  std::vector<std::size_t> order;
  std::vector<std::size_t> group_start(k), group_size(k);
  for (std::size_t lv = 0; lv < k; ++lv) {
    group_start[lv] = order.size();
    group_size[lv] = batch.groups[lv].size();
    std::vector<std::size_t> members = batch.groups[lv];
    std::sort(members.begin(), members.end());
    for (std::size_t idx : members) {
      if (idx >= data.size()) throw ContractError("batch index out of range");
      order.push_back(idx);
    }
  }
  const std::size_t b = order.size();
  if (b == 0) throw ContractError("batch is empty");

  std::vector<double> xv(b * m.data_dim);
  for (std::size_t r = 0; r < b; ++r) {
    const auto& inst = data[order[r]];
    if (inst.x.size() != m.data_dim)
      throw ShapeError("instance size does not match model data_dim");
    std::copy(inst.x.begin(), inst.x.end(), xv.begin() + r * m.data_dim);
  }
  ad::Tensor xt({b, m.data_dim}, std::move(xv));
  ad::Var x = t.constant(xt);

  ElboVars out;
  EncoderVars cenc = lift(t, m.content_enc);
  EncoderVars senc = lift(t, m.style_enc);
  DecoderVars dec = lift(t, m.dec);
  for (const EncoderVars* e : {&cenc, &senc})
    for (const DenseVars* l : {&e->l1, &e->l2, &e->l3}) {
      out.leaves.push_back(l->w);
      out.leaves.push_back(l->b);
    }
  for (const DenseVars* l : {&dec.l1, &dec.l2, &dec.l3}) {
    out.leaves.push_back(l->w);
    out.leaves.push_back(l->b);
  }
  ad::Var mu1 = t.leaf(ad::Tensor({m.d_c}, m.prior.mu1));
  ad::Var dbar = t.leaf(ad::Tensor({m.d_c, k - 1}, m.prior.delta_bar));
  ad::Var sbar = t.leaf(ad::Tensor({m.d_c, k - 1}, m.prior.sigma_bar));
  out.leaves.push_back(mu1);
  out.leaves.push_back(dbar);
  out.leaves.push_back(sbar);

  GaussianVars cq = encode(t, cenc, x, m.d_c);  // {b, d_c} mean / var
  GaussianVars sq = encode(t, senc, x, m.d_s);  // {b, d_s}

  // Fuse each level's rows into one posterior; absent levels fall back to a
  // constant standard normal so the prior still sees all k levels.
  std::vector<ad::Var> fmean(k), fvar(k);
  for (std::size_t lv = 0; lv < k; ++lv) {
    if (group_size[lv] == 0) {
      fmean[lv] = t.constant(ad::Tensor::zeros({m.d_c}));
      fvar[lv] = t.constant(ad::Tensor::full({m.d_c}, 1.0));
      continue;
    }
    ad::Var mr = row_range(cq.mean, m.d_c, group_start[lv], group_size[lv]);
    ad::Var vr = row_range(cq.var, m.d_c, group_start[lv], group_size[lv]);
    ad::Var prec_rows = ad::recip(vr);
    ad::Var prec = ad::col_sum(prec_rows);  // {d_c}
    ad::Var wsum = ad::col_sum(ad::mul(mr, prec_rows));
    fvar[lv] = ad::recip(prec);
    fmean[lv] = ad::mul(fvar[lv], wsum);
  }

  // One reparameterized content draw per level, repeated over its rows.
  std::vector<ad::Var> vrows;
  for (std::size_t lv = 0; lv < k; ++lv) {
    if (group_size[lv] == 0) continue;
    if (noise.content[lv].size() != m.d_c)
      throw ShapeError("content noise size does not match d_c");
    ad::Var z = reparam_sample_var(t, {fmean[lv], fvar[lv]},
                                   ad::Tensor({m.d_c}, noise.content[lv]));
    vrows.push_back(ad::broadcast(z, {group_size[lv], m.d_c}));
  }
  ad::Var vmat = vrows[0];
  for (std::size_t i = 1; i < vrows.size(); ++i)
    vmat = ad::concat_rows(vmat, vrows[i]);

  std::vector<double> sn(b * m.d_s);
  for (std::size_t r = 0; r < b; ++r) {
    auto it = noise.style.find(order[r]);
    if (it == noise.style.end() || it->second.size() != m.d_s)
      throw ContractError("style noise missing for batch instance");
    std::copy(it->second.begin(), it->second.end(), sn.begin() + r * m.d_s);
  }
  ad::Var smat = reparam_sample_var(t, sq, ad::Tensor({b, m.d_s}, std::move(sn)));

  ad::Var p = decode(t, dec, ad::concat_cols(vmat, smat));
  out.recon = bernoulli_loglik_op(t, xt, p);

  // Content KL, one chain per latent coordinate over the stacked level
  // posteriors; the iid ablation swaps in a constant N(0, I) target.
  ad::Var mstack = ad::reshape(fmean[0], {1, m.d_c});
  ad::Var sstack = ad::reshape(fvar[0], {1, m.d_c});
  for (std::size_t lv = 1; lv < k; ++lv) {
    mstack = ad::concat_rows(mstack, ad::reshape(fmean[lv], {1, m.d_c}));
    sstack = ad::concat_rows(sstack, ad::reshape(fvar[lv], {1, m.d_c}));
  }
  ad::Var ckl = t.constant(ad::Tensor::zeros({1}));
  for (std::size_t l = 0; l < m.d_c; ++l) {
    ad::Var ml = ad::col(mstack, l);
    ad::Var sl = ad::col(sstack, l);
    ad::Var a, c;
    if (m.prior_mode == PriorMode::iid) {
      a = t.constant(ad::Tensor::zeros({k}));
      c = t.constant(ad::Tensor({k, k}, SpdMatrix::identity(k).entries()));
    } else if (k == 1) {
      a = ad::slice(mu1, l, 1);
      c = t.constant(ad::Tensor({1, 1}, {1.0}));
    } else {
      PriorNodes pn = build_prior_moments(t, ad::slice(mu1, l, 1),
                                          ad::row(dbar, l), ad::row(sbar, l));
      a = pn.mean;
      c = pn.cov;
    }
    ckl = ad::add(ckl, kl_diag_full_op(ml, sl, a, c));
  }
  out.ckl = ckl;

  // Style KL against N(0, I): 0.5 * sum(var + mean^2 - 1 - log var).
  ad::Var inner = ad::sub(ad::add(sq.var, ad::mul(sq.mean, sq.mean)),
                          ad::add_scalar(ad::log(sq.var), 1.0));
  out.skl = ad::mul_scalar(ad::sum(inner), 0.5);

  out.total = ad::sub(ad::sub(out.recon, out.ckl), out.skl);
  return out;
}

ElboBreakdown read_breakdown(const ad::Tape& t, const ElboVars& v) {
  ElboBreakdown b;
  b.reconstruction = t.values_of(v.recon)[0];
  b.content_kl = t.values_of(v.ckl)[0];
  b.style_kl = t.values_of(v.skl)[0];
  b.total = t.values_of(v.total)[0];
  return b;
}

}  // namespace

ElboBreakdown elbo_value(const Model& m,
                         const std::vector<LabeledInstance>& data,
                         const GroupedBatch& batch, const ElboNoise& noise) {
  ad::Tape t;
  ElboVars v = build_elbo(t, m, data, batch, noise);
  return read_breakdown(t, v);
}

ElboGrads elbo_with_grads(const Model& m,
                          const std::vector<LabeledInstance>& data,
                          const GroupedBatch& batch, const ElboNoise& noise) {
  ad::Tape t;
  ElboVars v = build_elbo(t, m, data, batch, noise);
  t.backward(v.total);
  ElboGrads out;
  out.values = read_breakdown(t, v);
  out.grads.reserve(v.leaves.size());
  for (ad::Var leaf : v.leaves) {
    auto g = t.grad(leaf);
    out.grads.emplace_back(t.value(leaf).shape,
                           std::vector<double>(g.begin(), g.end()));
  }
  return out;
}

double content_kl(const std::vector<DiagGaussian>& posteriors,
                  const ChainGaussian& prior) {
  const std::size_t k = prior.levels();
  const std::size_t d = prior.dims();
  if (posteriors.size() != k)
    throw ContractError("posterior count does not match prior levels");
  for (const auto& q : posteriors)
    if (q.mean.size() != d || q.var.size() != d)
      throw ShapeError("posterior dimension does not match prior");
  double total = 0.0;
  std::vector<double> ml(k), sl(k);
  for (std::size_t l = 0; l < d; ++l) {
    for (std::size_t i = 0; i < k; ++i) {
      ml[i] = posteriors[i].mean[l];
      sl[i] = posteriors[i].var[l];
    }
    total += kl_diag_full(ml, sl, prior.mean[l], prior.cov[l]);
  }
  return total;
}

double style_kl(const DiagGaussian& q) {
  if (q.mean.size() != q.var.size())
    throw ShapeError("mean and var sizes differ");
  double total = 0.0;
  for (std::size_t i = 0; i < q.mean.size(); ++i) {
    if (!(q.var[i] > 0.0)) throw DomainError("variance must be positive");
    total += q.var[i] + q.mean[i] * q.mean[i] - 1.0 - std::log(q.var[i]);
  }
  return 0.5 * total;
}

}  // namespace olvae
