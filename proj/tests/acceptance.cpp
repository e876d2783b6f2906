// End-to-end acceptance run. Prints one line per criterion and exits nonzero
// if any of them fails. The desk-scale criteria retrain from scratch, so a
// full run takes a few minutes.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "olvae/dataset.hpp"
#include "olvae/elbo.hpp"
#include "olvae/encoder.hpp"
#include "olvae/evalsuite.hpp"
#include "olvae/linalg.hpp"
#include "olvae/oracles.hpp"
#include "olvae/prior.hpp"
#include "olvae/trainer.hpp"

using namespace olvae;

namespace {

bool all_ok = true;

void report(int idx, const char* name, bool ok, const std::string& detail) {
  std::printf("criterion %2d %-26s %s (%s)\n", idx, (std::string(name) + ":").c_str(),
              ok ? "pass" : "FAIL", detail.c_str());
  std::fflush(stdout);
  all_ok = all_ok && ok;
}

std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string tmp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "olvae_acceptance";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Drops the last comma-separated field of every row (the wall-time column of
// training logs, which is the one clock-dependent output).
std::string drop_last_field(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    out += line.substr(0, line.rfind(','));
    out += '\n';
  }
  return out;
}

SpacingParams random_spacing(std::size_t d, std::size_t k,
                             std::uint64_t seed) {
  SpacingParams p = SpacingParams::init(d, k);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (double& v : p.mu1) v = u(rng);
  for (double& v : p.delta_bar) v = u(rng);
  for (double& v : p.sigma_bar) v = u(rng);
  return p;
}

std::vector<LabeledInstance> random_instances(std::size_t n, std::size_t dim,
                                              std::size_t k,
                                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<LabeledInstance> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].x.resize(dim);
    for (double& v : out[i].x) v = u(rng);
    out[i].c = i % k + 1;
  }
  return out;
}

std::vector<double> flatten_params(Model& m) {
  std::vector<double> flat;
  for (const auto& p : parameters(m))
    flat.insert(flat.end(), p.values->begin(), p.values->end());
  return flat;
}

void unflatten_params(Model& m, std::span<const double> flat) {
  std::size_t off = 0;
  for (const auto& p : parameters(m)) {
    std::copy(flat.begin() + off, flat.begin() + off + p.values->size(),
              p.values->begin());
    off += p.values->size();
  }
}

void criterion_moments() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t d = 4, k = 6, samples = 200000;
  double worst_mean = 0.0, worst_cov = 0.0;
  std::mt19937_64 seeder(2026);
  for (int rep = 0; rep < 5; ++rep) {
    SpacingParams p = random_spacing(d, k, seeder());
    ChainGaussian jm = joint_moments(p);
    std::mt19937_64 rng(seeder());
    std::vector<oracle::MomentAccumulator> acc(d,
                                               oracle::MomentAccumulator(k));
    for (std::size_t s = 0; s < samples; ++s) {
      auto v = sample_chain(p, rng);
      for (std::size_t dim = 0; dim < d; ++dim) acc[dim].add(v[dim]);
    }
    for (std::size_t dim = 0; dim < d; ++dim) {
      auto mean = acc[dim].mean();
      auto cov = acc[dim].covariance();
      for (std::size_t i = 0; i < k; ++i) {
        worst_mean =
            std::max(worst_mean, std::abs(mean[i] - jm.mean[dim][i]));
        for (std::size_t j = 0; j < k; ++j)
          worst_cov = std::max(
              worst_cov, std::abs(cov[i * k + j] - jm.cov[dim].at(i, j)));
      }
    }
  }
  const double secs = seconds_since(t0);
  report(1, "ancestral moments",
         worst_mean < 0.02 && worst_cov < 0.05 && secs < 10.0,
         "mean dev " + fmt(worst_mean) + ", cov dev " + fmt(worst_cov) +
             ", " + fmt(secs) + "s");
}

void criterion_chain_density() {
  SpacingParams p = random_spacing(3, 5, 77);
  ChainGaussian jm = joint_moments(p);
  std::mt19937_64 rng(78);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    auto v = sample_chain(p, rng);
    double joint = 0.0;
    for (std::size_t dim = 0; dim < 3; ++dim)
      joint += oracle::lu_gaussian_logpdf(v[dim], jm.mean[dim],
                                          jm.cov[dim].entries());
    worst = std::max(worst, std::abs(log_density(p, v) - joint));
  }
  report(2, "chain density", worst < 1e-9, "max dev " + fmt(worst, "%.3g"));
}

void criterion_fixture() {
  Chain1d g;
  g.mu1 = 0.0;
  g.delta = {1.0, 1.0};
  g.sigma = {1.0, 1.0 / 3.0, 1.0 / 3.0};
  JointMoments jm = dim_moments(g);

  // Independent substitution: anchor means are running sums of spacings and
  // covariances are running sums of squared noise scales.
  const double expect_mean[3] = {0.0, 0.0 + 1.0, 0.0 + 1.0 + 1.0};
  double run = 0.0;
  double cum[3];
  for (std::size_t i = 0; i < 3; ++i) {
    run += g.sigma[i] * g.sigma[i];
    cum[i] = run;
  }
  bool ok = true;
  for (std::size_t i = 0; i < 3; ++i) ok = ok && jm.mean[i] == expect_mean[i];
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      ok = ok && jm.cov.at(i, j) == cum[std::min(i, j)];
  report(3, "unit-spacing fixture", ok,
         ok ? "anchors and covariance reproduced bit for bit"
            : "entry mismatch");
}

void criterion_kl() {
  const std::size_t k = 4;
  std::mt19937_64 seeder(404);
  bool mc_ok = true;
  double worst_z = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    SpacingParams p = random_spacing(1, k, seeder());
    ChainGaussian prior = joint_moments(p);
    std::mt19937_64 rng(seeder());
    std::uniform_real_distribution<double> um(-1.0, 1.0), uv(0.5, 2.0);
    std::vector<double> m(k), s(k);
    for (std::size_t i = 0; i < k; ++i) {
      m[i] = um(rng);
      s[i] = uv(rng);
    }
    const double closed = kl_diag_full(m, s, prior.mean[0], prior.cov[0]);
    oracle::McKl mc(m, s, prior.mean[0], prior.cov[0].entries());
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> x(k);
    for (std::size_t n = 0; n < 1000000; ++n) {
      for (std::size_t i = 0; i < k; ++i)
        x[i] = m[i] + std::sqrt(s[i]) * nd(rng);
      mc.add(x);
    }
    oracle::McEstimate est = mc.estimate();
    const double z = std::abs(closed - est.value) / est.std_error;
    worst_z = std::max(worst_z, z);
    mc_ok = mc_ok && z <= 3.0;
  }

  SpacingParams p3 = random_spacing(3, k, 505);
  ChainGaussian prior3 = joint_moments(p3);
  std::mt19937_64 rng(506);
  std::uniform_real_distribution<double> um(-1.0, 1.0), uv(0.4, 1.8);
  std::vector<DiagGaussian> posts(k);
  for (std::size_t lv = 0; lv < k; ++lv)
    for (std::size_t dim = 0; dim < 3; ++dim) {
      posts[lv].mean.push_back(um(rng));
      posts[lv].var.push_back(uv(rng));
    }
  const double decomposed = content_kl(posts, prior3);
  const std::size_t big = 3 * k;
  std::vector<double> bm(big), bs(big), ba(big), bc(big * big, 0.0);
  for (std::size_t dim = 0; dim < 3; ++dim)
    for (std::size_t i = 0; i < k; ++i) {
      bm[dim * k + i] = posts[i].mean[dim];
      bs[dim * k + i] = posts[i].var[dim];
      ba[dim * k + i] = prior3.mean[dim][i];
      for (std::size_t j = 0; j < k; ++j)
        bc[(dim * k + i) * big + dim * k + j] = prior3.cov[dim].at(i, j);
    }
  const double monolithic = kl_diag_full(bm, bs, ba, SpdMatrix(big, bc));
  const double gap = std::abs(decomposed - monolithic);
  report(4, "kl closed form", mc_ok && gap < 1e-9,
         "worst z " + fmt(worst_z) + ", decomposition gap " + fmt(gap, "%.3g"));
}

void criterion_poe() {
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> um(-2.0, 2.0), uv(0.3, 3.0);
  double worst_grid = 0.0, worst_inv = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 2 + rng() % 4;
    std::vector<double> means(n), vars(n);
    std::vector<DiagGaussian> experts(n);
    for (std::size_t i = 0; i < n; ++i) {
      means[i] = um(rng);
      vars[i] = uv(rng);
      experts[i] = DiagGaussian{{means[i]}, {vars[i]}};
    }
    DiagGaussian fused = poe_fuse(experts);
    oracle::GridMoments gm = oracle::product_of_gaussians_grid(means, vars);
    worst_grid = std::max(worst_grid, std::abs(fused.mean[0] - gm.mean));
    worst_grid = std::max(worst_grid, std::abs(fused.var[0] - gm.var));

    std::vector<DiagGaussian> shuffled = experts;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    DiagGaussian perm = poe_fuse(shuffled);
    worst_inv = std::max(worst_inv, std::abs(perm.mean[0] - fused.mean[0]));
    worst_inv = std::max(worst_inv, std::abs(perm.var[0] - fused.var[0]));

    DiagGaussian inc = experts[0];
    for (std::size_t i = 1; i < n; ++i) inc = poe_fuse({inc, experts[i]});
    worst_inv = std::max(worst_inv, std::abs(inc.mean[0] - fused.mean[0]));
    worst_inv = std::max(worst_inv, std::abs(inc.var[0] - fused.var[0]));
  }
  report(5, "poe fusion", worst_grid < 1e-3 && worst_inv < 1e-12,
         "grid dev " + fmt(worst_grid, "%.3g") + ", invariance dev " +
             fmt(worst_inv, "%.3g"));
}

void criterion_ordering() {
  const std::size_t samples = 100000;
  const std::vector<double> sig{0.5, 1.0, 0.25, 2.0, 0.75};
  std::vector<double> delta(sig.size());
  for (std::size_t i = 0; i < sig.size(); ++i) delta[i] = 3.0 * sig[i];
  std::vector<double> sigma{1.0};
  sigma.insert(sigma.end(), sig.begin(), sig.end());

  std::mt19937_64 rng(606);
  std::vector<std::size_t> inversions(sig.size(), 0);
  for (std::size_t s = 0; s < samples; ++s) {
    auto v = sample_chain_raw(0.0, delta, sigma, rng);
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i] < v[i - 1]) ++inversions[i - 1];
  }
  double lo = 1.0, hi = 0.0;
  for (std::size_t c : inversions) {
    const double f = double(c) / double(samples);
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  const bool links_ok = lo >= 0.0005 && hi <= 0.0025;

  SpacingParams p = SpacingParams::init(2, 6);
  std::mt19937_64 rng2(607);
  std::size_t any = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    auto v = sample_chain(p, rng2);
    bool inv = false;
    for (const auto& dim : v)
      for (std::size_t i = 1; i < dim.size(); ++i)
        if (dim[i] < dim[i - 1]) inv = true;
    if (inv) ++any;
  }
  const double any_freq = double(any) / double(samples);
  report(6, "ordering enforcement", links_ok && any_freq < 0.001,
         "3-sigma link freq [" + fmt(lo) + ", " + fmt(hi) +
             "], default-init freq " + fmt(any_freq));
}

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t dim = 16, dc = 2, ds = 2, k = 3;
  Model m = Model::init(dim, dc, ds, k, PriorMode::ordinal, 99);
  m.prior = random_spacing(dc, k, 98);
  auto data = random_instances(6, dim, k, 100);
  GroupedBatch batch{{{0, 3}, {1, 4}, {2, 5}}};
  std::mt19937_64 rng(101);
  ElboNoise noise = make_elbo_noise(m, batch, rng);

  ElboGrads eg = elbo_with_grads(m, data, batch, noise);
  std::vector<double> theta = flatten_params(m);
  std::vector<double> analytic;
  for (const auto& g : eg.grads)
    analytic.insert(analytic.end(), g.values.begin(), g.values.end());

  // Every coordinate of the small tensors, a spread of 16 per large one.
  std::vector<std::size_t> coords;
  std::size_t off = 0;
  for (const auto& p : parameters(m)) {
    const std::size_t n = p.values->size();
    if (n <= 32) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(off + i);
    } else {
      for (std::size_t t = 0; t < 16; ++t)
        coords.push_back(off + t * (n - 1) / 15);
    }
    off += n;
  }

  auto f = [&](std::span<const double> th) {
    Model mm = m;
    unflatten_params(mm, th);
    return elbo_value(mm, data, batch, noise).total;
  };
  oracle::GradCheck gc = oracle::check_gradient(f, theta, analytic, coords);
  const double secs = seconds_since(t0);
  report(7, "elbo gradients",
         gc.checked == coords.size() && gc.max_rel_err < 1e-4 && secs < 30.0,
         std::to_string(gc.checked) + " coords, max rel err " +
             fmt(gc.max_rel_err, "%.3g") + ", " + fmt(secs) + "s");
}

struct DeskRun {
  std::vector<LabeledInstance> train_data, test_data;
  TrainConfig cfg;
  double triplet = 0.0;
  double rho = 0.0;
};

DeskRun criterion_desk_scale() {
  const auto t0 = std::chrono::steady_clock::now();
  DeskRun r;
  r.train_data = generate(100, 6000, 6);
  r.test_data = generate(101, 600, 6);
  r.cfg.epochs = 50;
  r.cfg.batch_size = 256;
  r.cfg.d_c = 10;
  r.cfg.d_s = 10;
  r.cfg.k = 6;
  r.cfg.seed = 42;
  r.cfg.prior_mode = PriorMode::ordinal;
  r.cfg.checkpoint_path = tmp_path("desk_ordinal.ckpt");
  r.cfg.log_path = tmp_path("desk_ordinal.log.csv");
  Checkpoint ck = train(r.cfg, r.train_data);

  const std::uint64_t eval_seed = 7;
  const double mae_c20 = content_mae(ck.model, r.train_data, r.test_data,
                                     LatentKind::content, 20, eval_seed);
  const double mae_c1 = content_mae(ck.model, r.train_data, r.test_data,
                                    LatentKind::content, 1, eval_seed);
  const double mae_s = content_mae(ck.model, r.train_data, r.test_data,
                                   LatentKind::style, 20, eval_seed);
  auto vecs = infer_group_vectors(ck.model, r.test_data, 20, eval_seed);
  r.triplet = triplet_satisfaction(vecs);
  DistanceMap dm = distance_map(vecs);
  std::vector<double> ref(dm.k * dm.k);
  for (std::size_t i = 0; i < dm.k; ++i)
    for (std::size_t j = 0; j < dm.k; ++j)
      ref[i * dm.k + j] = double(i > j ? i - j : j - i);
  r.rho = spearman(dm.d, ref);
  const double secs = seconds_since(t0);

  const bool ok = secs < 900.0 && mae_c20 < 0.5 && mae_s >= 2.0 * mae_c20 &&
                  mae_c20 <= mae_c1 + 0.1 && r.triplet >= 0.95 && r.rho >= 0.9;
  report(8, "desk-scale separation", ok,
         "content mae " + fmt(mae_c20) + " (M=1: " + fmt(mae_c1) +
             "), style mae " + fmt(mae_s) + ", triplet " + fmt(r.triplet) +
             ", spearman " + fmt(r.rho) + ", " + fmt(secs, "%.0f") + "s");
  return r;
}

void criterion_ablation(const DeskRun& desk) {
  TrainConfig cfg = desk.cfg;
  cfg.prior_mode = PriorMode::iid;
  cfg.checkpoint_path = tmp_path("desk_iid.ckpt");
  cfg.log_path = tmp_path("desk_iid.log.csv");
  Checkpoint ck = train(cfg, desk.train_data);

  auto vecs = infer_group_vectors(ck.model, desk.test_data, 20, 7);
  const double triplet_iid = triplet_satisfaction(vecs);
  DistanceMap dm = distance_map(vecs);
  std::vector<double> ref(dm.k * dm.k);
  for (std::size_t i = 0; i < dm.k; ++i)
    for (std::size_t j = 0; j < dm.k; ++j)
      ref[i * dm.k + j] = double(i > j ? i - j : j - i);
  const double rho_iid = spearman(dm.d, ref);

  const bool ok =
      triplet_iid <= desk.triplet + 0.02 && desk.rho >= rho_iid;
  report(9, "iid ablation", ok,
         "triplet " + fmt(triplet_iid) + " vs " + fmt(desk.triplet) +
             ", spearman " + fmt(rho_iid) + " vs " + fmt(desk.rho));
}

void criterion_scaling() {
  auto bench = [](std::size_t d) {
    SpacingParams p = random_spacing(d, 17, 1234);
    ChainGaussian prior = joint_moments(p);
    for (const auto& c : prior.cov) c.chol();
    std::mt19937_64 rng(1000 + d);
    std::uniform_real_distribution<double> um(-1.0, 1.0), uv(0.4, 1.6);
    std::vector<DiagGaussian> posts(17);
    for (auto& q : posts)
      for (std::size_t dim = 0; dim < d; ++dim) {
        q.mean.push_back(um(rng));
        q.var.push_back(uv(rng));
      }
    double sink = content_kl(posts, prior);
    double best = 1e300;
    for (int trial = 0; trial < 5; ++trial) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int rep = 0; rep < 2000; ++rep) sink += content_kl(posts, prior);
      best = std::min(best, seconds_since(t0));
    }
    return std::pair<double, double>(best, sink);
  };
  const auto [t10, s10] = bench(10);
  const auto [t100, s100] = bench(100);
  const double ratio = t100 / t10;
  const bool finite = std::isfinite(s10) && std::isfinite(s100);
  report(10, "kl scaling", ratio <= 15.0 && finite,
         "d=10: " + fmt(t10 * 1e3) + "ms, d=100: " + fmt(t100 * 1e3) +
             "ms, ratio " + fmt(ratio));
}

void criterion_determinism() {
  auto data = generate(55, 120, 6);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 64;
  cfg.d_c = 3;
  cfg.d_s = 3;
  cfg.k = 6;
  cfg.seed = 5;
  cfg.checkpoint_path = tmp_path("det_a.ckpt");
  cfg.log_path = tmp_path("det_a.log.csv");
  Checkpoint ck_a = train(cfg, data);
  cfg.checkpoint_path = tmp_path("det_b.ckpt");
  cfg.log_path = tmp_path("det_b.log.csv");
  Checkpoint ck_b = train(cfg, data);
  const bool ckpt_ok =
      slurp(tmp_path("det_a.ckpt")) == slurp(tmp_path("det_b.ckpt"));
  const bool log_ok = drop_last_field(slurp(tmp_path("det_a.log.csv"))) ==
                      drop_last_field(slurp(tmp_path("det_b.log.csv")));

  run_eval(ck_a.model, data, data, {1, 2}, tmp_path("det_eval_a"), 9);
  run_eval(ck_b.model, data, data, {1, 2}, tmp_path("det_eval_b"), 9);
  bool eval_ok = true;
  for (const char* name : {"metrics.csv", "distmap.csv", "distmap.pgm",
                           "distmap_ideal.pgm", "swap.pgm"})
    eval_ok = eval_ok &&
              slurp(tmp_path("det_eval_a/") + name) ==
                  slurp(tmp_path("det_eval_b/") + name) &&
              !slurp(tmp_path("det_eval_a/") + name).empty();

  auto orig = generate(77, 40, 6);
  save(tmp_path("roundtrip.bin"), orig, 6);
  Dataset back = load(tmp_path("roundtrip.bin"));
  bool rt_ok = back.k == 6 && back.instances.size() == orig.size();
  double worst_px = 0.0;
  for (std::size_t i = 0; rt_ok && i < orig.size(); ++i) {
    rt_ok = rt_ok && back.instances[i].c == orig[i].c;
    for (std::size_t px = 0; px < orig[i].x.size(); ++px)
      worst_px = std::max(
          worst_px, std::abs(back.instances[i].x[px] - orig[i].x[px]));
  }
  rt_ok = rt_ok && worst_px <= 1.0 / 255.0;

  report(11, "determinism and formats", ckpt_ok && log_ok && eval_ok && rt_ok,
         std::string("checkpoints ") + (ckpt_ok ? "equal" : "DIFFER") +
             ", logs (minus wall-time column) " + (log_ok ? "equal" : "DIFFER") +
             ", eval artifacts " + (eval_ok ? "equal" : "DIFFER") +
             ", round-trip dev " + fmt(worst_px, "%.3g"));
}

}  // namespace

int main() {
  criterion_moments();
  criterion_chain_density();
  criterion_fixture();
  criterion_kl();
  criterion_poe();
  criterion_ordering();
  criterion_gradients();
  DeskRun desk = criterion_desk_scale();
  criterion_ablation(desk);
  criterion_scaling();
  criterion_determinism();
  std::printf("acceptance: %s\n", all_ok ? "pass" : "FAIL");
  return all_ok ? 0 : 1;
}
