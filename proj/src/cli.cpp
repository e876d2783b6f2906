#include "olvae/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "olvae/dataset.hpp"
#include "olvae/errors.hpp"
#include "olvae/evalsuite.hpp"
#include "olvae/oracles.hpp"
#include "olvae/trainer.hpp"

namespace olvae {
namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool selftest_moments(std::ostream& out) {
  std::mt19937_64 rng(7);
  SpacingParams p = SpacingParams::init(2, 4);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  for (double& v : p.mu1) v = u(rng);
  for (double& v : p.delta_bar) v = u(rng);
  for (double& v : p.sigma_bar) v = u(rng);
  ChainGaussian an = joint_moments(p);

  std::vector<oracle::MomentAccumulator> acc(p.d, oracle::MomentAccumulator(p.k));
  for (int s = 0; s < 20000; ++s) {
    auto v = sample_chain(p, rng);
    for (std::size_t dim = 0; dim < p.d; ++dim) acc[dim].add(v[dim]);
  }
  double worst = 0.0;
  for (std::size_t dim = 0; dim < p.d; ++dim) {
    auto mean = acc[dim].mean();
    auto cov = acc[dim].covariance();
    for (std::size_t i = 0; i < p.k; ++i) {
      worst = std::max(worst, std::abs(mean[i] - an.mean[dim][i]));
      for (std::size_t j = 0; j < p.k; ++j)
        worst = std::max(worst, std::abs(cov[i * p.k + j] - an.cov[dim].at(i, j)));
    }
  }
  const bool ok = worst < 0.1;
  out << "moments: " << (ok ? "pass" : "FAIL") << " (max moment deviation "
      << fmt17(worst) << ")\n";
  return ok;
}

bool selftest_kl(std::ostream& out) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> um(-1.5, 1.5), uv(0.3, 2.0);
  const std::size_t k = 3;
  SpacingParams p = SpacingParams::init(1, k);
  p.mu1[0] = um(rng);
  for (double& v : p.delta_bar) v = um(rng) * 0.4;
  ChainGaussian prior = joint_moments(p);

  std::vector<double> m(k), s(k);
  for (std::size_t i = 0; i < k; ++i) {
    m[i] = um(rng);
    s[i] = uv(rng);
  }
  const double closed = kl_diag_full(m, s, prior.mean[0], prior.cov[0]);

  std::vector<double> cov(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) cov[i * k + j] = prior.cov[0].at(i, j);
  oracle::McKl mc(m, s, prior.mean[0], cov);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> z(k);
  for (int n = 0; n < 40000; ++n) {
    for (std::size_t i = 0; i < k; ++i) z[i] = m[i] + std::sqrt(s[i]) * unit(rng);
    mc.add(z);
  }
  oracle::McEstimate est = mc.estimate();
  const double gap = std::abs(closed - est.value);
  const bool ok = closed >= 0.0 && gap < 4.0 * est.std_error;
  out << "kl: " << (ok ? "pass" : "FAIL") << " (closed " << fmt17(closed)
      << ", mc " << fmt17(est.value) << " +- " << fmt17(est.std_error) << ")\n";
  return ok;
}

bool selftest_poe(std::ostream& out) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> um(-2.0, 2.0), uv(0.3, 3.0);
  double worst = 0.0;
  for (int set = 0; set < 20; ++set) {
    const std::size_t ne = 2 + bounded_uniform(rng, 4);
    std::vector<DiagGaussian> experts;
    std::vector<double> means, vars;
    for (std::size_t e = 0; e < ne; ++e) {
      means.push_back(um(rng));
      vars.push_back(uv(rng));
      experts.push_back({{means.back()}, {vars.back()}});
    }
    DiagGaussian fused = poe_fuse(experts);
    oracle::GridMoments grid = oracle::product_of_gaussians_grid(means, vars);
    worst = std::max(worst, std::abs(fused.mean[0] - grid.mean));
    worst = std::max(worst, std::abs(fused.var[0] - grid.var));
  }
  const bool ok = worst < 1e-3;
  out << "poe: " << (ok ? "pass" : "FAIL") << " (max grid deviation "
      << fmt17(worst) << ")\n";
  return ok;
}

bool selftest_gradient(std::ostream& out) {
  const std::size_t k = 3;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> um(-1.0, 1.0), uv(0.4, 2.0);
  std::vector<double> x;  // m, s, a, then row-major C
  for (std::size_t i = 0; i < k; ++i) x.push_back(um(rng));
  for (std::size_t i = 0; i < k; ++i) x.push_back(uv(rng));
  for (std::size_t i = 0; i < k; ++i) x.push_back(um(rng));
  std::vector<double> b(k * k);
  for (double& v : b) v = um(rng);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double dot = 0.0;
      for (std::size_t l = 0; l < k; ++l) dot += b[i * k + l] * b[j * k + l];
      x.push_back(dot + (i == j ? 1.5 : 0.0));
    }

  auto build = [&](std::span<const double> v, ad::Tape& t) {
    ad::Var m = t.leaf(ad::Tensor({k}, {v.begin(), v.begin() + 3}));
    ad::Var s = t.leaf(ad::Tensor({k}, {v.begin() + 3, v.begin() + 6}));
    ad::Var a = t.leaf(ad::Tensor({k}, {v.begin() + 6, v.begin() + 9}));
    ad::Var c = t.leaf(ad::Tensor({k, k}, {v.begin() + 9, v.end()}));
    return std::tuple{kl_diag_full_op(m, s, a, c), m, s, a, c};
  };
  auto f = [&](std::span<const double> v) {
    ad::Tape t;
    return t.values_of(std::get<0>(build(v, t)))[0];
  };
  ad::Tape t;
  auto [kl, m, s, a, c] = build(x, t);
  t.backward(kl);
  std::vector<double> analytic;
  for (ad::Var v : {m, s, a, c}) {
    auto g = t.grad(v);
    analytic.insert(analytic.end(), g.begin(), g.end());
  }
  std::vector<std::size_t> coords(x.size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  oracle::GradCheck gc = oracle::check_gradient(f, x, analytic, coords);
  const bool ok = gc.checked == coords.size() && gc.max_rel_err < 1e-4;
  out << "gradient: " << (ok ? "pass" : "FAIL") << " (max rel err "
      << fmt17(gc.max_rel_err) << ")\n";
  return ok;
}

void cmd_gen_data(std::uint64_t seed, std::size_t n, std::size_t k,
                  const std::string& out_path) {
  auto data = generate(seed, n, k);
  save(out_path, data, k);
  std::cout << "wrote " << out_path << " (N=" << data.size() << ", K=" << k
            << ")\n";
}

struct TrainFlags {
  std::string data, out, log, config_path;
  TrainConfig cfg;
  std::string prior = "ordinal";
};

// Applies key=value lines from `path` to options of `cmd` that were not given
// on the command line, so explicit flags win over the file.
void apply_config_file(CLI::App& cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CLI::ConfigError("expected key=value, got: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    CLI::Option* opt = cmd.get_option_no_throw("--" + key);
    if (opt == nullptr) throw CLI::ConfigError("unknown config key: " + key);
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

void cmd_train(TrainFlags& f) {
  Dataset ds = load(f.data);
  f.cfg.k = ds.k;
  f.cfg.prior_mode = parse_prior_mode(f.prior);
  f.cfg.checkpoint_path = f.out;
  f.cfg.log_path = f.log.empty() ? f.out + ".log.csv" : f.log;
  train(f.cfg, ds.instances);
  std::cout << "wrote " << f.cfg.checkpoint_path << " and " << f.cfg.log_path
            << "\n";
}

void cmd_eval(const std::string& ckpt_path, const std::string& train_path,
              const std::string& test_path, std::vector<std::size_t> m_list,
              const std::string& out_dir, std::uint64_t seed) {
  Checkpoint c = load_checkpoint(ckpt_path);
  Dataset train_ds = load(train_path);
  Dataset test_ds = load(test_path);
  if (train_ds.k != c.model.k || test_ds.k != c.model.k)
    throw ContractError("dataset K does not match checkpoint K=" +
                        std::to_string(c.model.k));
  std::sort(m_list.begin(), m_list.end());
  m_list.erase(std::unique(m_list.begin(), m_list.end()), m_list.end());
  EvalReport r = run_eval(c.model, train_ds.instances, test_ds.instances,
                          m_list, out_dir, seed);
  for (const auto& [mm, v] : r.content_mae_by_m)
    std::cout << "mae content M=" << mm << ": " << fmt17(v) << "\n";
  for (const auto& [mm, v] : r.style_mae_by_m)
    std::cout << "mae style M=" << mm << ": " << fmt17(v) << "\n";
  if (c.model.k >= 3)
    std::cout << "triplet satisfaction: " << fmt17(r.triplet_rate) << "\n";
  for (const auto& path : r.artifacts) std::cout << "wrote " << path << "\n";
}

void cmd_sample_prior(const std::string& ckpt_path, std::size_t d,
                      std::size_t k, std::size_t count, std::uint64_t seed,
                      const std::string& out_dir) {
  SpacingParams p = ckpt_path.empty()
                        ? SpacingParams::init(d, k)
                        : load_checkpoint(ckpt_path).model.prior;
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir);
  auto path_in = [&](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };

  std::mt19937_64 rng(seed);
  std::vector<oracle::MomentAccumulator> acc(p.d,
                                             oracle::MomentAccumulator(p.k));
  const std::string samples_path = path_in("samples.csv");
  {
    std::ofstream out(samples_path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + samples_path);
    for (std::size_t dim = 1; dim <= p.d; ++dim)
      for (std::size_t lv = 1; lv <= p.k; ++lv)
        out << (dim == 1 && lv == 1 ? "" : ",") << "v" << dim << "_" << lv;
    out << "\n";
    for (std::size_t s = 0; s < count; ++s) {
      auto v = sample_chain(p, rng);
      for (std::size_t dim = 0; dim < p.d; ++dim) {
        acc[dim].add(v[dim]);
        for (std::size_t lv = 0; lv < p.k; ++lv)
          out << (dim == 0 && lv == 0 ? "" : ",") << fmt17(v[dim][lv]);
      }
      out << "\n";
    }
  }

  ChainGaussian an = joint_moments(p);
  const std::string moments_path = path_in("moments.csv");
  double worst = 0.0;
  {
    std::ofstream out(moments_path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + moments_path);
    out << "kind,dim,i,j,analytic,empirical,abs_diff\n";
    for (std::size_t dim = 0; dim < p.d; ++dim) {
      auto mean = acc[dim].mean();
      auto cov = acc[dim].covariance();
      for (std::size_t i = 0; i < p.k; ++i) {
        const double diff = std::abs(mean[i] - an.mean[dim][i]);
        worst = std::max(worst, diff);
        out << "mean," << dim + 1 << "," << i + 1 << ",,"
            << fmt17(an.mean[dim][i]) << "," << fmt17(mean[i]) << ","
            << fmt17(diff) << "\n";
      }
      for (std::size_t i = 0; i < p.k; ++i)
        for (std::size_t j = 0; j < p.k; ++j) {
          const double e = cov[i * p.k + j];
          const double diff = std::abs(e - an.cov[dim].at(i, j));
          worst = std::max(worst, diff);
          out << "cov," << dim + 1 << "," << i + 1 << "," << j + 1 << ","
              << fmt17(an.cov[dim].at(i, j)) << "," << fmt17(e) << ","
              << fmt17(diff) << "\n";
        }
    }
  }
  std::cout << "wrote " << samples_path << " and " << moments_path
            << " (max moment deviation " << fmt17(worst) << ")\n";
}

void cmd_swap(const std::string& ckpt_path, const std::string& data_path,
              std::size_t msamples, std::uint64_t seed,
              const std::string& out_path) {
  Checkpoint c = load_checkpoint(ckpt_path);
  Dataset ds = load(data_path);
  if (ds.k != c.model.k)
    throw ContractError("dataset K does not match checkpoint K=" +
                        std::to_string(c.model.k));
  auto vectors = infer_group_vectors(c.model, ds.instances, msamples, seed);
  // First instance of each level in file order as the style sources.
  std::vector<LabeledInstance> styles;
  std::vector<bool> seen(ds.k, false);
  for (const auto& inst : ds.instances) {
    if (!seen[inst.c - 1]) {
      seen[inst.c - 1] = true;
      styles.push_back(inst);
    }
  }
  SwapGrid grid = swap_grid(c.model, styles, vectors);
  write_pgm(out_path, grid.width(), grid.height(), grid.pixels, 1.0);
  std::cout << "wrote " << out_path << " (" << grid.width() << "x"
            << grid.height() << ")\n";
}

}  // namespace

bool run_selftests(std::ostream& out) {
  bool ok = true;
  ok = selftest_moments(out) && ok;
  ok = selftest_kl(out) && ok;
  ok = selftest_poe(out) && ok;
  ok = selftest_gradient(out) && ok;
  out << "selftest: " << (ok ? "pass" : "FAIL") << "\n";
  return ok;
}

int run(std::vector<std::string> args) {
  CLI::App app{"ordinal-content VAE toolkit"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "render a synthetic dataset");
  std::uint64_t gen_seed = 0;
  std::size_t gen_n = 0, gen_k = 6;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--n", gen_n, "number of instances")->required();
  gen->add_option("--k", gen_k, "number of content levels")->capture_default_str();
  gen->add_option("--out", gen_out, "output dataset path")->required();

  auto* tr = app.add_subcommand("train", "train a model");
  TrainFlags tf;
  tr->add_option("--data", tf.data, "training dataset path (required)");
  tr->add_option("--out", tf.out, "checkpoint output path (required)");
  tr->add_option("--log", tf.log, "training log path (default <out>.log.csv)");
  tr->add_option("--epochs", tf.cfg.epochs, "training epochs")->capture_default_str();
  tr->add_option("--batch-size", tf.cfg.batch_size, "minibatch size")->capture_default_str();
  tr->add_option("--lr,--learning-rate", tf.cfg.learning_rate, "Adam learning rate")->capture_default_str();
  tr->add_option("--d-c", tf.cfg.d_c, "content latent dimension")->capture_default_str();
  tr->add_option("--d-s", tf.cfg.d_s, "style latent dimension")->capture_default_str();
  tr->add_option("--seed", tf.cfg.seed, "training seed");
  tr->add_option("--prior", tf.prior, "prior mode: ordinal or iid")->capture_default_str()
      ->check(CLI::IsMember({"ordinal", "iid"}));
  tr->add_option("--config", tf.config_path, "key=value config file");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_train, ev_test, ev_out;
  std::vector<std::size_t> ev_m{1, 20};
  std::uint64_t ev_seed = 0;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--train-data", ev_train, "training split path")->required();
  ev->add_option("--test-data", ev_test, "test split path")->required();
  ev->add_option("--m", ev_m, "samples per level for fusion")
      ->capture_default_str()
      ->delimiter(',');
  ev->add_option("--out", ev_out, "artifact output directory")->required();
  ev->add_option("--seed", ev_seed, "subset-selection seed");

  auto* sp = app.add_subcommand("sample-prior", "ancestral prior samples");
  std::string sp_ckpt, sp_out;
  std::size_t sp_d = 10, sp_k = 6, sp_count = 1000;
  std::uint64_t sp_seed = 0;
  sp->add_option("--checkpoint", sp_ckpt, "checkpoint supplying the prior");
  sp->add_option("--d", sp_d, "dimensions (without --checkpoint)")->capture_default_str();
  sp->add_option("--k", sp_k, "levels (without --checkpoint)")->capture_default_str();
  sp->add_option("--count", sp_count, "number of samples")->capture_default_str();
  sp->add_option("--seed", sp_seed, "sampling seed");
  sp->add_option("--out", sp_out, "output directory")->required();

  auto* sw = app.add_subcommand("swap", "render a content-style swap grid");
  std::string sw_ckpt, sw_data, sw_out;
  std::size_t sw_m = 10;
  std::uint64_t sw_seed = 0;
  sw->add_option("--checkpoint", sw_ckpt, "checkpoint path")->required();
  sw->add_option("--data", sw_data, "dataset supplying styles and groups")->required();
  sw->add_option("--m", sw_m, "samples per level for fusion")->capture_default_str();
  sw->add_option("--seed", sw_seed, "subset-selection seed");
  sw->add_option("--out", sw_out, "output PGM path")->required();

  auto* st = app.add_subcommand("selftest", "run the oracle suites");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
    if (tr->parsed()) {
      if (!tf.config_path.empty()) apply_config_file(*tr, tf.config_path);
      if (tf.data.empty()) throw CLI::RequiredError("--data");
      if (tf.out.empty()) throw CLI::RequiredError("--out");
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) {
      cmd_gen_data(gen_seed, gen_n, gen_k, gen_out);
    } else if (tr->parsed()) {
      cmd_train(tf);
    } else if (ev->parsed()) {
      cmd_eval(ev_ckpt, ev_train, ev_test, ev_m, ev_out, ev_seed);
    } else if (sp->parsed()) {
      cmd_sample_prior(sp_ckpt, sp_d, sp_k, sp_count, sp_seed, sp_out);
    } else if (sw->parsed()) {
      cmd_swap(sw_ckpt, sw_data, sw_m, sw_seed, sw_out);
    } else if (st->parsed()) {
      if (!run_selftests(std::cout)) return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace olvae
