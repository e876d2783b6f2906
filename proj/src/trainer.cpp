#include "olvae/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "olvae/dataset.hpp"
#include "olvae/errors.hpp"

namespace olvae {

const char* prior_mode_name(PriorMode mode) {
  return mode == PriorMode::ordinal ? "ordinal" : "iid";
}

PriorMode parse_prior_mode(const std::string& name) {
  if (name == "ordinal") return PriorMode::ordinal;
  if (name == "iid") return PriorMode::iid;
  throw FormatError("unknown prior mode '" + name + "'");
}

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, double lr) {
  const std::size_t n = params.size();
  if (grads.size() != n)
    throw ContractError("adam_step: gradient size " +
                        std::to_string(grads.size()) +
                        " does not match parameter size " + std::to_string(n));
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  if (state.m.size() != n || state.v.size() != n)
    throw ContractError("adam_step: state size does not match parameters");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, double(state.t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, double(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * grads[i];
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
  }
}

namespace {

void require_finite(double v, const char* term, std::size_t epoch) {
  if (!std::isfinite(v))
    throw DomainError(std::string("non-finite ") + term + " in epoch " +
                      std::to_string(epoch) + ": " + std::to_string(v));
}

std::string format_row(std::size_t epoch, const ElboBreakdown& b,
                       double seconds) {
  char buf[192];
  std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g", epoch,
                b.reconstruction, b.content_kl, b.style_kl, b.total, seconds);
  return buf;
}

}  // namespace

Checkpoint train(const TrainConfig& config,
                 const std::vector<LabeledInstance>& data) {
  if (config.batch_size == 0 || config.learning_rate <= 0.0 || config.k == 0 ||
      config.d_c == 0 || config.d_s == 0)
    throw ContractError("train: config fields must be positive");
  if (data.empty()) throw ContractError("train: dataset is empty");
  const std::size_t dim = data[0].x.size();
  for (const auto& inst : data) {
    if (inst.x.size() != dim)
      throw ContractError("train: instances have inconsistent sizes");
    if (inst.c < 1 || inst.c > config.k)
      throw ContractError("train: label " + std::to_string(inst.c) +
                          " outside 1.." + std::to_string(config.k));
  }

  Checkpoint ckpt{config, Model::init(dim, config.d_c, config.d_s, config.k,
                                      config.prior_mode, config.seed)};
  Model& model = ckpt.model;
  auto catalog = parameters(model);
  std::vector<AdamState> states(catalog.size());
  std::mt19937_64 noise_rng(mix_seed(config.seed, 0x6e6f697365ULL));

  std::ofstream log;
  if (!config.log_path.empty()) {
    log.open(config.log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open log file " + config.log_path);
    log << "epoch,recon,content_kl,style_kl,total,seconds\n";
  }

  std::vector<double> neg;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    auto batches = make_batches(data, config.k, config.batch_size,
                                mix_seed(config.seed, epoch));
    ElboBreakdown sums;
    for (const GroupedBatch& batch : batches) {
      ElboNoise noise = make_elbo_noise(model, batch, noise_rng);
      ElboGrads eg = elbo_with_grads(model, data, batch, noise);
      require_finite(eg.values.reconstruction, "reconstruction", epoch);
      require_finite(eg.values.content_kl, "content_kl", epoch);
      require_finite(eg.values.style_kl, "style_kl", epoch);
      sums.reconstruction += eg.values.reconstruction;
      sums.content_kl += eg.values.content_kl;
      sums.style_kl += eg.values.style_kl;
      sums.total += eg.values.total;
      for (std::size_t i = 0; i < catalog.size(); ++i) {
        const auto& g = eg.grads[i].values;
        neg.assign(g.size(), 0.0);
        for (std::size_t j = 0; j < g.size(); ++j) neg[j] = -g[j];
        adam_step(*catalog[i].values, neg, states[i], config.learning_rate);
      }
    }
    const double inv_n = 1.0 / double(data.size());
    ElboBreakdown row{sums.reconstruction * inv_n, sums.content_kl * inv_n,
                      sums.style_kl * inv_n, sums.total * inv_n};
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (log) log << format_row(epoch, row, seconds) << "\n";
  }
  if (log) log.flush();

  if (!config.checkpoint_path.empty()) save_checkpoint(config.checkpoint_path, ckpt);
  return ckpt;
}

namespace {

constexpr char kCkptMagic[] = "OLVC1";

void put_f64(std::ofstream& out, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::ifstream& in, std::size_t index) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw FormatError("checkpoint values truncated at double " +
                      std::to_string(index));
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

std::string manifest_line(std::ifstream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line))
    throw FormatError(std::string("checkpoint manifest truncated before ") + what);
  return line;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint file " + path);
  const Model& m = c.model;
  char lr[64];
  std::snprintf(lr, sizeof(lr), "%.17g", c.config.learning_rate);
  out << kCkptMagic << "\n"
      << "data_dim " << m.data_dim << "\n"
      << "d_c " << m.d_c << "\n"
      << "d_s " << m.d_s << "\n"
      << "k " << m.k << "\n"
      << "prior_mode " << prior_mode_name(m.prior_mode) << "\n"
      << "seed " << c.config.seed << "\n"
      << "epochs " << c.config.epochs << "\n"
      << "batch_size " << c.config.batch_size << "\n"
      << "learning_rate " << lr << "\n";
  auto catalog = parameters(const_cast<Model&>(m));
  out << "params " << catalog.size() << "\n";
  for (const auto& p : catalog) {
    out << p.name << " " << p.shape.size();
    for (std::size_t d : p.shape) out << " " << d;
    out << "\n";
  }
  out << "end\n";
  for (const auto& p : catalog)
    for (double v : *p.values) put_f64(out, v);
  if (!out) throw IoError("write failed for checkpoint file " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint file " + path);
  if (manifest_line(in, "magic") != kCkptMagic)
    throw FormatError("bad checkpoint magic in " + path);

  std::map<std::string, std::string> fields;
  std::string line;
  std::size_t nparams = 0;
  while (true) {
    line = manifest_line(in, "params header");
    std::istringstream ls(line);
    std::string key, value;
    if (!(ls >> key >> value))
      throw FormatError("malformed checkpoint manifest line '" + line + "'");
    if (key == "params") {
      nparams = std::stoul(value);
      break;
    }
    fields[key] = value;
  }
  for (const char* req : {"data_dim", "d_c", "d_s", "k", "prior_mode", "seed",
                          "epochs", "batch_size", "learning_rate"})
    if (!fields.count(req))
      throw FormatError(std::string("checkpoint manifest missing field ") + req);

  Checkpoint c;
  c.config.d_c = std::stoul(fields["d_c"]);
  c.config.d_s = std::stoul(fields["d_s"]);
  c.config.k = std::stoul(fields["k"]);
  c.config.prior_mode = parse_prior_mode(fields["prior_mode"]);
  c.config.seed = std::stoull(fields["seed"]);
  c.config.epochs = std::stoul(fields["epochs"]);
  c.config.batch_size = std::stoul(fields["batch_size"]);
  c.config.learning_rate = std::stod(fields["learning_rate"]);

  const std::size_t dim = std::stoul(fields["data_dim"]);
  Model& m = c.model;
  m.data_dim = dim;
  m.d_c = c.config.d_c;
  m.d_s = c.config.d_s;
  m.k = c.config.k;
  m.prior_mode = c.config.prior_mode;
  m.content_enc = EncoderNet::zero(dim, m.d_c);
  m.style_enc = EncoderNet::zero(dim, m.d_s);
  m.dec = DecoderNet::zero(m.d_c + m.d_s, dim);
  m.prior = SpacingParams::init(m.d_c, m.k);

  auto catalog = parameters(m);
  if (nparams != catalog.size())
    throw FormatError("checkpoint lists " + std::to_string(nparams) +
                      " parameters, expected " + std::to_string(catalog.size()));
  for (const auto& p : catalog) {
    line = manifest_line(in, ("entry " + p.name).c_str());
    std::istringstream ls(line);
    std::string name;
    std::size_t ndim = 0;
    if (!(ls >> name >> ndim) || name != p.name)
      throw FormatError("checkpoint entry '" + line + "' does not match expected " +
                        p.name);
    ad::Shape shape(ndim);
    for (std::size_t i = 0; i < ndim; ++i)
      if (!(ls >> shape[i]))
        throw FormatError("truncated shape for checkpoint entry " + p.name);
    if (shape != p.shape)
      throw FormatError("checkpoint shape mismatch for " + p.name);
  }
  if (manifest_line(in, "end marker") != "end")
    throw FormatError("checkpoint manifest missing end marker");

  std::size_t index = 0;
  for (const auto& p : catalog)
    for (double& v : *p.values) v = get_f64(in, index++);
  char extra;
  if (in.read(&extra, 1))
    throw FormatError("trailing bytes after checkpoint values in " + path);
  return c;
}

}  // namespace olvae
