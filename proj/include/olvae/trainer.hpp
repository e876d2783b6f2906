#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "olvae/elbo.hpp"

namespace olvae {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::size_t d_c = 10;
  std::size_t d_s = 10;
  std::size_t k = 6;
  std::uint64_t seed = 0;
  PriorMode prior_mode = PriorMode::ordinal;
  std::string checkpoint_path;  // empty: do not write
  std::string log_path;         // empty: do not write
};

const char* prior_mode_name(PriorMode mode);
PriorMode parse_prior_mode(const std::string& name);

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// First and second moment buffers for one parameter array; t counts steps
// taken on this array and drives bias correction.
struct AdamState {
  std::size_t t = 0;
  std::vector<double> m, v;
};

// In-place minimization step; sizes the state buffers on first use.
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, double lr);

struct Checkpoint {
  TrainConfig config;
  Model model;
};

// Maximizes the ELBO with per-epoch CSV logging (`epoch,recon,content_kl,
// style_kl,total,seconds`, term values averaged per instance). Deterministic
// given (config, dataset) in everything except the seconds column.
Checkpoint train(const TrainConfig& config,
                 const std::vector<LabeledInstance>& data);

// Text manifest (versioned, config echo, parameter catalog) followed by the
// concatenated parameter arrays as little-endian 64-bit doubles. Round-trips
// bit for bit.
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace olvae
