#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "olvae/dataset.hpp"
#include "olvae/decoder.hpp"
#include "olvae/encoder.hpp"
#include "olvae/prior.hpp"

namespace olvae {

enum class PriorMode { ordinal, iid };

struct Model {
  std::size_t data_dim = 0;
  std::size_t d_c = 0;
  std::size_t d_s = 0;
  std::size_t k = 0;
  PriorMode prior_mode = PriorMode::ordinal;
  EncoderNet content_enc;  // data_dim -> d_c posterior
  EncoderNet style_enc;    // data_dim -> d_s posterior
  DecoderNet dec;          // (d_c + d_s) -> data_dim
  SpacingParams prior;     // d_c chains over k levels

  static Model init(std::size_t data_dim, std::size_t d_c, std::size_t d_s,
                    std::size_t k, PriorMode mode, std::uint64_t seed);
};

// Named view of every learnable array in a stable catalog order; the trainer
// and checkpoint code iterate this instead of knowing the model layout.
struct ParamRef {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double>* values;
};
std::vector<ParamRef> parameters(Model& m);

struct ElboBreakdown {
  double reconstruction = 0.0;
  double content_kl = 0.0;
  double style_kl = 0.0;
  double total = 0.0;  // reconstruction - content_kl - style_kl, as computed
};

// Per-step noise keyed by identity — content by level, style by global
// instance index — so reordering groups or members cannot change the ELBO.
struct ElboNoise {
  std::vector<std::vector<double>> content;          // [K], each d_c
  std::map<std::size_t, std::vector<double>> style;  // instance index -> d_s
};
ElboNoise make_elbo_noise(const Model& m, const GroupedBatch& batch,
                          std::mt19937_64& rng);

ElboBreakdown elbo_value(const Model& m,
                         const std::vector<LabeledInstance>& data,
                         const GroupedBatch& batch, const ElboNoise& noise);

struct ElboGrads {
  ElboBreakdown values;
  std::vector<ad::Tensor> grads;  // d(total)/d(param), catalog order
};
ElboGrads elbo_with_grads(const Model& m,
                          const std::vector<LabeledInstance>& data,
                          const GroupedBatch& batch, const ElboNoise& noise);

// The Eq.-style per-dimension decomposition on numeric inputs: posteriors[i]
// is the fused group posterior of level i+1 over d_c coordinates.
double content_kl(const std::vector<DiagGaussian>& posteriors,
                  const ChainGaussian& prior);

// KL( q || N(0, I) ) in closed diagonal form.
double style_kl(const DiagGaussian& q);

}  // namespace olvae
