#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "olvae/elbo.hpp"

namespace olvae {

// Product-of-experts fusion of `msamples` content posteriors per level
// (deterministic subset via a per-level seeded shuffle; subsets are nested
// in msamples, so fused precision grows elementwise with msamples).
std::vector<DiagGaussian> infer_group_posteriors(
    const Model& m, const std::vector<LabeledInstance>& test,
    std::size_t msamples, std::uint64_t seed);

// The means of infer_group_posteriors: one content vector per level.
std::vector<std::vector<double>> infer_group_vectors(
    const Model& m, const std::vector<LabeledInstance>& test,
    std::size_t msamples, std::uint64_t seed);

enum class LatentKind { content, style };

double mean_abs_error(std::span<const std::size_t> truth,
                      std::span<const std::size_t> predicted);

// Nearest-centroid content prediction from latents. Centroids are per-level
// means of training-split posterior means; content test latents are the fused
// group vectors, style test latents are per-instance means.
double content_mae(const Model& m, const std::vector<LabeledInstance>& train,
                   const std::vector<LabeledInstance>& test, LatentKind latent,
                   std::size_t msamples, std::uint64_t seed);

struct DistanceMap {
  std::size_t k = 0;
  std::vector<double> d;  // row-major K x K, symmetric, zero diagonal

  double at(std::size_t i, std::size_t j) const { return d[i * k + j]; }
  double max_value() const;
};

DistanceMap distance_map(const std::vector<std::vector<double>>& vectors);
// Equal-spacing reference: entries proportional to |i - j|, scaled so the
// largest entry equals max_value.
DistanceMap ideal_map(std::size_t k, double max_value);

// Fraction of i < j < l triplets with ||v_i - v_l|| strictly larger than
// both ||v_i - v_j|| and ||v_j - v_l||.
double triplet_satisfaction(const std::vector<std::vector<double>>& vectors);

// Rank correlation with average ranks on ties.
double spearman(std::span<const double> a, std::span<const double> b);

struct SwapGrid {
  std::size_t rows = 0;  // style sources; the grid adds a reference row/column
  std::size_t k = 0;
  std::vector<double> pixels;  // ((rows+1)*16) x ((k+1)*16), values in [0,1]

  std::size_t width() const { return (k + 1) * kImageSide; }
  std::size_t height() const { return (rows + 1) * kImageSide; }
};

// Row r decodes style image r's posterior-mean style against every level's
// fused content vector; the top row decodes each content vector with a zero
// style, and the left column shows the style originals.
SwapGrid swap_grid(const Model& m,
                   const std::vector<LabeledInstance>& style_images,
                   const std::vector<std::vector<double>>& content_vectors);

// P5, maxval 255; values scaled by max_value (full white), clamped to [0,1].
void write_pgm(const std::string& path, std::size_t width, std::size_t height,
               std::span<const double> values, double max_value);

struct EvalReport {
  std::vector<std::pair<std::size_t, double>> content_mae_by_m;
  std::vector<std::pair<std::size_t, double>> style_mae_by_m;
  double triplet_rate = 0.0;
  std::vector<std::string> artifacts;
};

// Writes metrics.csv, distmap.csv, distmap.pgm, distmap_ideal.pgm and
// swap.pgm into out_dir (created if missing).
EvalReport run_eval(const Model& m, const std::vector<LabeledInstance>& train,
                    const std::vector<LabeledInstance>& test,
                    const std::vector<std::size_t>& m_list,
                    const std::string& out_dir, std::uint64_t seed);

}  // namespace olvae
