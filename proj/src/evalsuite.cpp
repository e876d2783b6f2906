#include "olvae/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "olvae/errors.hpp"

namespace olvae {
namespace {

std::vector<std::vector<std::size_t>> group_by_level(
    const std::vector<LabeledInstance>& data, std::size_t k) {
  std::vector<std::vector<std::size_t>> groups(k);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].c < 1 || data[i].c > k)
      throw ContractError("label " + std::to_string(data[i].c) +
                          " outside 1.." + std::to_string(k));
    groups[data[i].c - 1].push_back(i);
  }
  return groups;
}

// Per-level deterministic orders; the prefix of length M is the M-subset.
std::vector<std::vector<std::size_t>> shuffled_groups(
    const std::vector<LabeledInstance>& data, std::size_t k,
    std::uint64_t seed) {
  auto groups = group_by_level(data, k);
  for (std::size_t lv = 0; lv < k; ++lv) {
    auto& g = groups[lv];
    std::mt19937_64 rng(mix_seed(seed, lv));
    for (std::size_t i = g.size(); i > 1; --i)
      std::swap(g[i - 1], g[bounded_uniform(rng, i)]);
  }
  return groups;
}

double dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> rank_with_ties(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t(0));
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * (double(i) + double(j)) + 1.0;
    for (std::size_t p = i; p <= j; ++p) ranks[idx[p]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::vector<DiagGaussian> infer_group_posteriors(
    const Model& m, const std::vector<LabeledInstance>& test,
    std::size_t msamples, std::uint64_t seed) {
  if (msamples == 0) throw ContractError("need at least one sample per level");
  auto groups = shuffled_groups(test, m.k, seed);
  std::vector<DiagGaussian> out(m.k);
  for (std::size_t lv = 0; lv < m.k; ++lv) {
    if (groups[lv].size() < msamples)
      throw ContractError("level " + std::to_string(lv + 1) + " has " +
                          std::to_string(groups[lv].size()) +
                          " test instances, need " + std::to_string(msamples));
    std::vector<DiagGaussian> experts;
    experts.reserve(msamples);
    for (std::size_t i = 0; i < msamples; ++i)
      experts.push_back(encode_numeric(m.content_enc, test[groups[lv][i]].x));
    out[lv] = poe_fuse(experts);
  }
  return out;
}

std::vector<std::vector<double>> infer_group_vectors(
    const Model& m, const std::vector<LabeledInstance>& test,
    std::size_t msamples, std::uint64_t seed) {
  auto posteriors = infer_group_posteriors(m, test, msamples, seed);
  std::vector<std::vector<double>> out;
  out.reserve(posteriors.size());
  for (auto& q : posteriors) out.push_back(std::move(q.mean));
  return out;
}

double mean_abs_error(std::span<const std::size_t> truth,
                      std::span<const std::size_t> predicted) {
  if (truth.size() != predicted.size() || truth.empty())
    throw ContractError("mean_abs_error: need matching non-empty inputs");
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    sum += std::abs(double(truth[i]) - double(predicted[i]));
  return sum / double(truth.size());
}

double content_mae(const Model& m, const std::vector<LabeledInstance>& train,
                   const std::vector<LabeledInstance>& test, LatentKind latent,
                   std::size_t msamples, std::uint64_t seed) {
  const EncoderNet& net =
      latent == LatentKind::content ? m.content_enc : m.style_enc;
  auto train_groups = group_by_level(train, m.k);
  std::vector<std::vector<double>> centroids(m.k);
  for (std::size_t lv = 0; lv < m.k; ++lv) {
    const auto& g = train_groups[lv];
    if (g.empty())
      throw ContractError("level " + std::to_string(lv + 1) +
                          " has no training instances");
    std::vector<double> c(net.latent_dim, 0.0);
    for (std::size_t idx : g) {
      DiagGaussian q = encode_numeric(net, train[idx].x);
      for (std::size_t j = 0; j < c.size(); ++j) c[j] += q.mean[j];
    }
    for (double& v : c) v /= double(g.size());
    centroids[lv] = std::move(c);
  }

  auto nearest = [&](const std::vector<double>& z) {
    std::size_t best = 0;
    double best_d = dist(z, centroids[0]);
    for (std::size_t lv = 1; lv < m.k; ++lv) {
      const double d = dist(z, centroids[lv]);
      if (d < best_d) {
        best_d = d;
        best = lv;
      }
    }
    return best + 1;
  };

  std::vector<std::size_t> truth, predicted;
  if (latent == LatentKind::content) {
    auto vectors = infer_group_vectors(m, test, msamples, seed);
    for (std::size_t lv = 0; lv < m.k; ++lv) {
      truth.push_back(lv + 1);
      predicted.push_back(nearest(vectors[lv]));
    }
  } else {
    auto test_groups = group_by_level(test, m.k);
    for (std::size_t lv = 0; lv < m.k; ++lv)
      if (test_groups[lv].empty())
        throw ContractError("level " + std::to_string(lv + 1) +
                            " has no test instances");
    for (const auto& inst : test) {
      truth.push_back(inst.c);
      predicted.push_back(nearest(encode_numeric(net, inst.x).mean));
    }
  }
  return mean_abs_error(truth, predicted);
}

double DistanceMap::max_value() const {
  double mx = 0.0;
  for (double v : d) mx = std::max(mx, v);
  return mx;
}

DistanceMap distance_map(const std::vector<std::vector<double>>& vectors) {
  const std::size_t k = vectors.size();
  if (k < 2) throw ContractError("distance map needs at least two vectors");
  for (const auto& v : vectors)
    if (v.size() != vectors[0].size())
      throw ShapeError("vectors have inconsistent dimensions");
  DistanceMap map{k, std::vector<double>(k * k, 0.0)};
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const double d = dist(vectors[i], vectors[j]);
      map.d[i * k + j] = d;
      map.d[j * k + i] = d;
    }
  return map;
}

DistanceMap ideal_map(std::size_t k, double max_value) {
  if (k < 2) throw ContractError("ideal map needs at least two levels");
  const double step = max_value / double(k - 1);
  DistanceMap map{k, std::vector<double>(k * k, 0.0)};
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      map.d[i * k + j] = step * double(i > j ? i - j : j - i);
  return map;
}

double triplet_satisfaction(const std::vector<std::vector<double>>& vectors) {
  const std::size_t k = vectors.size();
  if (k < 3) throw ContractError("triplet satisfaction needs at least three vectors");
  std::size_t satisfied = 0, total = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      for (std::size_t l = j + 1; l < k; ++l) {
        ++total;
        const double outer = dist(vectors[i], vectors[l]);
        if (outer > dist(vectors[i], vectors[j]) &&
            outer > dist(vectors[j], vectors[l]))
          ++satisfied;
      }
  return double(satisfied) / double(total);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw ContractError("spearman: need two same-length sequences");
  auto ra = rank_with_ties(a);
  auto rb = rank_with_ties(b);
  const double n = double(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0)
    throw DomainError("spearman: constant sequence has no rank correlation");
  return cov / std::sqrt(va * vb);
}

SwapGrid swap_grid(const Model& m,
                   const std::vector<LabeledInstance>& style_images,
                   const std::vector<std::vector<double>>& content_vectors) {
  if (m.data_dim != kDataDim)
    throw ContractError("swap grid renders " + std::to_string(kImageSide) +
                        "x" + std::to_string(kImageSide) + " tiles only");
  if (content_vectors.size() != m.k)
    throw ContractError("need one content vector per level");
  for (const auto& v : content_vectors)
    if (v.size() != m.d_c) throw ShapeError("content vector dimension mismatch");
  if (style_images.empty()) throw ContractError("need at least one style image");

  SwapGrid grid;
  grid.rows = style_images.size();
  grid.k = m.k;
  grid.pixels.assign(grid.width() * grid.height(), 0.0);
  auto blit = [&](std::size_t tr, std::size_t tc, const std::vector<double>& img) {
    for (std::size_t r = 0; r < kImageSide; ++r)
      for (std::size_t c = 0; c < kImageSide; ++c)
        grid.pixels[(tr * kImageSide + r) * grid.width() +
                    tc * kImageSide + c] = img[r * kImageSide + c];
  };

  const std::vector<double> zero_style(m.d_s, 0.0);
  for (std::size_t j = 0; j < m.k; ++j)
    blit(0, j + 1, decode_numeric(m.dec, content_vectors[j], zero_style));
  for (std::size_t r = 0; r < grid.rows; ++r) {
    const auto& img = style_images[r].x;
    if (img.size() != kDataDim)
      throw ShapeError("style image has wrong pixel count");
    blit(r + 1, 0, img);
    std::vector<double> s = encode_numeric(m.style_enc, img).mean;
    for (std::size_t j = 0; j < m.k; ++j)
      blit(r + 1, j + 1, decode_numeric(m.dec, content_vectors[j], s));
  }
  return grid;
}

void write_pgm(const std::string& path, std::size_t width, std::size_t height,
               std::span<const double> values, double max_value) {
  if (values.size() != width * height)
    throw ShapeError("pgm value count does not match dimensions");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open pgm file " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  for (double v : values) {
    double scaled = max_value > 0.0 ? v / max_value : 0.0;
    scaled = std::min(1.0, std::max(0.0, scaled));
    out.put(char(static_cast<unsigned char>(std::lround(scaled * 255.0))));
  }
  if (!out) throw IoError("write failed for pgm file " + path);
}

EvalReport run_eval(const Model& m, const std::vector<LabeledInstance>& train,
                    const std::vector<LabeledInstance>& test,
                    const std::vector<std::size_t>& m_list,
                    const std::string& out_dir, std::uint64_t seed) {
  if (m_list.empty()) throw ContractError("need at least one M value");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir);
  auto out_path = [&](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };

  EvalReport report;
  for (std::size_t msamples : m_list) {
    report.content_mae_by_m.emplace_back(
        msamples, content_mae(m, train, test, LatentKind::content, msamples, seed));
    report.style_mae_by_m.emplace_back(
        msamples, content_mae(m, train, test, LatentKind::style, msamples, seed));
  }
  const std::size_t max_m = *std::max_element(m_list.begin(), m_list.end());
  auto vectors = infer_group_vectors(m, test, max_m, seed);

  const std::string metrics = out_path("metrics.csv");
  {
    std::ofstream out(metrics, std::ios::trunc);
    if (!out) throw IoError("cannot open " + metrics);
    out << "metric,latent,M,value\n";
    for (const auto& [mm, v] : report.content_mae_by_m)
      out << "mae,content," << mm << "," << fmt17(v) << "\n";
    for (const auto& [mm, v] : report.style_mae_by_m)
      out << "mae,style," << mm << "," << fmt17(v) << "\n";
    if (m.k >= 3) {
      report.triplet_rate = triplet_satisfaction(vectors);
      out << "triplet_satisfaction,content," << max_m << ","
          << fmt17(report.triplet_rate) << "\n";
    }
  }
  report.artifacts.push_back(metrics);

  DistanceMap dm = distance_map(vectors);
  const std::string dm_csv = out_path("distmap.csv");
  {
    std::ofstream out(dm_csv, std::ios::trunc);
    if (!out) throw IoError("cannot open " + dm_csv);
    for (std::size_t i = 0; i < dm.k; ++i) {
      for (std::size_t j = 0; j < dm.k; ++j)
        out << (j ? "," : "") << fmt17(dm.at(i, j));
      out << "\n";
    }
  }
  report.artifacts.push_back(dm_csv);

  const double mx = dm.max_value();
  write_pgm(out_path("distmap.pgm"), dm.k, dm.k, dm.d, mx);
  report.artifacts.push_back(out_path("distmap.pgm"));
  DistanceMap ideal = ideal_map(m.k, mx);
  write_pgm(out_path("distmap_ideal.pgm"), ideal.k, ideal.k, ideal.d, mx);
  report.artifacts.push_back(out_path("distmap_ideal.pgm"));

  // One style source per level: the head of each level's deterministic order.
  auto groups = shuffled_groups(test, m.k, seed);
  std::vector<LabeledInstance> styles;
  for (std::size_t lv = 0; lv < m.k; ++lv)
    if (!groups[lv].empty()) styles.push_back(test[groups[lv][0]]);
  SwapGrid grid = swap_grid(m, styles, vectors);
  write_pgm(out_path("swap.pgm"), grid.width(), grid.height(), grid.pixels, 1.0);
  report.artifacts.push_back(out_path("swap.pgm"));
  return report;
}

}  // namespace olvae
