#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace olvae {

inline constexpr std::size_t kImageSide = 16;
inline constexpr std::size_t kDataDim = kImageSide * kImageSide;

struct LabeledInstance {
  std::vector<double> x;  // kDataDim pixels in [0,1], row-major
  std::size_t c = 1;      // content level in 1..K
};

// Indices of one minibatch partitioned by level: groups[i] holds the batch
// members with label i+1. Levels absent from the batch have empty lists.
struct GroupedBatch {
  std::vector<std::vector<std::size_t>> groups;

  std::size_t levels() const { return groups.size(); }
  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.size();
    return n;
  }
};

struct Dataset {
  std::size_t k = 0;
  std::vector<LabeledInstance> instances;
};

// Uniform draw from [0, n) by rejection on the raw 64-bit stream, so shuffles
// and placements do not depend on the standard library's distribution choices.
std::size_t bounded_uniform(std::mt19937_64& rng, std::size_t n);

// Mixes a base seed with a stream id (epoch, level, ...) into an independent
// sub-seed; splitmix64 finalizer.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Renders filled squares of side 2 + c (content) at a uniform position
// (style): intensity 1 inside, 0.5 on the one-pixel border, 0 background.
// Labels are balanced to within one instance across the K levels.
std::vector<LabeledInstance> generate(std::uint64_t seed, std::size_t n,
                                      std::size_t k = 6);

void save(const std::string& path, const std::vector<LabeledInstance>& data,
          std::size_t k);
Dataset load(const std::string& path);

// Deterministic shuffle + split into batches of batch_size (last one may be
// short), each partitioned into per-level groups.
std::vector<GroupedBatch> make_batches(const std::vector<LabeledInstance>& data,
                                       std::size_t k, std::size_t batch_size,
                                       std::uint64_t seed);

}  // namespace olvae
