#include "olvae/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "olvae/errors.hpp"

namespace olvae {
namespace {

constexpr char kMagic[5] = {'O', 'L', 'V', 'D', '1'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in, std::size_t offset,
                      const char* field) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw FormatError(std::string("dataset header truncated at offset ") +
                      std::to_string(offset) + " (" + field + ")");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

std::size_t bounded_uniform(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw ContractError("bounded_uniform: empty range");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::vector<LabeledInstance> generate(std::uint64_t seed, std::size_t n,
                                      std::size_t k) {
  if (k < 2) throw ContractError("generate: need K >= 2");
  if (n < k) throw ContractError("generate: need N >= K");
  if (2 + k > kImageSide)
    throw ContractError("generate: side 2+K exceeds the " +
                        std::to_string(kImageSide) + "-pixel canvas");
  std::mt19937_64 rng(seed);
  std::vector<LabeledInstance> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    LabeledInstance& inst = out[j];
    inst.c = j % k + 1;  // balanced to within one by construction
    const std::size_t side = 2 + inst.c;
    const std::size_t r0 = bounded_uniform(rng, kImageSide - side + 1);
    const std::size_t c0 = bounded_uniform(rng, kImageSide - side + 1);
    inst.x.assign(kDataDim, 0.0);
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t c = 0; c < side; ++c) {
        const bool border =
            r == 0 || c == 0 || r == side - 1 || c == side - 1;
        inst.x[(r0 + r) * kImageSide + (c0 + c)] = border ? 0.5 : 1.0;
      }
  }
  return out;
}

void save(const std::string& path, const std::vector<LabeledInstance>& data,
          std::size_t k) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, 5);
  put_u32(out, static_cast<std::uint32_t>(kDataDim));
  put_u32(out, static_cast<std::uint32_t>(k));
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  std::vector<unsigned char> rec(1 + kDataDim);
  for (const LabeledInstance& inst : data) {
    if (inst.c < 1 || inst.c > k)
      throw ContractError("save: label " + std::to_string(inst.c) +
                          " outside 1.." + std::to_string(k));
    if (inst.x.size() != kDataDim)
      throw ShapeError("save: instance has " + std::to_string(inst.x.size()) +
                       " pixels, expected " + std::to_string(kDataDim));
    rec[0] = static_cast<unsigned char>(inst.c);
    for (std::size_t i = 0; i < kDataDim; ++i)
      rec[1 + i] =
          static_cast<unsigned char>(std::lround(inst.x[i] * 255.0));
    out.write(reinterpret_cast<const char*>(rec.data()), rec.size());
  }
  if (!out) throw IoError("write failure on " + path);
}

Dataset load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  char magic[5];
  if (!in.read(magic, 5))
    throw FormatError("dataset file shorter than the 5-byte magic at offset 0");
  for (std::size_t i = 0; i < 5; ++i)
    if (magic[i] != kMagic[i])
      throw FormatError("bad dataset magic at offset " + std::to_string(i));
  const std::uint32_t d = get_u32(in, 5, "D");
  const std::uint32_t k = get_u32(in, 9, "K");
  const std::uint32_t n = get_u32(in, 13, "N");
  if (d != kDataDim)
    throw FormatError("dataset D=" + std::to_string(d) + " at offset 5, only " +
                      std::to_string(kDataDim) + " is supported");
  if (k == 0) throw FormatError("dataset K=0 at offset 9");

  Dataset ds;
  ds.k = k;
  ds.instances.resize(n);
  std::vector<unsigned char> rec(1 + kDataDim);
  for (std::uint32_t j = 0; j < n; ++j) {
    const std::size_t offset = 17 + static_cast<std::size_t>(j) * rec.size();
    if (!in.read(reinterpret_cast<char*>(rec.data()), rec.size()))
      throw FormatError("dataset truncated in record " + std::to_string(j) +
                        " at offset " + std::to_string(offset));
    LabeledInstance& inst = ds.instances[j];
    inst.c = rec[0];
    if (inst.c < 1 || inst.c > k)
      throw FormatError("label " + std::to_string(inst.c) + " outside 1.." +
                        std::to_string(k) + " at offset " +
                        std::to_string(offset));
    inst.x.resize(kDataDim);
    for (std::size_t i = 0; i < kDataDim; ++i)
      inst.x[i] = static_cast<double>(rec[1 + i]) / 255.0;
  }
  return ds;
}

std::vector<GroupedBatch> make_batches(const std::vector<LabeledInstance>& data,
                                       std::size_t k, std::size_t batch_size,
                                       std::uint64_t seed) {
  if (batch_size < k)
    throw ContractError("make_batches: batch_size below K");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[bounded_uniform(rng, i)]);

  std::vector<GroupedBatch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    GroupedBatch b;
    b.groups.assign(k, {});
    const std::size_t end = std::min(order.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i) {
      const std::size_t idx = order[i];
      const std::size_t c = data[idx].c;
      if (c < 1 || c > k)
        throw ContractError("make_batches: label " + std::to_string(c) +
                            " outside 1.." + std::to_string(k));
      b.groups[c - 1].push_back(idx);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace olvae
