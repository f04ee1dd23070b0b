#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wml/rng.hpp"
#include "wml/types.hpp"

namespace wml::edge {

inline constexpr Index kImageSize = 784;
inline constexpr Index kClasses = 10;

// Images as columns (784 x n) with pixels in [0, 1], labels 0-9.
struct Dataset {
  RealMatrix images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  void validate() const;
  Dataset subset(const std::vector<Index>& columns) const;
};

using WorkerShard = Dataset;

// IDX files: big-endian 32-bit header words, unsigned-byte payload.
RealMatrix read_idx_images(const std::filesystem::path& path);
std::vector<int> read_idx_labels(const std::filesystem::path& path);

// train-images-idx3-ubyte etc. under `dir`; `limit` keeps the first samples
// (0 keeps all). Throws DatasetError when the files are missing or malformed.
struct MnistSplit {
  Dataset train;
  Dataset test;
};
MnistSplit load_mnist(const std::filesystem::path& dir, std::size_t train_limit = 0, std::size_t test_limit = 0);
bool mnist_available(const std::filesystem::path& dir);

// Gaussian class clusters around random templates, clipped to [0, 1]. Train
// and test share the templates, so they come from one call.
struct SyntheticDigits {
  double template_spread = 0.04;  // per-pixel class offset scale
  double pixel_noise = 0.3;
};
MnistSplit synthetic_digits(std::size_t n_train, std::size_t n_test, std::uint64_t seed, SyntheticDigits shape = {});

// Random permutation, then contiguous near-equal split; the first
// (n mod K) shards hold one extra sample.
std::vector<WorkerShard> shard_data(const Dataset& dataset, std::size_t n_workers, Rng& rng);

}  // namespace wml::edge
