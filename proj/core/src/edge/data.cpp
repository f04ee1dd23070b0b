#include "wml/edge/data.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <string>

#include "wml/errors.hpp"

namespace wml::edge {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw DatasetError("idx: truncated header in " + path.string());
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

std::ifstream open_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("idx: cannot open " + path.string());
  return in;
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t bytes, const std::filesystem::path& path) {
  std::vector<unsigned char> buf(bytes);
  if (bytes > 0 && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes))) {
    throw DatasetError("idx: truncated payload in " + path.string());
  }
  return buf;
}

Dataset take_front(Dataset d, std::size_t limit) {
  if (limit == 0 || limit >= d.size()) return d;
  d.images.conservativeResize(Eigen::NoChange, static_cast<Index>(limit));
  d.labels.resize(limit);
  return d;
}

}  // namespace

void Dataset::validate() const {
  if (images.rows() != kImageSize) throw DimensionError("Dataset: images must have 784 rows");
  if (static_cast<std::size_t>(images.cols()) != labels.size()) {
    throw DimensionError("Dataset: image and label counts differ");
  }
  for (int l : labels) {
    if (l < 0 || l >= kClasses) throw DatasetError("Dataset: label outside 0-9");
  }
}

Dataset Dataset::subset(const std::vector<Index>& columns) const {
  Dataset out;
  out.images = images(Eigen::all, columns);
  out.labels.reserve(columns.size());
  for (Index c : columns) out.labels.push_back(labels[static_cast<std::size_t>(c)]);
  return out;
}

RealMatrix read_idx_images(const std::filesystem::path& path) {
  std::ifstream in = open_idx(path);
  if (read_be32(in, path) != kImageMagic) throw DatasetError("idx: bad image magic in " + path.string());
  const std::uint32_t count = read_be32(in, path);
  const std::uint32_t rows = read_be32(in, path);
  const std::uint32_t cols = read_be32(in, path);
  if (static_cast<Index>(rows) * static_cast<Index>(cols) != kImageSize) {
    throw DatasetError("idx: expected 28x28 images in " + path.string());
  }
  const auto raw = read_payload(in, std::size_t{count} * kImageSize, path);
  RealMatrix images(kImageSize, static_cast<Index>(count));
  for (std::size_t i = 0; i < raw.size(); ++i) images.data()[i] = static_cast<double>(raw[i]) / 255.0;
  return images;
}

std::vector<int> read_idx_labels(const std::filesystem::path& path) {
  std::ifstream in = open_idx(path);
  if (read_be32(in, path) != kLabelMagic) throw DatasetError("idx: bad label magic in " + path.string());
  const std::uint32_t count = read_be32(in, path);
  const auto raw = read_payload(in, count, path);
  std::vector<int> labels(raw.begin(), raw.end());
  for (int l : labels) {
    if (l >= kClasses) throw DatasetError("idx: label outside 0-9 in " + path.string());
  }
  return labels;
}

bool mnist_available(const std::filesystem::path& dir) {
  for (const char* name : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                           "t10k-labels-idx1-ubyte"}) {
    if (!std::filesystem::is_regular_file(dir / name)) return false;
  }
  return true;
}

MnistSplit load_mnist(const std::filesystem::path& dir, std::size_t train_limit, std::size_t test_limit) {
  if (!mnist_available(dir)) throw DatasetError("mnist: idx files not found under " + dir.string());
  MnistSplit s;
  s.train.images = read_idx_images(dir / "train-images-idx3-ubyte");
  s.train.labels = read_idx_labels(dir / "train-labels-idx1-ubyte");
  s.test.images = read_idx_images(dir / "t10k-images-idx3-ubyte");
  s.test.labels = read_idx_labels(dir / "t10k-labels-idx1-ubyte");
  s.train.validate();
  s.test.validate();
  s.train = take_front(std::move(s.train), train_limit);
  s.test = take_front(std::move(s.test), test_limit);
  return s;
}

MnistSplit synthetic_digits(std::size_t n_train, std::size_t n_test, std::uint64_t seed, SyntheticDigits shape) {
  Rng root(seed);
  Rng tmpl = root.child("templates");
  RealVector base(kImageSize);
  for (Index i = 0; i < kImageSize; ++i) base[i] = 0.2 + 0.6 * tmpl.uniform();
  RealMatrix means(kImageSize, kClasses);
  for (Index c = 0; c < kClasses; ++c) {
    for (Index i = 0; i < kImageSize; ++i) means(i, c) = base[i] + shape.template_spread * tmpl.normal();
  }
  auto draw = [&](std::size_t n, std::string_view label) {
    Rng rng = root.child(label);
    Dataset d;
    d.images.resize(kImageSize, static_cast<Index>(n));
    d.labels.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const int c = static_cast<int>(k % kClasses);  // balanced classes
      d.labels[k] = c;
      for (Index i = 0; i < kImageSize; ++i) {
        const double v = means(i, c) + shape.pixel_noise * rng.normal();
        d.images(i, static_cast<Index>(k)) = std::clamp(v, 0.0, 1.0);
      }
    }
    return d;
  };
  return MnistSplit{draw(n_train, "train"), draw(n_test, "test")};
}

std::vector<WorkerShard> shard_data(const Dataset& dataset, std::size_t n_workers, Rng& rng) {
  dataset.validate();
  if (n_workers < 1) throw InvalidArgument("shard_data: need at least one worker");
  if (n_workers > dataset.size()) throw InvalidArgument("shard_data: more workers than samples");
  std::vector<Index> order(dataset.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng.engine());

  const std::size_t base = dataset.size() / n_workers;
  const std::size_t extra = dataset.size() % n_workers;
  std::vector<WorkerShard> shards;
  shards.reserve(n_workers);
  std::size_t at = 0;
  for (std::size_t k = 0; k < n_workers; ++k) {
    const std::size_t len = base + (k < extra ? 1 : 0);
    shards.push_back(dataset.subset(std::vector<Index>(order.begin() + static_cast<std::ptrdiff_t>(at),
                                                       order.begin() + static_cast<std::ptrdiff_t>(at + len))));
    at += len;
  }
  return shards;
}

}  // namespace wml::edge
