#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace wml {

// Seeded random stream. Child streams are derived from the seed and a label,
// never from the parent's consumption state, so the order in which modules
// draw numbers cannot perturb each other.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  Rng child(std::string_view label, std::uint64_t index = 0) const;

  std::uint64_t next() { return engine_(); }
  double uniform();  // [0, 1)
  double normal();
  double normal(double mean, double stddev);
  double exponential(double mean);
  bool bernoulli(double p);
  std::uint64_t uniform_index(std::uint64_t n);  // [0, n)

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_label(std::string_view label);

}  // namespace wml
