#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "wml/channel/channels.hpp"
#include "wml/nn/adam.hpp"
#include "wml/nn/mlp.hpp"
#include "wml/rng.hpp"

namespace wml::detect {

inline constexpr Index kMaxEnumerationTx = 12;

struct DetectionResult {
  RealVector estimate;     // entries in {-1, +1}
  RealVector soft_values;  // entries in [-1, 1]
};

// sign with zero mapped to +1
RealVector hard_decision(const RealVector& soft);

// Per-receive-antenna SNR with unit-variance channel entries and +-1 symbols:
// noise variance K / 10^(snr/10).
double noise_std_for_snr(double snr_db, Index n_tx);

// Exhaustive search over {-1, +1}^K; ties toward the lexicographically smaller x.
DetectionResult ml_detect(const channel::MimoInstance& instance);

// Least-squares inverse; throws InvalidArgument when H lacks full column rank.
DetectionResult zf_detect(const channel::MimoInstance& instance);

struct DetectorConfig {
  Index n_rx = 8;
  Index n_tx = 4;
  int layers = 6;
  int hidden = 40;
  double snr_db = 10.0;
  std::size_t batch_size = 500;
  nn::AdamSettings optimizer{1e-3};
  std::uint64_t seed = 0;

  // 4K inputs (H^T y, v, x, H^T H x), one ReLU layer, 2K linear outputs;
  // the detector applies tanh to the x half.
  nn::MlpSpec layer_network() const;
  void validate() const;
};

struct UnfoldedDetector {
  DetectorConfig config;
  std::vector<nn::MlpModel> layers;

  static UnfoldedDetector initialize(const DetectorConfig& cfg, Rng& rng);
  DetectionResult detect(const channel::MimoInstance& instance) const;
  // Soft outputs x_1..x_L for a batch; each K x B.
  std::vector<RealMatrix> soft_trajectory(std::span<const channel::MimoInstance> batch) const;
};

// Sum over layers of the mean squared error of x_k against the true input,
// and its gradient per layer network.
struct UnfoldedGradient {
  double loss = 0.0;
  std::vector<nn::Parameters> gradients;
};
UnfoldedGradient unfolded_gradient(const UnfoldedDetector& detector, std::span<const channel::MimoInstance> batch);

struct TrainedDetector {
  UnfoldedDetector detector;
  std::vector<double> loss_trace;  // per minibatch
};

// Fresh instances at cfg.snr_db, n_train in total, in minibatches of
// cfg.batch_size. Throws DivergenceError with the minibatch index.
TrainedDetector learned_detect_train(const DetectorConfig& cfg, std::size_t n_train);

using Detector = std::function<DetectionResult(const channel::MimoInstance&)>;

// Fraction of wrong symbols over all instances.
double ber(const Detector& detector, std::span<const channel::MimoInstance> instances);

std::vector<channel::MimoInstance> draw_instances(Index n_rx, Index n_tx, double snr_db, std::size_t count, Rng& rng);

}  // namespace wml::detect
