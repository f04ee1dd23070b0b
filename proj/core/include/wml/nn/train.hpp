#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wml/nn/adam.hpp"
#include "wml/nn/mlp.hpp"

namespace wml::nn {

struct TrainConfig {
  int batch_size = 400;
  int epochs = 1000;
  double dropout_train = 0.3;
  double dropout_test = 0.0;
  std::uint64_t seed = 0;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> loss_trace;  // one entry per epoch
};

// Mini-batch Adam over `dataset`, reshuffled every epoch from the seeded
// stream. Identical (seed, config, data) give bit-identical parameters.
// A non-finite epoch loss throws DivergenceError with the epoch index.
TrainResult train(MlpModel model, std::span<const Sample> dataset, const Loss& loss,
                  const TrainConfig& config, AdamState& state);

}  // namespace wml::nn
