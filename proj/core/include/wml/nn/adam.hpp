#pragma once

#include <cstdint>

#include "wml/nn/mlp.hpp"

namespace wml::nn {

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::uint64_t step_count = 0;
  Parameters first_moment;
  Parameters second_moment;
  AdamSettings settings;

  static AdamState for_spec(const MlpSpec& spec, AdamSettings settings = {});
};

// One bias-corrected Adam update, in place.
void adam_step(MlpModel& model, AdamState& state, const Parameters& gradient);

// Same update on a flat parameter vector; the state moments hold a single
// column each. Used by the parameter server in edge learning.
struct FlatAdamState {
  std::uint64_t step_count = 0;
  RealVector first_moment;
  RealVector second_moment;
  AdamSettings settings;

  static FlatAdamState zeros(Index dim, AdamSettings settings = {});
};

void adam_step(RealVector& params, FlatAdamState& state, const RealVector& gradient);

}  // namespace wml::nn
