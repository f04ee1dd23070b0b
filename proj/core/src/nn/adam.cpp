#include "wml/nn/adam.hpp"

#include <cmath>

#include "wml/errors.hpp"

namespace wml::nn {

namespace {

template <typename Param, typename Grad>
void update_block(Param& param, Grad& m, Grad& v, const Grad& g, const AdamSettings& s, double bias1,
                  double bias2) {
  m = s.beta1 * m + (1.0 - s.beta1) * g;
  v = s.beta2 * v + (1.0 - s.beta2) * g.cwiseProduct(g);
  param.array() -= s.learning_rate * (m.array() / bias1) / ((v.array() / bias2).sqrt() + s.epsilon);
}

}  // namespace

AdamState AdamState::for_spec(const MlpSpec& spec, AdamSettings settings) {
  return AdamState{0, Parameters::zeros(spec), Parameters::zeros(spec), settings};
}

void adam_step(MlpModel& model, AdamState& state, const Parameters& gradient) {
  if (!gradient.same_shape(model.params) || !state.first_moment.same_shape(model.params) ||
      !state.second_moment.same_shape(model.params)) {
    throw DimensionError("adam_step: gradient or moments are not shaped like the model parameters");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(state.settings.beta1, t);
  const double bias2 = 1.0 - std::pow(state.settings.beta2, t);
  for (std::size_t l = 0; l < model.params.weights.size(); ++l) {
    update_block(model.params.weights[l], state.first_moment.weights[l], state.second_moment.weights[l],
                 gradient.weights[l], state.settings, bias1, bias2);
    update_block(model.params.biases[l], state.first_moment.biases[l], state.second_moment.biases[l],
                 gradient.biases[l], state.settings, bias1, bias2);
  }
}

FlatAdamState FlatAdamState::zeros(Index dim, AdamSettings settings) {
  return FlatAdamState{0, RealVector::Zero(dim), RealVector::Zero(dim), settings};
}

void adam_step(RealVector& params, FlatAdamState& state, const RealVector& gradient) {
  if (gradient.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw DimensionError("adam_step: flat gradient length mismatch");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(state.settings.beta1, t);
  const double bias2 = 1.0 - std::pow(state.settings.beta2, t);
  update_block(params, state.first_moment, state.second_moment, gradient, state.settings, bias1, bias2);
}

}  // namespace wml::nn
