#include "wml/channel/channels.hpp"

#include <cmath>

#include "wml/errors.hpp"

namespace wml::channel {

void InterferenceChannel::validate() const {
  if (gains.rows() != 2 || gains.cols() != 2) {
    throw InvalidArgument("InterferenceChannel: gains must be 2x2");
  }
  if (!gains.allFinite() || (gains.array() <= 0.0).any()) {
    throw InvalidArgument("InterferenceChannel: gains must be finite and positive");
  }
}

void ChannelHistory::validate() const {
  if (samples.empty()) {
    throw InvalidArgument("ChannelHistory: empty");
  }
  const Index n = samples.front().size();
  if (n < 1) {
    throw InvalidArgument("ChannelHistory: zero-length samples");
  }
  for (const auto& h : samples) {
    if (h.size() != n) {
      throw DimensionError("ChannelHistory: samples differ in length");
    }
  }
}

ComplexVector draw_rayleigh(Index dim, Rng& rng) {
  if (dim < 1) {
    throw InvalidArgument("draw_rayleigh: dimension must be >= 1");
  }
  const double s = std::sqrt(0.5);
  ComplexVector h(dim);
  for (Index i = 0; i < dim; ++i) {
    const double re = rng.normal();
    const double im = rng.normal();
    h[i] = Complex(s * re, s * im);
  }
  return h;
}

ChannelHistory draw_history(Index dim, std::size_t count, Rng& rng) {
  ChannelHistory history;
  history.samples.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    history.samples.push_back(draw_rayleigh(dim, rng));
  }
  return history;
}

WorldSample draw_world(std::size_t n_agents, const std::vector<double>& noise_levels, double power_gain_mean,
                       Rng& rng) {
  if (noise_levels.size() != n_agents) {
    throw DimensionError("draw_world: one noise level per agent required");
  }
  if (!(power_gain_mean > 0.0)) {
    throw InvalidArgument("draw_world: power_gain_mean must be positive");
  }
  WorldSample sample;
  sample.world.gains.resize(2, 2);
  for (Index j = 0; j < 2; ++j) {
    for (Index i = 0; i < 2; ++i) {
      double g = 0.0;
      // exponential draws are almost surely positive; guard the measure-zero case
      while (!(g > 0.0)) g = rng.exponential(power_gain_mean);
      sample.world.gains(i, j) = g;
    }
  }
  sample.noise_levels = noise_levels;
  sample.observations.reserve(n_agents);
  for (std::size_t a = 0; a < n_agents; ++a) {
    const double sigma = noise_levels[a];
    if (!(sigma >= 0.0)) {
      throw InvalidArgument("draw_world: noise levels must be non-negative");
    }
    // draws are consumed even for sigma = 0 so the gains sequence does not
    // depend on the noise levels
    RealMatrix y = sample.world.gains;
    for (Index j = 0; j < 2; ++j) {
      for (Index i = 0; i < 2; ++i) {
        const double e = rng.normal();
        if (sigma > 0.0) y(i, j) += sigma * e;
      }
    }
    sample.observations.push_back(std::move(y));
  }
  return sample;
}

RealVector awgn(const RealVector& signal, double noise_variance, Rng& rng) {
  if (!(noise_variance >= 0.0)) {
    throw InvalidArgument("awgn: noise_variance must be non-negative");
  }
  if (noise_variance == 0.0) {
    return signal;
  }
  const double s = std::sqrt(noise_variance);
  RealVector out = signal;
  for (Index i = 0; i < out.size(); ++i) {
    out[i] += s * rng.normal();
  }
  return out;
}

MimoInstance make_mimo_instance(RealMatrix channel, RealVector input, double noise_std, Rng& rng) {
  if (channel.cols() != input.size()) {
    throw DimensionError("make_mimo_instance: channel columns must equal the input length");
  }
  if (!(noise_std >= 0.0)) {
    throw InvalidArgument("make_mimo_instance: noise_std must be non-negative");
  }
  MimoInstance inst;
  inst.received = awgn(channel * input, noise_std * noise_std, rng);
  inst.channel = std::move(channel);
  inst.input = std::move(input);
  inst.noise_std = noise_std;
  return inst;
}

MimoInstance draw_mimo_instance(Index n_rx, Index n_tx, double noise_std, Rng& rng) {
  if (n_rx < 1 || n_tx < 1) {
    throw InvalidArgument("draw_mimo_instance: N and K must be >= 1");
  }
  RealMatrix h(n_rx, n_tx);
  for (Index j = 0; j < n_tx; ++j) {
    for (Index i = 0; i < n_rx; ++i) {
      h(i, j) = rng.normal();
    }
  }
  RealVector x(n_tx);
  for (Index k = 0; k < n_tx; ++k) {
    x[k] = rng.bernoulli(0.5) ? 1.0 : -1.0;
  }
  return make_mimo_instance(std::move(h), std::move(x), noise_std, rng);
}

}  // namespace wml::channel
