#pragma once

#include <vector>

#include "wml/rng.hpp"
#include "wml/types.hpp"

namespace wml::channel {

// 2x2 positive power gains; entry (i, j) is the gain from TX i to RX j.
struct InterferenceChannel {
  RealMatrix gains = RealMatrix::Ones(2, 2);

  double operator()(Index tx, Index rx) const { return gains(tx, rx); }
  // Throws InvalidArgument unless 2x2, finite and strictly positive.
  void validate() const;
};

// True channel state plus what each agent observes of it.
struct WorldSample {
  InterferenceChannel world;
  std::vector<RealMatrix> observations;
  std::vector<double> noise_levels;

  std::size_t agent_count() const { return observations.size(); }
};

// Recent channel realizations h_1..h_T, all of length N.
struct ChannelHistory {
  std::vector<ComplexVector> samples;

  std::size_t size() const { return samples.size(); }
  Index dimension() const { return samples.empty() ? 0 : samples.front().size(); }
  // Throws unless non-empty with a uniform length.
  void validate() const;
};

// y = H x + w with H real N x K, x in {-1, +1}^K.
struct MimoInstance {
  RealMatrix channel;
  RealVector input;
  double noise_std = 0.0;
  RealVector received;

  Index n_rx() const { return channel.rows(); }
  Index n_tx() const { return channel.cols(); }
};

// i.i.d. CN(0, 1): real and imaginary parts each N(0, 1/2).
ComplexVector draw_rayleigh(Index dim, Rng& rng);

ChannelHistory draw_history(Index dim, std::size_t count, Rng& rng);

// Gains i.i.d. exponential with the given mean; agent j observes the gains
// plus i.i.d. N(0, sigma_j^2) per entry, without clipping.
WorldSample draw_world(std::size_t n_agents, const std::vector<double>& noise_levels, double power_gain_mean,
                       Rng& rng);

RealVector awgn(const RealVector& signal, double noise_variance, Rng& rng);

MimoInstance draw_mimo_instance(Index n_rx, Index n_tx, double noise_std, Rng& rng);

// Same model with a caller-supplied channel and input.
MimoInstance make_mimo_instance(RealMatrix channel, RealVector input, double noise_std, Rng& rng);

}  // namespace wml::channel
