#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "wml/channel/channels.hpp"
#include "wml/rng.hpp"
#include "wml/types.hpp"

namespace wml::outage {

// Feasible set for the beamformer.
struct PowerConstraint {
  enum class Kind { sum_power, per_antenna };
  Kind kind = Kind::sum_power;
  double limit = 1.0;  // total power P, or per-antenna power p_max

  static PowerConstraint sum_power(double total) { return {Kind::sum_power, total}; }
  static PowerConstraint per_antenna(double p_max) { return {Kind::per_antenna, p_max}; }

  bool feasible(const ComplexVector& w, double tol = 1e-12) const;
  // Sum power: radial rescale onto the sphere of radius sqrt(P) when
  // violated. Per antenna: clip each magnitude to sqrt(p_max), keeping phase.
  ComplexVector project(const ComplexVector& w) const;
};

struct OutageProblem {
  channel::ChannelHistory history;
  double gamma = 1.0;
  PowerConstraint constraint;

  void validate() const;
};

struct Beamformer {
  ComplexVector weights;
};

struct SmoothSgdConfig {
  double temperature = 0.1;  // tau; 0.1 * gamma is the recommended default
  double step_size = 0.05;
  int iterations = 2000;
  int minibatch = 16;
  std::uint64_t seed = 0;
};

struct OutageTrace {
  std::vector<double> sample_outage;    // after each iteration
  std::vector<double> smoothed_outage;  // on the full history, after each iteration
  std::size_t best_iteration = 0;       // 0 is the warm start
  double best_sample_outage = 1.0;
};

struct OutageSolution {
  Beamformer beamformer;
  OutageTrace trace;
};

struct MonteCarloEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::uint64_t samples = 0;
};

// |w^H h|^2
double received_power(const ComplexVector& w, const ComplexVector& h);

// 1 iff |w^H h|^2 < gamma
int outage_indicator(const Beamformer& w, const ComplexVector& h, double gamma);

double sample_outage(const Beamformer& w, const channel::ChannelHistory& history, double gamma);

// Mean over the history of logistic((gamma - |w^H h_t|^2) / temperature).
double smoothed_outage(const Beamformer& w, const channel::ChannelHistory& history, double gamma,
                       double temperature);

// Gradient of the smoothed objective over the given samples, in the real
// 2N parameterization packed as a complex vector (d/d re + i d/d im).
ComplexVector smoothed_outage_gradient(const ComplexVector& w, const std::vector<const ComplexVector*>& samples,
                                       double gamma, double temperature);

// Projected SGD on the smoothed objective, warm-started at mrt_baseline.
// Returns the first iterate attaining the lowest sample_outage.
// `on_iterate`, when set, sees every projected iterate.
using IterateObserver = std::function<void(std::size_t iteration, const ComplexVector& w)>;
OutageSolution minimize_outage(const OutageProblem& problem, const SmoothSgdConfig& config,
                               const IterateObserver& on_iterate = {});

// Full-power maximum ratio transmission toward the history mean. A zero mean
// falls back to uniform weights 1/sqrt(N) before projection.
Beamformer mrt_baseline(const channel::ChannelHistory& history, const PowerConstraint& constraint);

// Fresh unit-variance Rayleigh draws.
MonteCarloEstimate mc_outage(const Beamformer& w, double gamma, std::uint64_t n_samples, Rng& rng);

}  // namespace wml::outage
