#include "wml/outage/outage.hpp"

#include <cmath>
#include <limits>

#include "wml/errors.hpp"

namespace wml::outage {

namespace {

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_dims(const ComplexVector& w, const ComplexVector& h) {
  if (w.size() != h.size()) {
    throw DimensionError("outage: beamformer and channel lengths differ");
  }
}

}  // namespace

bool PowerConstraint::feasible(const ComplexVector& w, double tol) const {
  if (kind == Kind::sum_power) {
    return w.squaredNorm() <= limit * (1.0 + tol) + tol;
  }
  for (Index i = 0; i < w.size(); ++i) {
    if (std::norm(w[i]) > limit * (1.0 + tol) + tol) return false;
  }
  return true;
}

ComplexVector PowerConstraint::project(const ComplexVector& w) const {
  if (kind == Kind::sum_power) {
    const double power = w.squaredNorm();
    if (power <= limit) return w;
    return w * std::sqrt(limit / power);
  }
  const double cap = std::sqrt(limit);
  ComplexVector out = w;
  for (Index i = 0; i < out.size(); ++i) {
    const double mag = std::abs(out[i]);
    if (mag > cap) out[i] *= cap / mag;
  }
  return out;
}

void OutageProblem::validate() const {
  history.validate();
  if (!(gamma > 0.0)) {
    throw InvalidArgument("OutageProblem: gamma must be positive");
  }
  if (!(constraint.limit > 0.0)) {
    throw InvalidArgument("OutageProblem: power limit must be positive");
  }
}

double received_power(const ComplexVector& w, const ComplexVector& h) {
  check_dims(w, h);
  return std::norm(w.dot(h));  // Eigen's dot conjugates the left operand
}

int outage_indicator(const Beamformer& w, const ComplexVector& h, double gamma) {
  return received_power(w.weights, h) < gamma ? 1 : 0;
}

double sample_outage(const Beamformer& w, const channel::ChannelHistory& history, double gamma) {
  history.validate();
  std::size_t count = 0;
  for (const auto& h : history.samples) {
    count += static_cast<std::size_t>(outage_indicator(w, h, gamma));
  }
  return static_cast<double>(count) / static_cast<double>(history.size());
}

double smoothed_outage(const Beamformer& w, const channel::ChannelHistory& history, double gamma,
                       double temperature) {
  if (!(temperature > 0.0)) {
    throw InvalidArgument("smoothed_outage: temperature must be positive");
  }
  history.validate();
  double total = 0.0;
  for (const auto& h : history.samples) {
    total += logistic((gamma - received_power(w.weights, h)) / temperature);
  }
  return total / static_cast<double>(history.size());
}

ComplexVector smoothed_outage_gradient(const ComplexVector& w, const std::vector<const ComplexVector*>& samples,
                                       double gamma, double temperature) {
  ComplexVector grad = ComplexVector::Zero(w.size());
  for (const ComplexVector* h : samples) {
    check_dims(w, *h);
    const Complex a = w.dot(*h);
    const double s = logistic((gamma - std::norm(a)) / temperature);
    // d|a|^2/d(re w) + i d|a|^2/d(im w) = 2 conj(a) h
    grad += (-s * (1.0 - s) / temperature * 2.0) * std::conj(a) * (*h);
  }
  return grad / static_cast<double>(samples.size());
}

Beamformer mrt_baseline(const channel::ChannelHistory& history, const PowerConstraint& constraint) {
  history.validate();
  const Index n = history.dimension();
  ComplexVector mean = ComplexVector::Zero(n);
  for (const auto& h : history.samples) mean += h;
  mean /= static_cast<double>(history.size());

  ComplexVector direction = mean;
  if (mean.norm() <= std::numeric_limits<double>::min()) {
    direction = ComplexVector::Constant(n, Complex(1.0 / std::sqrt(static_cast<double>(n)), 0.0));
  }

  ComplexVector w(n);
  if (constraint.kind == PowerConstraint::Kind::sum_power) {
    w = direction * (std::sqrt(constraint.limit) / direction.norm());
  } else {
    const double cap = std::sqrt(constraint.limit);
    for (Index i = 0; i < n; ++i) {
      const double mag = std::abs(direction[i]);
      w[i] = mag > 0.0 ? direction[i] * (cap / mag) : Complex(cap, 0.0);
    }
  }
  return Beamformer{constraint.project(w)};
}

OutageSolution minimize_outage(const OutageProblem& problem, const SmoothSgdConfig& config,
                               const IterateObserver& on_iterate) {
  problem.validate();
  if (!(config.temperature > 0.0) || !(config.step_size > 0.0) || config.iterations < 1 || config.minibatch < 1) {
    throw InvalidArgument("minimize_outage: invalid SmoothSgdConfig");
  }

  const auto& samples = problem.history.samples;
  Rng rng = Rng(config.seed).child("outage-sgd");

  ComplexVector w = mrt_baseline(problem.history, problem.constraint).weights;
  OutageSolution result{Beamformer{w}, {}};
  result.trace.best_sample_outage = sample_outage(result.beamformer, problem.history, problem.gamma);
  result.trace.best_iteration = 0;

  const bool full_batch = static_cast<std::size_t>(config.minibatch) >= samples.size();
  std::vector<const ComplexVector*> batch;
  for (int it = 1; it <= config.iterations; ++it) {
    batch.clear();
    if (full_batch) {
      for (const auto& h : samples) batch.push_back(&h);
    } else {
      for (int b = 0; b < config.minibatch; ++b) {
        batch.push_back(&samples[rng.uniform_index(samples.size())]);
      }
    }
    const ComplexVector grad = smoothed_outage_gradient(w, batch, problem.gamma, config.temperature);
    if (!grad.allFinite()) {
      throw NumericalError("minimize_outage: non-finite gradient", static_cast<std::size_t>(it));
    }
    w = problem.constraint.project(w - config.step_size * grad);
    if (on_iterate) on_iterate(static_cast<std::size_t>(it), w);

    const Beamformer current{w};
    const double so = sample_outage(current, problem.history, problem.gamma);
    result.trace.sample_outage.push_back(so);
    result.trace.smoothed_outage.push_back(
        smoothed_outage(current, problem.history, problem.gamma, config.temperature));
    if (so < result.trace.best_sample_outage) {
      result.trace.best_sample_outage = so;
      result.trace.best_iteration = static_cast<std::size_t>(it);
      result.beamformer = current;
    }
  }
  return result;
}

MonteCarloEstimate mc_outage(const Beamformer& w, double gamma, std::uint64_t n_samples, Rng& rng) {
  if (n_samples < 1) {
    throw InvalidArgument("mc_outage: n_samples must be >= 1");
  }
  const Index n = w.weights.size();
  std::uint64_t count = 0;
  for (std::uint64_t s = 0; s < n_samples; ++s) {
    const ComplexVector h = channel::draw_rayleigh(n, rng);
    count += static_cast<std::uint64_t>(outage_indicator(w, h, gamma));
  }
  const double p = static_cast<double>(count) / static_cast<double>(n_samples);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n_samples)), n_samples};
}

}  // namespace wml::outage
