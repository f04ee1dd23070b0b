#include "wml/nn/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "wml/errors.hpp"

namespace wml::nn {

namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void apply_output(const OutputActivation& act, const RealMatrix& logits, RealMatrix& out) {
  switch (act.kind) {
    case OutputKind::linear:
      out = logits;
      break;
    case OutputKind::sigmoid:
      out = logits.unaryExpr([](double z) { return stable_sigmoid(z); });
      break;
    case OutputKind::scaled_sigmoid: {
      const double scale = act.scale;
      out = logits.unaryExpr([scale](double z) { return scale * stable_sigmoid(z); });
      break;
    }
    case OutputKind::softmax: {
      out.resize(logits.rows(), logits.cols());
      for (Index c = 0; c < logits.cols(); ++c) {
        const double mx = logits.col(c).maxCoeff();
        out.col(c) = (logits.col(c).array() - mx).exp().matrix();
        out.col(c) /= out.col(c).sum();
      }
      break;
    }
  }
}

void check_finite(const RealMatrix& m, const char* what, std::size_t layer) {
  if (!m.allFinite()) {
    throw NumericalError(std::string("non-finite ") + what, layer);
  }
}

}  // namespace

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) {
    throw InvalidArgument("MlpSpec: input and output dimensions must be >= 1");
  }
  for (int h : hidden_layers) {
    if (h < 1) {
      throw InvalidArgument("MlpSpec: hidden layer widths must be >= 1");
    }
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw InvalidArgument("MlpSpec: dropout_rate must lie in [0, 1)");
  }
  if (output_activation.kind == OutputKind::scaled_sigmoid && !(output_activation.scale > 0.0)) {
    throw InvalidArgument("MlpSpec: scaled_sigmoid scale must be positive");
  }
}

int MlpSpec::fan_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_layers[layer - 1];
}

int MlpSpec::fan_out(std::size_t layer) const {
  return layer < hidden_layers.size() ? hidden_layers[layer] : output_dim;
}

Parameters Parameters::zeros(const MlpSpec& spec) {
  spec.validate();
  Parameters p;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    p.weights.push_back(RealMatrix::Zero(spec.fan_out(l), spec.fan_in(l)));
    p.biases.push_back(RealVector::Zero(spec.fan_out(l)));
  }
  return p;
}

std::size_t Parameters::size() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  }
  return n;
}

bool Parameters::same_shape(const Parameters& other) const {
  if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) {
    return false;
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols() ||
        biases[l].size() != other.biases[l].size()) {
      return false;
    }
  }
  return true;
}

bool Parameters::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      return false;
    }
  }
  return true;
}

void Parameters::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

Parameters& Parameters::operator+=(const Parameters& other) {
  if (!same_shape(other)) {
    throw DimensionError("Parameters::operator+=: shape mismatch");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
  return *this;
}

Parameters& Parameters::operator*=(double factor) {
  for (auto& w : weights) w *= factor;
  for (auto& b : biases) b *= factor;
  return *this;
}

RealVector Parameters::flatten() const {
  RealVector flat(static_cast<Index>(size()));
  Index pos = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.segment(pos, weights[l].size()) = weights[l].reshaped();
    pos += weights[l].size();
    flat.segment(pos, biases[l].size()) = biases[l];
    pos += biases[l].size();
  }
  return flat;
}

void Parameters::assign_flat(const RealVector& flat) {
  if (flat.size() != static_cast<Index>(size())) {
    throw DimensionError("Parameters::assign_flat: length mismatch");
  }
  Index pos = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l].reshaped() = flat.segment(pos, weights[l].size());
    pos += weights[l].size();
    biases[l] = flat.segment(pos, biases[l].size());
    pos += biases[l].size();
  }
}

MlpModel MlpModel::initialize(const MlpSpec& spec, Rng& rng) {
  MlpModel model = zeros(spec);
  const std::size_t last = spec.layer_count() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    const double variance = (l == last ? 1.0 : 2.0) / spec.fan_in(l);
    const double stddev = std::sqrt(variance);
    auto& w = model.params.weights[l];
    for (Index j = 0; j < w.cols(); ++j) {
      for (Index i = 0; i < w.rows(); ++i) {
        w(i, j) = stddev * rng.normal();
      }
    }
  }
  return model;
}

MlpModel MlpModel::zeros(const MlpSpec& spec) {
  return MlpModel{spec, Parameters::zeros(spec)};
}

void MlpModel::check_consistent() const {
  spec.validate();
  if (!params.same_shape(Parameters::zeros(spec))) {
    throw DimensionError("MlpModel: parameter shapes do not match the spec");
  }
  if (!params.all_finite()) {
    throw NumericalError("MlpModel: non-finite parameter", 0);
  }
}

RealMatrix forward(const MlpModel& model, const RealMatrix& inputs, double dropout_rate, Rng* rng,
                   ForwardCache* cache) {
  const MlpSpec& spec = model.spec;
  if (inputs.rows() != spec.input_dim) {
    throw DimensionError("forward: input has " + std::to_string(inputs.rows()) + " rows, expected " +
                         std::to_string(spec.input_dim));
  }
  if (!inputs.allFinite()) {
    throw NumericalError("forward: non-finite input", 0);
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw InvalidArgument("forward: dropout_rate must lie in [0, 1)");
  }
  const bool use_dropout = dropout_rate > 0.0;
  if (use_dropout && rng == nullptr) {
    throw InvalidArgument("forward: dropout requires an rng");
  }

  const std::size_t layers = spec.layer_count();
  if (cache != nullptr) {
    cache->layer_inputs.assign(1, inputs);
    cache->pre_activations.clear();
    cache->dropout_masks.clear();
  }

  // Masks come from 16-bit chunks of the generator output, four per draw.
  // The realized drop probability is threshold / 2^16 and the inverted
  // scaling uses exactly that value.
  const std::uint64_t threshold =
      use_dropout ? std::min<std::uint64_t>(65535, static_cast<std::uint64_t>(std::llround(dropout_rate * 65536.0)))
                  : 0;
  const double keep_scale = use_dropout ? 65536.0 / static_cast<double>(65536 - threshold) : 1.0;
  RealMatrix current = inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    RealMatrix z = model.params.weights[l] * current;
    z.colwise() += model.params.biases[l];
    if (l + 1 == layers) {
      RealMatrix out;
      apply_output(spec.output_activation, z, out);
      if (cache != nullptr) {
        cache->pre_activations.push_back(std::move(z));
        cache->output = out;
      }
      return out;
    }
    RealMatrix a = z.cwiseMax(0.0);
    if (use_dropout) {
      RealMatrix mask(a.rows(), a.cols());
      double* m = mask.data();
      const Index total = mask.size();
      std::uint64_t bits = 0;
      for (Index k = 0; k < total; ++k) {
        if ((k & 3) == 0) bits = rng->next();
        m[k] = (bits & 0xffffu) < threshold ? 0.0 : keep_scale;
        bits >>= 16;
      }
      a.array() *= mask.array();
      if (cache != nullptr) cache->dropout_masks.push_back(std::move(mask));
    }
    if (cache != nullptr) {
      cache->pre_activations.push_back(std::move(z));
      cache->layer_inputs.push_back(a);
    }
    current = std::move(a);
  }
  return current;  // unreachable: layer_count() >= 1
}

RealMatrix backward(const MlpModel& model, const ForwardCache& cache, const RealMatrix& upstream,
                    GradientAt at, Parameters& grads) {
  const MlpSpec& spec = model.spec;
  const std::size_t layers = spec.layer_count();
  if (cache.pre_activations.size() != layers || cache.layer_inputs.size() != layers) {
    throw InvalidArgument("backward: cache does not belong to a complete forward pass");
  }
  if (upstream.rows() != spec.output_dim || upstream.cols() != cache.output.cols()) {
    throw DimensionError("backward: upstream gradient shape mismatch");
  }
  if (!grads.same_shape(model.params)) {
    throw DimensionError("backward: gradient accumulator shape mismatch");
  }

  RealMatrix delta;
  if (at == GradientAt::logits) {
    delta = upstream;
  } else {
    const RealMatrix& out = cache.output;
    switch (spec.output_activation.kind) {
      case OutputKind::linear:
        delta = upstream;
        break;
      case OutputKind::sigmoid:
        delta = (upstream.array() * out.array() * (1.0 - out.array())).matrix();
        break;
      case OutputKind::scaled_sigmoid: {
        const double scale = spec.output_activation.scale;
        delta = (upstream.array() * out.array() * (1.0 - out.array() / scale)).matrix();
        break;
      }
      case OutputKind::softmax: {
        delta.resize(out.rows(), out.cols());
        for (Index c = 0; c < out.cols(); ++c) {
          const double dot = out.col(c).dot(upstream.col(c));
          delta.col(c) = (out.col(c).array() * (upstream.col(c).array() - dot)).matrix();
        }
        break;
      }
    }
  }

  for (std::size_t step = 0; step < layers; ++step) {
    const std::size_t l = layers - 1 - step;
    check_finite(delta, "gradient", l);
    grads.weights[l].noalias() += delta * cache.layer_inputs[l].transpose();
    grads.biases[l] += delta.rowwise().sum();
    RealMatrix d_input = model.params.weights[l].transpose() * delta;
    if (l == 0) {
      check_finite(d_input, "input gradient", 0);
      return d_input;
    }
    const RealMatrix& z = cache.pre_activations[l - 1];
    d_input.array() *= (z.array() > 0.0).cast<double>();
    if (!cache.dropout_masks.empty()) {
      d_input.array() *= cache.dropout_masks[l - 1].array();
    }
    delta = std::move(d_input);
  }
  return delta;  // unreachable
}

RealVector mlp_forward(const MlpModel& model, const RealVector& input, double dropout_rate, Rng* rng) {
  if (input.size() != model.spec.input_dim) {
    throw DimensionError("mlp_forward: input length " + std::to_string(input.size()) + ", expected " +
                         std::to_string(model.spec.input_dim));
  }
  return forward(model, RealMatrix(input), dropout_rate, rng).col(0);
}

Loss Loss::mean_squared_error() {
  return Loss(
      [](const RealVector& output, const RealVector&, const RealVector& target, RealVector& grad) {
        const RealVector diff = output - target;
        const double n = static_cast<double>(diff.size());
        grad = (2.0 / n) * diff;
        return diff.squaredNorm() / n;
      },
      GradientAt::output);
}

Loss Loss::cross_entropy(OutputKind output) {
  if (output == OutputKind::softmax) {
    return Loss(
        [](const RealVector& out, const RealVector& logits, const RealVector& target, RealVector& grad) {
          const double mx = logits.maxCoeff();
          const double lse = mx + std::log((logits.array() - mx).exp().sum());
          grad = out * target.sum() - target;
          return lse * target.sum() - target.dot(logits);
        },
        GradientAt::logits);
  }
  if (output == OutputKind::sigmoid) {
    return Loss(
        [](const RealVector& out, const RealVector& logits, const RealVector& target, RealVector& grad) {
          double loss = 0.0;
          for (Index i = 0; i < logits.size(); ++i) {
            loss += softplus(logits[i]) - target[i] * logits[i];
          }
          grad = out - target;
          return loss;
        },
        GradientAt::logits);
  }
  throw InvalidArgument("Loss::cross_entropy: requires a sigmoid or softmax output");
}

GradientResult mlp_gradient(const MlpModel& model, std::span<const Sample> batch, const Loss& loss,
                            double dropout_rate, Rng* rng) {
  if (batch.empty()) {
    throw InvalidArgument("mlp_gradient: empty batch");
  }
  const MlpSpec& spec = model.spec;
  const Index n = static_cast<Index>(batch.size());

  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto lex_less = [](const RealVector& a, const RealVector& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (lex_less(batch[a].input, batch[b].input)) return true;
    if (lex_less(batch[b].input, batch[a].input)) return false;
    return lex_less(batch[a].target, batch[b].target);
  });

  RealMatrix inputs(spec.input_dim, n);
  for (Index c = 0; c < n; ++c) {
    const Sample& s = batch[order[static_cast<std::size_t>(c)]];
    if (s.input.size() != spec.input_dim) {
      throw DimensionError("mlp_gradient: sample input length mismatch");
    }
    inputs.col(c) = s.input;
  }

  ForwardCache cache;
  const RealMatrix out = forward(model, inputs, dropout_rate, rng, &cache);
  const RealMatrix& logits = cache.pre_activations.back();

  RealMatrix upstream(spec.output_dim, n);
  double total = 0.0;
  RealVector grad(spec.output_dim);
  for (Index c = 0; c < n; ++c) {
    const Sample& s = batch[order[static_cast<std::size_t>(c)]];
    total += loss(out.col(c), logits.col(c), s.target, grad);
    if (grad.size() != spec.output_dim) {
      throw DimensionError("mlp_gradient: loss returned a gradient of the wrong length");
    }
    upstream.col(c) = grad / static_cast<double>(n);
  }

  GradientResult result{total / static_cast<double>(n), Parameters::zeros(spec)};
  backward(model, cache, upstream, loss.at(), result.gradient);
  return result;
}

}  // namespace wml::nn
