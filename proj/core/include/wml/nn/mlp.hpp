#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "wml/rng.hpp"
#include "wml/types.hpp"

namespace wml::nn {

enum class HiddenActivation { relu };

enum class OutputKind { linear, sigmoid, softmax, scaled_sigmoid };

struct OutputActivation {
  OutputKind kind = OutputKind::linear;
  double scale = 1.0;  // only read for scaled_sigmoid

  static OutputActivation linear() { return {OutputKind::linear, 1.0}; }
  static OutputActivation sigmoid() { return {OutputKind::sigmoid, 1.0}; }
  static OutputActivation softmax() { return {OutputKind::softmax, 1.0}; }
  static OutputActivation scaled_sigmoid(double scale) { return {OutputKind::scaled_sigmoid, scale}; }

  bool operator==(const OutputActivation&) const = default;
};

struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden_layers;
  int output_dim = 1;
  HiddenActivation hidden_activation = HiddenActivation::relu;
  OutputActivation output_activation;
  double dropout_rate = 0.0;

  // Throws InvalidArgument when a dimension is < 1, dropout is outside
  // [0, 1) or a scaled_sigmoid scale is not positive.
  void validate() const;

  std::size_t layer_count() const { return hidden_layers.size() + 1; }
  int fan_in(std::size_t layer) const;
  int fan_out(std::size_t layer) const;

  bool operator==(const MlpSpec&) const = default;
};

// Parameter-shaped storage. Used both for the model itself and for
// gradients / optimizer moments.
struct Parameters {
  std::vector<RealMatrix> weights;
  std::vector<RealVector> biases;

  static Parameters zeros(const MlpSpec& spec);

  std::size_t size() const;
  bool same_shape(const Parameters& other) const;
  bool all_finite() const;
  void set_zero();

  Parameters& operator+=(const Parameters& other);
  Parameters& operator*=(double factor);

  // Layer by layer: weights (column-major), then bias.
  RealVector flatten() const;
  void assign_flat(const RealVector& flat);
};

struct MlpModel {
  MlpSpec spec;
  Parameters params;

  // He-scaled Gaussian weights (variance 2/fan_in) on ReLU layers, variance
  // 1/fan_in on the output layer, zero biases.
  static MlpModel initialize(const MlpSpec& spec, Rng& rng);
  static MlpModel zeros(const MlpSpec& spec);

  const std::vector<RealMatrix>& weights() const { return params.weights; }
  const std::vector<RealVector>& biases() const { return params.biases; }

  void check_consistent() const;
};

// Intermediate values of one batched forward pass, kept for backward().
// Columns are samples.
struct ForwardCache {
  std::vector<RealMatrix> layer_inputs;  // [0] is the network input
  std::vector<RealMatrix> pre_activations;
  std::vector<RealMatrix> dropout_masks;  // per hidden layer; empty when unused
  RealMatrix output;
};

// Batched forward pass; `inputs` is input_dim x batch. Dropout with inverted
// scaling is applied to hidden activations when dropout_rate > 0, which
// requires an rng.
RealMatrix forward(const MlpModel& model, const RealMatrix& inputs, double dropout_rate = 0.0,
                   Rng* rng = nullptr, ForwardCache* cache = nullptr);

enum class GradientAt { output, logits };

// Reverse pass for a cached forward pass. `upstream` is d(objective)/d(output)
// or, for fused losses, d(objective)/d(logits). Parameter gradients are
// accumulated into `grads`; the gradient with respect to the inputs is
// returned. Non-finite values raise NumericalError carrying the layer index.
RealMatrix backward(const MlpModel& model, const ForwardCache& cache, const RealMatrix& upstream,
                    GradientAt at, Parameters& grads);

RealVector mlp_forward(const MlpModel& model, const RealVector& input, double dropout_rate = 0.0,
                       Rng* rng = nullptr);

struct Sample {
  RealVector input;
  RealVector target;
};

// Per-sample objective. The batch objective is the mean over samples.
class Loss {
 public:
  // (output, logits, target, grad) -> loss. Writes into grad the derivative
  // with respect to the output, or the logits when at() == logits.
  using Fn = std::function<double(const RealVector& output, const RealVector& logits,
                                  const RealVector& target, RealVector& grad)>;

  Loss(Fn fn, GradientAt at) : fn_(std::move(fn)), at_(at) {}

  // mean over entries of (output - target)^2
  static Loss mean_squared_error();
  // Fused with a sigmoid (independent Bernoulli entries) or softmax output.
  // Computed from the logits with log-sum-exp.
  static Loss cross_entropy(OutputKind output);
  static Loss custom(Fn fn) { return Loss(std::move(fn), GradientAt::output); }

  double operator()(const RealVector& output, const RealVector& logits, const RealVector& target,
                    RealVector& grad) const {
    return fn_(output, logits, target, grad);
  }
  GradientAt at() const { return at_; }

 private:
  Fn fn_;
  GradientAt at_;
};

struct GradientResult {
  double loss = 0.0;
  Parameters gradient;
};

// Exact reverse-mode gradient of the mean batch loss. The batch is processed
// in a canonical (lexicographic) order, so any permutation of the same
// samples yields bit-identical results. The model is not modified.
GradientResult mlp_gradient(const MlpModel& model, std::span<const Sample> batch, const Loss& loss,
                            double dropout_rate = 0.0, Rng* rng = nullptr);

}  // namespace wml::nn
