#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "wml/edge/data.hpp"
#include "wml/nn/adam.hpp"
#include "wml/rng.hpp"
#include "wml/types.hpp"

namespace wml::edge {

inline constexpr Index kModelDim = kClasses * kImageSize + kClasses;  // 7850

// Single-layer softmax classifier. Flat layout: weights column-major, then
// biases (the nn-core order).
struct ClassifierModel {
  RealMatrix weights;  // 10 x 784
  RealVector biases;   // 10

  static ClassifierModel zeros();
  static ClassifierModel from_flat(const RealVector& flat);
  RealVector flatten() const;
  void validate() const;

  RealMatrix probabilities(const RealMatrix& images) const;  // 10 x n, columns sum to 1
  std::vector<int> predict(const RealMatrix& images) const;  // ties toward the lower class
  double accuracy(const Dataset& data) const;
};

// Mean softmax cross-entropy over the columns.
double cross_entropy(const ClassifierModel& model, const RealMatrix& images, const std::vector<int>& labels);

// Its gradient, flattened.
RealVector batch_gradient(const ClassifierModel& model, const RealMatrix& images, const std::vector<int>& labels);

// Gradient on batch_size samples drawn without replacement from the shard.
RealVector local_gradient(const ClassifierModel& model, const WorkerShard& shard, std::size_t batch_size, Rng& rng);

struct BitBudget {
  std::int64_t bits = 0;
  Index channel_uses = 0;  // floor(s / K)
  bool starved = false;    // s < K: no channel use for this worker
};

// n_k * 1/2 log2(1 + E / n_k), floored; unit noise. E = +inf gives an
// unbounded budget.
BitBudget digital_bit_budget(Index channel_uses, std::size_t n_workers, double energy);

struct DigitalMessage {
  Index dimension = 0;
  int bits_per_entry = 0;
  std::vector<std::uint32_t> indices;  // descending magnitude, ties toward the lower index
  std::vector<std::uint32_t> codes;
  float scale = 0.0f;  // signed value of the largest kept entry
  std::int64_t bit_count = 0;
  bool silent = false;  // budget below one entry

  RealVector decode() const;
};

struct AnalogMessage {
  RealVector payload;  // length s
  double alpha = 0.0;
};

using GradientMessage = std::variant<DigitalMessage, AnalogMessage>;

// Bits for one entry: index plus value.
std::int64_t digital_entry_bits(Index dimension, int bits_per_entry);
inline constexpr std::int64_t kScaleBits = 32;

// Top-q sparsification, then uniform quantization of the kept values.
DigitalMessage digital_compress(const RealVector& gradient, std::int64_t bit_budget, int bits_per_entry);

// Shared s x d projection. Gaussian entries have variance 1/s; the identity
// form requires s = d.
class Projection {
 public:
  static Projection identity(Index dim);
  static Projection gaussian(Index rows, Index cols, std::uint64_t seed);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  bool is_identity() const { return identity_; }
  const RealMatrix& matrix() const { return a_; }

  RealVector apply(const RealVector& g) const;
  // Minimum-norm solution of A x = r (exact inverse when square).
  RealVector pseudo_inverse_apply(const RealVector& r) const;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  bool identity_ = true;
  RealMatrix a_;
  RealMatrix solver_;  // LU-based inverse (square) or A^T (A A^T)^-1
};

// One worker on its own: alpha = sqrt(E) / ||A g||. A zero gradient gives
// alpha = 0 and a zero payload.
AnalogMessage analog_encode(const RealVector& gradient, double energy, const Projection& projection);

// A round: one common alpha = min_k gain_k sqrt(E) / ||A g_k|| over the
// workers with a nonzero gain; each payload is (alpha / gain_k) A g_k.
// Empty `gains` means unit gains. Returns nullopt when every projected
// gradient is zero.
std::optional<std::vector<AnalogMessage>> analog_encode_round(std::span<const RealVector> gradients, double energy,
                                                             const Projection& projection,
                                                             std::span<const double> gains = {});

// Entrywise sum of gain_k * payload_k plus N(0, noise_variance) per entry.
// Throws InvalidArgument for digital messages or mismatched lengths.
RealVector ota_round(std::span<const GradientMessage> messages, double noise_variance, Rng& rng,
                     std::span<const double> gains = {});

RealVector ps_decode_analog(const RealVector& received, double alpha, double n_workers, const Projection& projection);

struct FadingAlignment {
  std::vector<double> scale;  // 1 / gain, or 0 when silent
  std::vector<bool> active;
  std::size_t active_count = 0;
  bool skipped() const { return active_count == 0; }
};

// Channel inversion; a worker stays silent when E / gain^2 > cutoff * E.
FadingAlignment fading_align(std::span<const double> gains, double energy, double power_cutoff);

enum class TransmitScheme { analog, digital };
enum class FadingKind { none, rayleigh };

struct EdgeConfig {
  std::size_t n_workers = 10;
  Index channel_uses = kModelDim;
  double worker_energy = 20000.0;
  double noise_variance = 1.0;
  TransmitScheme scheme = TransmitScheme::analog;
  bool identity_projection = true;
  std::uint64_t projection_seed = 0;
  int bits_per_entry = 4;
  FadingKind fading = FadingKind::none;
  double power_cutoff = 10.0;
  int rounds = 300;
  std::size_t local_batch = 128;
  nn::AdamSettings optimizer{1e-3};
  int eval_interval = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DsgdResult {
  std::vector<int> rounds;
  std::vector<double> accuracy;
  ClassifierModel model;
  std::size_t silent_messages = 0;  // digital workers below one entry, or faded out
  std::size_t skipped_rounds = 0;   // nothing reached the server

  double final_accuracy() const { return accuracy.empty() ? 0.0 : accuracy.back(); }
};

// Accuracy on `testset` at round 0 and after every eval_interval rounds
// (and after the last round). Throws DivergenceError with the round index.
DsgdResult run_dsgd(const EdgeConfig& config, const Dataset& dataset, const Dataset& testset);

}  // namespace wml::edge
