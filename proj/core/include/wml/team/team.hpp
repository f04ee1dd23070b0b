#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "wml/channel/channels.hpp"
#include "wml/nn/adam.hpp"
#include "wml/nn/mlp.hpp"
#include "wml/nn/train.hpp"
#include "wml/rng.hpp"

namespace wml::team {

enum class Cooperation { none, one_way_1_to_2, two_way };

// Two transmitters, two receivers. Defaults follow the training table used
// for the sum-rate experiment.
struct TdConfig {
  std::size_t n_agents = 2;
  std::array<double, 2> noise_levels{0.5, 0.0};
  double p_max = 1.0;
  Cooperation cooperation = Cooperation::one_way_1_to_2;
  double link_snr_db = 10.0;  // +infinity disables the link noise
  int message_dim = 1;
  nn::TrainConfig training{400, 1000, 0.3, 0.0, 0};
  nn::MlpSpec network = default_network();
  double learning_rate = 3e-5;
  std::size_t n_train = 4000;
  std::size_t n_test = 10000;
  double gain_mean = 1.0;
  int grid_points = 1001;
  int best_response_epoch_divisor = 5;
  // Power networks start out emitting this fraction of P (output-layer bias).
  double initial_power_fraction = 0.95;
  // Independent starts of the centralized reference; the best on the
  // training objective is kept.
  int centralized_restarts = 3;

  // 4 x 50 ReLU hidden layers; input/output sizes are set per network role.
  static nn::MlpSpec default_network();
  void validate() const;
};

// Per-feature affine standardization fitted on training observations.
struct Standardizer {
  RealVector mean;
  RealVector scale;  // 1 / std, with unit scale for constant features

  static Standardizer fit(const RealMatrix& features);  // features x samples
  RealMatrix apply(const RealMatrix& features) const;
};

struct PowerPolicy {
  nn::MlpModel model;
  Standardizer standardizer;
  Index output_index = 0;   // which network output is this agent's power
  bool sees_world = false;  // centralized reference: perfect G instead of y_j
};

struct MessagePolicy {
  std::size_t sender = 0;
  std::size_t receiver = 1;
  nn::MlpModel model;
  double power_estimate = 1.0;  // mean z^2, sets the test-time link noise
};

enum class Scheme { centralized, decentralized, naive };

struct PolicySet {
  Scheme scheme = Scheme::decentralized;
  Cooperation cooperation = Cooperation::none;
  double p_max = 1.0;
  double link_snr_db = 10.0;
  int message_dim = 1;
  std::vector<PowerPolicy> power;
  std::vector<MessagePolicy> messages;

  std::size_t network_count() const { return power.size() + messages.size(); }
};

struct TestSet {
  std::vector<channel::WorldSample> samples;
  std::optional<double> centralized_reference;  // average sum rate of the centralized policy
  std::uint64_t seed = 0;                       // drives test-time link noise
};

struct EvalReport {
  double avg_sum_rate = 0.0;
  double normalized = 0.0;
  std::size_t n_test = 0;
  std::uint64_t seed = 0;
};

struct TrainedPolicies {
  PolicySet policies;
  std::vector<double> loss_trace;  // batch-mean negative sum rate per epoch
};

struct BestResponseResult {
  PolicySet policies;
  std::vector<double> sweep_sum_rate;  // objective on the evaluation set; [0] is the initial policy
};

// R_1 + R_2 with R_i = 1/2 log2(1 + g_ii p_i / (1 + g_ij p_j)), j != i,
// unit noise.
double sum_rate(const channel::InterferenceChannel& g, double p1, double p2);

// Partial derivatives of sum_rate with respect to (p1, p2).
std::pair<double, double> sum_rate_gradient(const channel::InterferenceChannel& g, double p1, double p2);

// Adds N(0, power_estimate / 10^(snr/10)) per entry; identity for snr = +inf.
RealVector message_link(const RealVector& z, double link_snr_db, double batch_power_estimate, Rng& rng);

std::vector<channel::WorldSample> draw_dataset(const TdConfig& cfg, std::size_t count, Rng& rng);
TestSet draw_testset(const TdConfig& cfg, Rng& rng);

// Centralized training of the decentralized architecture (with message
// networks when cooperation is enabled): every network is updated jointly
// by Adam on the batch-mean negative sum rate.
TrainedPolicies train_decentralized(const TdConfig& cfg, std::span<const channel::WorldSample> dataset, Rng& rng);
TrainedPolicies train_decentralized(const TdConfig& cfg, Rng& rng);

// One network on perfect G controlling both powers.
TrainedPolicies train_centralized(const TdConfig& cfg, std::span<const channel::WorldSample> dataset, Rng& rng);

// Agent j optimizes both powers from y_j alone, as if y_j were perfect and
// shared; at test time it applies output j only.
TrainedPolicies train_naive(const TdConfig& cfg, std::span<const channel::WorldSample> dataset, Rng& rng);
TrainedPolicies train_naive(const TdConfig& cfg, Rng& rng);

// Alternating best response: each sweep trains one free agent at a time
// (its power network and the messages it sends) with the others frozen, for
// training.epochs / best_response_epoch_divisor epochs. `agents` restricts
// which agents are ever updated (default: all). `evaluation` fixes the set
// on which sweep_sum_rate is measured (default: the training set).
BestResponseResult train_best_response(const TdConfig& cfg, const PolicySet& initial, int sweeps,
                                       std::span<const channel::WorldSample> dataset, Rng& rng,
                                       const std::vector<std::size_t>& agents = {},
                                       const TestSet* evaluation = nullptr);

// The less informed TX 1 transmits at P; TX 2 best-responds on a uniform grid
// of [0, P], ties toward the smaller power.
std::pair<double, double> active_passive(const channel::InterferenceChannel& g, double p_max, int grid_points);

// argmax over a uniform grid of [0, P] of sum_rate(g, p1, .), ties toward
// the smaller power.
double grid_best_response_p2(const channel::InterferenceChannel& g, double p1, double p_max, int grid_points);

// Per-sample powers produced by decentralized testing (dropout off).
struct PowerDecisions {
  std::vector<double> p1;
  std::vector<double> p2;
};
PowerDecisions decide(const PolicySet& policies, std::span<const channel::WorldSample> samples, Rng& link_rng);

// Mean sum rate under decentralized testing; deterministic given testset.seed.
double average_sum_rate(const PolicySet& policies, const TestSet& testset);

void attach_centralized_reference(TestSet& testset, const PolicySet& centralized);

// Throws InvalidArgument when the testset carries no centralized reference.
EvalReport evaluate(const PolicySet& policies, const TestSet& testset);
EvalReport evaluate_active_passive(const TestSet& testset, double p_max, int grid_points);

// TX 1 uses its trained power and message networks; TX 2 ignores its power
// network, takes the received message (clipped to [0, P]) as TX 1's power and
// grid-optimizes its own power against it with perfect G.
EvalReport forced_power_sharing_eval(const PolicySet& policies, const TestSet& testset, double p_max,
                                     int grid_points);

// Loss (batch-mean negative sum rate) and per-network gradients of the joint
// objective, in PolicySet order: power networks, then message networks.
// `dropout` > 0 or a finite link SNR require `rng`.
// Normalized average sum rate of the six compared schemes at one sigma_1.
struct SchemeScores {
  double sigma1 = 0.0;
  double centralized = 1.0;
  double cooperative = 0.0;    // decentralized with the TX1 -> TX2 message
  double decentralized = 0.0;  // no message
  double naive = 0.0;
  double active_passive = 0.0;
  double forced_sharing = 0.0;
  double centralized_avg_sum_rate = 0.0;
};

// One training seed: draws train/test sets from `seed` (the gains do not
// depend on sigma, so one centralized reference serves every sigma_1), then
// trains and evaluates each scheme. cfg.noise_levels[1] is kept as sigma_2.
std::vector<SchemeScores> compare_schemes(const TdConfig& cfg, std::span<const double> sigma1_values,
                                          std::uint64_t seed);

struct JointGradient {
  double loss = 0.0;
  std::vector<nn::Parameters> gradients;
};
JointGradient joint_gradient(const PolicySet& policies, std::span<const channel::WorldSample> batch, double dropout,
                             Rng* rng);

}  // namespace wml::team
