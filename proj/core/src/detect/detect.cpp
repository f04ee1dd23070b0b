#include "wml/detect/detect.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "wml/errors.hpp"

namespace wml::detect {

namespace {

void check_instance(const channel::MimoInstance& inst) {
  if (inst.channel.rows() < 1 || inst.channel.cols() < 1) throw DimensionError("detect: empty channel");
  if (inst.received.size() != inst.channel.rows()) throw DimensionError("detect: received length != N");
}

// Per-batch constants of the unrolled computation, scaled by 1/N.
struct BatchTerms {
  RealMatrix hty;                // K x B
  std::vector<RealMatrix> gram;  // per instance, K x K
  RealMatrix truth;              // K x B
};

BatchTerms batch_terms(std::span<const channel::MimoInstance> batch, Index n_rx, Index n_tx) {
  const Index b = static_cast<Index>(batch.size());
  BatchTerms t;
  t.hty.resize(n_tx, b);
  t.truth.resize(n_tx, b);
  t.gram.reserve(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n_rx);
  for (Index c = 0; c < b; ++c) {
    const auto& inst = batch[static_cast<std::size_t>(c)];
    check_instance(inst);
    if (inst.n_rx() != n_rx || inst.n_tx() != n_tx) throw DimensionError("detect: instance shape differs from config");
    t.hty.col(c) = inv_n * (inst.channel.transpose() * inst.received);
    t.gram.push_back(inv_n * (inst.channel.transpose() * inst.channel));
    t.truth.col(c) = inst.input.size() == n_tx ? inst.input : RealVector::Zero(n_tx);
  }
  return t;
}

RealMatrix gram_times(const std::vector<RealMatrix>& gram, const RealMatrix& x) {
  RealMatrix out(x.rows(), x.cols());
  for (Index c = 0; c < x.cols(); ++c) out.col(c) = gram[static_cast<std::size_t>(c)] * x.col(c);
  return out;
}

struct Trajectory {
  std::vector<nn::ForwardCache> caches;
  std::vector<RealMatrix> x;  // x_0 .. x_L
  std::vector<RealMatrix> v;  // v_0 .. v_L
};

Trajectory unroll(const UnfoldedDetector& d, const BatchTerms& t) {
  const Index k = d.config.n_tx;
  const Index b = t.hty.cols();
  Trajectory tr;
  tr.caches.resize(d.layers.size());
  tr.x.push_back(RealMatrix::Zero(k, b));
  tr.v.push_back(RealMatrix::Zero(k, b));
  RealMatrix in(4 * k, b);
  for (std::size_t l = 0; l < d.layers.size(); ++l) {
    in.topRows(k) = t.hty;
    in.middleRows(k, k) = tr.v.back();
    in.middleRows(2 * k, k) = tr.x.back();
    in.bottomRows(k) = gram_times(t.gram, tr.x.back());
    const RealMatrix out = nn::forward(d.layers[l], in, 0.0, nullptr, &tr.caches[l]);
    tr.v.push_back(out.topRows(k));
    tr.x.push_back(out.bottomRows(k).array().tanh().matrix());
  }
  return tr;
}

}  // namespace

RealVector hard_decision(const RealVector& soft) {
  RealVector out(soft.size());
  for (Index i = 0; i < soft.size(); ++i) out[i] = soft[i] < 0.0 ? -1.0 : 1.0;
  return out;
}

double noise_std_for_snr(double snr_db, Index n_tx) {
  if (n_tx < 1) throw InvalidArgument("noise_std_for_snr: K must be >= 1");
  return std::sqrt(static_cast<double>(n_tx) / std::pow(10.0, snr_db / 10.0));
}

DetectionResult ml_detect(const channel::MimoInstance& inst) {
  check_instance(inst);
  const Index k = inst.n_tx();
  if (k > kMaxEnumerationTx) throw InvalidArgument("ml_detect: K above the enumeration limit of 12");
  RealVector x(k), best(k);
  double best_cost = std::numeric_limits<double>::infinity();
  // m's bits read from the first symbol down, 0 -> -1, so candidates come in
  // lexicographic order and the first strict minimum wins ties
  const std::uint32_t count = 1u << k;
  for (std::uint32_t m = 0; m < count; ++m) {
    for (Index i = 0; i < k; ++i) x[i] = ((m >> (k - 1 - i)) & 1u) ? 1.0 : -1.0;
    const double cost = (inst.received - inst.channel * x).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best = x;
    }
  }
  return DetectionResult{best, best};
}

DetectionResult zf_detect(const channel::MimoInstance& inst) {
  check_instance(inst);
  const Eigen::ColPivHouseholderQR<RealMatrix> qr(inst.channel);
  if (qr.rank() < inst.n_tx()) throw InvalidArgument("zf_detect: channel lacks full column rank");
  const RealVector soft = qr.solve(inst.received);
  return DetectionResult{hard_decision(soft), soft};
}

nn::MlpSpec DetectorConfig::layer_network() const {
  nn::MlpSpec s;
  s.input_dim = static_cast<int>(4 * n_tx);
  s.hidden_layers = {hidden};
  s.output_dim = static_cast<int>(2 * n_tx);
  s.hidden_activation = nn::HiddenActivation::relu;
  s.output_activation = nn::OutputActivation::linear();
  s.dropout_rate = 0.0;
  return s;
}

void DetectorConfig::validate() const {
  if (n_rx < 1 || n_tx < 1) throw InvalidArgument("DetectorConfig: N and K must be >= 1");
  if (layers < 1) throw InvalidArgument("DetectorConfig: layers must be >= 1");
  if (hidden < 1) throw InvalidArgument("DetectorConfig: hidden must be >= 1");
  if (batch_size < 1) throw InvalidArgument("DetectorConfig: batch_size must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw InvalidArgument("DetectorConfig: learning rate must be positive");
  if (!std::isfinite(snr_db)) throw InvalidArgument("DetectorConfig: snr_db must be finite");
}

UnfoldedDetector UnfoldedDetector::initialize(const DetectorConfig& cfg, Rng& rng) {
  cfg.validate();
  UnfoldedDetector d;
  d.config = cfg;
  for (int l = 0; l < cfg.layers; ++l) {
    Rng layer_rng = rng.child("detector-layer", static_cast<std::uint64_t>(l));
    d.layers.push_back(nn::MlpModel::initialize(cfg.layer_network(), layer_rng));
  }
  return d;
}

std::vector<RealMatrix> UnfoldedDetector::soft_trajectory(std::span<const channel::MimoInstance> batch) const {
  if (batch.empty()) throw InvalidArgument("detector: empty batch");
  const BatchTerms t = batch_terms(batch, config.n_rx, config.n_tx);
  Trajectory tr = unroll(*this, t);
  return {tr.x.begin() + 1, tr.x.end()};
}

DetectionResult UnfoldedDetector::detect(const channel::MimoInstance& instance) const {
  const channel::MimoInstance one[] = {instance};
  const RealVector soft = soft_trajectory(one).back().col(0);
  return DetectionResult{hard_decision(soft), soft};
}

UnfoldedGradient unfolded_gradient(const UnfoldedDetector& d, std::span<const channel::MimoInstance> batch) {
  if (batch.empty()) throw InvalidArgument("unfolded_gradient: empty batch");
  const Index k = d.config.n_tx;
  const BatchTerms t = batch_terms(batch, d.config.n_rx, k);
  const Trajectory tr = unroll(d, t);
  const std::size_t layers = d.layers.size();
  const double norm = 1.0 / static_cast<double>(k * t.hty.cols());

  UnfoldedGradient out;
  for (const auto& m : d.layers) out.gradients.push_back(nn::Parameters::zeros(m.spec));
  for (std::size_t l = 1; l <= layers; ++l) out.loss += (tr.x[l] - t.truth).squaredNorm() * norm;

  RealMatrix dx = RealMatrix::Zero(k, t.hty.cols());
  RealMatrix dv = RealMatrix::Zero(k, t.hty.cols());
  for (std::size_t l = layers; l >= 1; --l) {
    dx += 2.0 * norm * (tr.x[l] - t.truth);
    RealMatrix upstream(2 * k, t.hty.cols());
    upstream.topRows(k) = dv;
    upstream.bottomRows(k) = dx.cwiseProduct((1.0 - tr.x[l].array().square()).matrix());
    const RealMatrix d_in = nn::backward(d.layers[l - 1], tr.caches[l - 1], upstream, nn::GradientAt::output,
                                         out.gradients[l - 1]);
    dv = d_in.middleRows(k, k);
    // the Gram blocks are symmetric
    dx = d_in.middleRows(2 * k, k) + gram_times(t.gram, d_in.bottomRows(k));
  }
  return out;
}

std::vector<channel::MimoInstance> draw_instances(Index n_rx, Index n_tx, double snr_db, std::size_t count, Rng& rng) {
  const double sd = noise_std_for_snr(snr_db, n_tx);
  std::vector<channel::MimoInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(channel::draw_mimo_instance(n_rx, n_tx, sd, rng));
  return out;
}

TrainedDetector learned_detect_train(const DetectorConfig& cfg, std::size_t n_train) {
  cfg.validate();
  if (n_train < 1) throw InvalidArgument("learned_detect_train: n_train must be >= 1");
  const Rng root(cfg.seed);
  Rng init = root.child("init");
  TrainedDetector out{UnfoldedDetector::initialize(cfg, init), {}};
  std::vector<nn::AdamState> adam;
  for (const auto& m : out.detector.layers) adam.push_back(nn::AdamState::for_spec(m.spec, cfg.optimizer));

  std::size_t step = 0;
  for (std::size_t done = 0; done < n_train; done += cfg.batch_size, ++step) {
    const std::size_t count = std::min(cfg.batch_size, n_train - done);
    Rng data = root.child("train", step);
    const auto batch = draw_instances(cfg.n_rx, cfg.n_tx, cfg.snr_db, count, data);
    UnfoldedGradient g;
    try {
      g = unfolded_gradient(out.detector, batch);
    } catch (const NumericalError& e) {
      throw DivergenceError(std::string("learned_detect_train: ") + e.what(), step);
    }
    if (!std::isfinite(g.loss)) throw DivergenceError("learned_detect_train: non-finite loss", step);
    for (std::size_t l = 0; l < adam.size(); ++l) nn::adam_step(out.detector.layers[l], adam[l], g.gradients[l]);
    out.loss_trace.push_back(g.loss);
  }
  return out;
}

double ber(const Detector& detector, std::span<const channel::MimoInstance> instances) {
  if (instances.empty()) throw InvalidArgument("ber: no instances");
  std::size_t wrong = 0, total = 0;
  for (const auto& inst : instances) {
    const DetectionResult r = detector(inst);
    if (r.estimate.size() != inst.input.size()) throw DimensionError("ber: estimate length differs from the input");
    for (Index i = 0; i < r.estimate.size(); ++i) wrong += r.estimate[i] != inst.input[i] ? 1u : 0u;
    total += static_cast<std::size_t>(inst.input.size());
  }
  return static_cast<double>(wrong) / static_cast<double>(total);
}

}  // namespace wml::detect
