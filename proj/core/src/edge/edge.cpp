#include "wml/edge/edge.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "wml/errors.hpp"

namespace wml::edge {

namespace {

RealMatrix softmax_columns(RealMatrix logits) {
  for (Index c = 0; c < logits.cols(); ++c) {
    auto col = logits.col(c);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
  return logits;
}

void check_batch(const RealMatrix& images, const std::vector<int>& labels) {
  if (images.rows() != kImageSize) throw DimensionError("classifier: images must have 784 rows");
  if (static_cast<std::size_t>(images.cols()) != labels.size()) {
    throw DimensionError("classifier: image and label counts differ");
  }
  if (labels.empty()) throw InvalidArgument("classifier: empty batch");
}

bool all_finite(const RealVector& v) { return v.allFinite(); }

}  // namespace

ClassifierModel ClassifierModel::zeros() {
  return ClassifierModel{RealMatrix::Zero(kClasses, kImageSize), RealVector::Zero(kClasses)};
}

ClassifierModel ClassifierModel::from_flat(const RealVector& flat) {
  if (flat.size() != kModelDim) throw DimensionError("ClassifierModel: flat vector must have 7850 entries");
  ClassifierModel m;
  m.weights = flat.head(kClasses * kImageSize).reshaped(kClasses, kImageSize);
  m.biases = flat.tail(kClasses);
  return m;
}

RealVector ClassifierModel::flatten() const {
  RealVector flat(kModelDim);
  flat.head(kClasses * kImageSize) = weights.reshaped();
  flat.tail(kClasses) = biases;
  return flat;
}

void ClassifierModel::validate() const {
  if (weights.rows() != kClasses || weights.cols() != kImageSize || biases.size() != kClasses) {
    throw DimensionError("ClassifierModel: expected 10x784 weights and 10 biases");
  }
  if (!weights.allFinite() || !biases.allFinite()) {
    throw NumericalError("ClassifierModel: non-finite parameter", 0);
  }
}

RealMatrix ClassifierModel::probabilities(const RealMatrix& images) const {
  if (images.rows() != kImageSize) throw DimensionError("classifier: images must have 784 rows");
  RealMatrix logits = weights * images;
  logits.colwise() += biases;
  return softmax_columns(std::move(logits));
}

std::vector<int> ClassifierModel::predict(const RealMatrix& images) const {
  if (images.rows() != kImageSize) throw DimensionError("classifier: images must have 784 rows");
  RealMatrix logits = weights * images;
  logits.colwise() += biases;
  std::vector<int> out(static_cast<std::size_t>(images.cols()));
  for (Index c = 0; c < logits.cols(); ++c) {
    Index best = 0;
    logits.col(c).maxCoeff(&best);  // first maximum
    out[static_cast<std::size_t>(c)] = static_cast<int>(best);
  }
  return out;
}

double ClassifierModel::accuracy(const Dataset& data) const {
  if (data.size() == 0) throw InvalidArgument("accuracy: empty dataset");
  const std::vector<int> pred = predict(data.images);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i] ? 1u : 0u;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double cross_entropy(const ClassifierModel& model, const RealMatrix& images, const std::vector<int>& labels) {
  check_batch(images, labels);
  RealMatrix logits = model.weights * images;
  logits.colwise() += model.biases;
  double total = 0.0;
  for (Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    const double lse = m + std::log((logits.col(c).array() - m).exp().sum());
    total += lse - logits(labels[static_cast<std::size_t>(c)], c);
  }
  return total / static_cast<double>(logits.cols());
}

RealVector batch_gradient(const ClassifierModel& model, const RealMatrix& images, const std::vector<int>& labels) {
  check_batch(images, labels);
  RealMatrix delta = model.probabilities(images);
  for (Index c = 0; c < delta.cols(); ++c) {
    const int l = labels[static_cast<std::size_t>(c)];
    if (l < 0 || l >= kClasses) throw InvalidArgument("classifier: label outside 0-9");
    delta(l, c) -= 1.0;
  }
  delta /= static_cast<double>(delta.cols());
  RealVector flat(kModelDim);
  flat.head(kClasses * kImageSize) = (delta * images.transpose()).reshaped();
  flat.tail(kClasses) = delta.rowwise().sum();
  return flat;
}

RealVector local_gradient(const ClassifierModel& model, const WorkerShard& shard, std::size_t batch_size, Rng& rng) {
  if (batch_size < 1 || batch_size > shard.size()) {
    throw InvalidArgument("local_gradient: batch_size must lie in [1, shard size]");
  }
  // partial Fisher-Yates
  std::vector<Index> idx(shard.size());
  std::iota(idx.begin(), idx.end(), Index{0});
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(batch_size);
  const Dataset batch = shard.subset(idx);
  return batch_gradient(model, batch.images, batch.labels);
}

BitBudget digital_bit_budget(Index channel_uses, std::size_t n_workers, double energy) {
  if (channel_uses < 0 || n_workers < 1) throw InvalidArgument("digital_bit_budget: bad channel or worker count");
  if (!(energy >= 0.0)) throw InvalidArgument("digital_bit_budget: energy must be >= 0");
  BitBudget b;
  b.channel_uses = channel_uses / static_cast<Index>(n_workers);
  if (b.channel_uses == 0) {
    b.starved = true;
    return b;
  }
  if (std::isinf(energy)) {
    b.bits = std::numeric_limits<std::int64_t>::max();
    return b;
  }
  const double n = static_cast<double>(b.channel_uses);
  b.bits = static_cast<std::int64_t>(std::floor(n * 0.5 * std::log2(1.0 + energy / n)));
  return b;
}

std::int64_t digital_entry_bits(Index dimension, int bits_per_entry) {
  const auto d = static_cast<std::uint64_t>(dimension);
  const std::int64_t index_bits = d <= 1 ? 0 : static_cast<std::int64_t>(std::bit_width(d - 1));
  return index_bits + bits_per_entry;
}

DigitalMessage digital_compress(const RealVector& gradient, std::int64_t bit_budget, int bits_per_entry) {
  if (bits_per_entry < 1 || bits_per_entry > 32) {
    throw InvalidArgument("digital_compress: bits_per_entry must lie in [1, 32]");
  }
  if (gradient.size() == 0) throw DimensionError("digital_compress: empty gradient");
  if (!all_finite(gradient)) throw NumericalError("digital_compress: non-finite gradient entry", 0);

  DigitalMessage msg;
  msg.dimension = gradient.size();
  msg.bits_per_entry = bits_per_entry;
  const std::int64_t entry = digital_entry_bits(msg.dimension, bits_per_entry);
  if (bit_budget < entry + kScaleBits) {
    msg.silent = true;
    return msg;
  }
  const auto q = static_cast<std::size_t>(
      std::min<std::int64_t>(static_cast<std::int64_t>(msg.dimension), (bit_budget - kScaleBits) / entry));

  std::vector<std::uint32_t> order(static_cast<std::size_t>(msg.dimension));
  std::iota(order.begin(), order.end(), 0u);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(q), order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      const double ma = std::abs(gradient[a]), mb = std::abs(gradient[b]);
                      return ma != mb ? ma > mb : a < b;
                    });
  msg.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(q));
  msg.scale = static_cast<float>(gradient[msg.indices.front()]);
  msg.bit_count = static_cast<std::int64_t>(q) * entry + kScaleBits;

  // midrise cells over [-|scale|, |scale|]; the first entry is carried by the
  // scale itself
  const double range = std::abs(static_cast<double>(msg.scale));
  const double levels = std::ldexp(1.0, bits_per_entry);
  const double top = levels - 1.0;
  msg.codes.reserve(q);
  for (std::uint32_t i : msg.indices) {
    double code = 0.0;
    if (range > 0.0) {
      const double step = 2.0 * range / levels;
      code = std::clamp(std::floor((gradient[i] + range) / step), 0.0, top);
    }
    msg.codes.push_back(static_cast<std::uint32_t>(code));
  }
  return msg;
}

RealVector DigitalMessage::decode() const {
  RealVector out = RealVector::Zero(dimension);
  if (silent || indices.empty() || scale == 0.0f) return out;
  const double range = std::abs(static_cast<double>(scale));
  const double step = 2.0 * range / std::ldexp(1.0, bits_per_entry);
  out[indices.front()] = static_cast<double>(scale);
  for (std::size_t k = 1; k < indices.size(); ++k) {
    out[indices[k]] = -range + (static_cast<double>(codes[k]) + 0.5) * step;
  }
  return out;
}

Projection Projection::identity(Index dim) {
  if (dim < 1) throw InvalidArgument("Projection: dimension must be positive");
  Projection p;
  p.rows_ = dim;
  p.cols_ = dim;
  p.identity_ = true;
  return p;
}

Projection Projection::gaussian(Index rows, Index cols, std::uint64_t seed) {
  if (rows < 1 || cols < 1) throw InvalidArgument("Projection: dimensions must be positive");
  if (rows > cols) throw InvalidArgument("Projection: needs s <= d");
  Projection p;
  p.rows_ = rows;
  p.cols_ = cols;
  p.identity_ = false;
  Rng rng(seed);
  const double sd = 1.0 / std::sqrt(static_cast<double>(rows));
  p.a_.resize(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) p.a_(i, j) = sd * rng.normal();
  }
  if (rows == cols) {
    p.solver_ = p.a_.partialPivLu().inverse();
  } else {
    const RealMatrix gram = p.a_ * p.a_.transpose();
    p.solver_ = p.a_.transpose() * gram.llt().solve(RealMatrix::Identity(rows, rows));
  }
  return p;
}

RealVector Projection::apply(const RealVector& g) const {
  if (g.size() != cols_) throw DimensionError("Projection: gradient length mismatch");
  return identity_ ? g : RealVector(a_ * g);
}

RealVector Projection::pseudo_inverse_apply(const RealVector& r) const {
  if (r.size() != rows_) throw DimensionError("Projection: received length mismatch");
  return identity_ ? r : RealVector(solver_ * r);
}

AnalogMessage analog_encode(const RealVector& gradient, double energy, const Projection& projection) {
  const RealVector one[] = {gradient};
  auto round = analog_encode_round(one, energy, projection);
  if (!round) return AnalogMessage{RealVector::Zero(projection.rows()), 0.0};
  return std::move(round->front());
}

std::optional<std::vector<AnalogMessage>> analog_encode_round(std::span<const RealVector> gradients, double energy,
                                                             const Projection& projection,
                                                             std::span<const double> gains) {
  if (!(energy > 0.0) || std::isinf(energy)) throw InvalidArgument("analog_encode: energy must be positive and finite");
  if (!gains.empty() && gains.size() != gradients.size()) {
    throw DimensionError("analog_encode: one gain per worker required");
  }
  std::vector<RealVector> projected;
  projected.reserve(gradients.size());
  double alpha = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < gradients.size(); ++k) {
    if (!all_finite(gradients[k])) throw NumericalError("analog_encode: non-finite gradient", k);
    projected.push_back(projection.apply(gradients[k]));
    const double gain = gains.empty() ? 1.0 : gains[k];
    const double norm = projected.back().norm();
    if (gain > 0.0 && norm > 0.0) alpha = std::min(alpha, gain * std::sqrt(energy) / norm);
  }
  if (std::isinf(alpha)) return std::nullopt;

  std::vector<AnalogMessage> out;
  out.reserve(gradients.size());
  for (std::size_t k = 0; k < gradients.size(); ++k) {
    const double gain = gains.empty() ? 1.0 : gains[k];
    AnalogMessage m;
    m.alpha = alpha;
    m.payload = gain > 0.0 ? RealVector((alpha / gain) * projected[k]) : RealVector::Zero(projection.rows());
    out.push_back(std::move(m));
  }
  return out;
}

RealVector ota_round(std::span<const GradientMessage> messages, double noise_variance, Rng& rng,
                     std::span<const double> gains) {
  if (messages.empty()) throw InvalidArgument("ota_round: no messages");
  if (!(noise_variance >= 0.0)) throw InvalidArgument("ota_round: noise_variance must be >= 0");
  if (!gains.empty() && gains.size() != messages.size()) throw DimensionError("ota_round: one gain per message");
  RealVector sum;
  for (std::size_t k = 0; k < messages.size(); ++k) {
    const auto* m = std::get_if<AnalogMessage>(&messages[k]);
    if (m == nullptr) throw InvalidArgument("ota_round: digital messages cannot be superposed");
    if (k == 0) {
      sum = RealVector::Zero(m->payload.size());
    } else if (m->payload.size() != sum.size()) {
      throw DimensionError("ota_round: payload lengths differ");
    }
    sum += (gains.empty() ? 1.0 : gains[k]) * m->payload;
  }
  if (noise_variance > 0.0) {
    const double sd = std::sqrt(noise_variance);
    for (Index i = 0; i < sum.size(); ++i) sum[i] += sd * rng.normal();
  }
  return sum;
}

RealVector ps_decode_analog(const RealVector& received, double alpha, double n_workers, const Projection& projection) {
  if (!(alpha > 0.0)) throw InvalidArgument("ps_decode_analog: alpha must be positive");
  if (!(n_workers > 0.0)) throw InvalidArgument("ps_decode_analog: worker count must be positive");
  return projection.pseudo_inverse_apply(received) / (alpha * n_workers);
}

FadingAlignment fading_align(std::span<const double> gains, double energy, double power_cutoff) {
  if (!(power_cutoff > 0.0)) throw InvalidArgument("fading_align: power_cutoff must be positive");
  if (!(energy >= 0.0)) throw InvalidArgument("fading_align: energy must be >= 0");
  FadingAlignment a;
  a.scale.assign(gains.size(), 0.0);
  a.active.assign(gains.size(), false);
  for (std::size_t k = 0; k < gains.size(); ++k) {
    const double h = gains[k];
    if (!(h >= 0.0)) throw InvalidArgument("fading_align: gains must be >= 0");
    // required energy E / h^2 against the cutoff * E ceiling
    const bool affordable = energy == 0.0 || h * h * power_cutoff >= 1.0;
    if (h > 0.0 && affordable) {
      a.scale[k] = 1.0 / h;
      a.active[k] = true;
      ++a.active_count;
    }
  }
  return a;
}

void EdgeConfig::validate() const {
  if (n_workers < 1) throw InvalidArgument("EdgeConfig: n_workers must be >= 1");
  if (channel_uses < 1) throw InvalidArgument("EdgeConfig: channel_uses must be >= 1");
  if (identity_projection && channel_uses != kModelDim) {
    throw InvalidArgument("EdgeConfig: identity projection needs channel_uses = 7850");
  }
  if (channel_uses > kModelDim) throw InvalidArgument("EdgeConfig: channel_uses exceeds the model dimension");
  if (scheme == TransmitScheme::analog && !(worker_energy > 0.0 && std::isfinite(worker_energy))) {
    throw InvalidArgument("EdgeConfig: analog needs a positive finite worker_energy");
  }
  if (!(worker_energy >= 0.0)) throw InvalidArgument("EdgeConfig: worker_energy must be >= 0");
  if (!(noise_variance >= 0.0)) throw InvalidArgument("EdgeConfig: noise_variance must be >= 0");
  if (bits_per_entry < 1 || bits_per_entry > 32) throw InvalidArgument("EdgeConfig: bits_per_entry in [1, 32]");
  if (!(power_cutoff > 0.0)) throw InvalidArgument("EdgeConfig: power_cutoff must be positive");
  if (rounds < 0) throw InvalidArgument("EdgeConfig: rounds must be >= 0");
  if (local_batch < 1) throw InvalidArgument("EdgeConfig: local_batch must be >= 1");
  if (eval_interval < 1) throw InvalidArgument("EdgeConfig: eval_interval must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw InvalidArgument("EdgeConfig: learning rate must be positive");
}

DsgdResult run_dsgd(const EdgeConfig& cfg, const Dataset& dataset, const Dataset& testset) {
  cfg.validate();
  dataset.validate();
  testset.validate();
  const Rng root(cfg.seed);
  Rng shard_rng = root.child("shard");
  const std::vector<WorkerShard> shards = shard_data(dataset, cfg.n_workers, shard_rng);
  for (const auto& s : shards) {
    if (cfg.local_batch > s.size()) throw InvalidArgument("run_dsgd: local_batch exceeds a shard");
  }
  const Projection projection = cfg.identity_projection
                                    ? Projection::identity(kModelDim)
                                    : Projection::gaussian(cfg.channel_uses, kModelDim, cfg.projection_seed);

  DsgdResult result;
  result.model = ClassifierModel::zeros();
  RealVector params = result.model.flatten();
  nn::FlatAdamState adam = nn::FlatAdamState::zeros(kModelDim, cfg.optimizer);
  auto record = [&](int round) {
    result.rounds.push_back(round);
    result.accuracy.push_back(result.model.accuracy(testset));
  };
  record(0);

  const std::size_t K = cfg.n_workers;
  std::vector<RealVector> grads(K);
  std::vector<double> gains(K, 1.0);
  for (int t = 0; t < cfg.rounds; ++t) {
    const Rng round_rng = root.child("round", static_cast<std::uint64_t>(t));
    for (std::size_t k = 0; k < K; ++k) {
      Rng worker_rng = round_rng.child("worker", k);
      grads[k] = local_gradient(result.model, shards[k], cfg.local_batch, worker_rng);
    }
    if (cfg.fading == FadingKind::rayleigh) {
      Rng fade = round_rng.child("fading");
      for (double& h : gains) h = std::sqrt(fade.exponential(1.0));
    }

    std::optional<RealVector> estimate;
    if (cfg.scheme == TransmitScheme::analog) {
      std::vector<RealVector> sent;
      std::vector<double> sent_gains;
      if (cfg.fading == FadingKind::rayleigh) {
        const FadingAlignment align = fading_align(gains, cfg.worker_energy, cfg.power_cutoff);
        result.silent_messages += K - align.active_count;
        for (std::size_t k = 0; k < K; ++k) {
          if (!align.active[k]) continue;
          sent.push_back(grads[k]);
          sent_gains.push_back(gains[k]);
        }
      } else {
        sent = grads;
      }
      if (!sent.empty()) {
        auto encoded = analog_encode_round(sent, cfg.worker_energy, projection, sent_gains);
        if (encoded) {
          const double alpha = encoded->front().alpha;
          std::vector<GradientMessage> msgs(encoded->begin(), encoded->end());
          Rng noise = round_rng.child("channel");
          const RealVector received = ota_round(msgs, cfg.noise_variance, noise, sent_gains);
          estimate = ps_decode_analog(received, alpha, static_cast<double>(sent.size()), projection);
        }
      }
    } else {
      RealVector sum = RealVector::Zero(kModelDim);
      std::size_t heard = 0;
      for (std::size_t k = 0; k < K; ++k) {
        const double energy = cfg.worker_energy * gains[k] * gains[k];
        const BitBudget budget = digital_bit_budget(cfg.channel_uses, K, energy);
        const DigitalMessage msg = digital_compress(grads[k], budget.bits, cfg.bits_per_entry);
        if (msg.silent) {
          ++result.silent_messages;
          continue;
        }
        sum += msg.decode();
        ++heard;
      }
      if (heard > 0) estimate = RealVector(sum / static_cast<double>(heard));
    }

    if (estimate) {
      if (!estimate->allFinite()) {
        throw DivergenceError("run_dsgd: non-finite gradient estimate", static_cast<std::size_t>(t));
      }
      nn::adam_step(params, adam, *estimate);
      if (!params.allFinite()) throw DivergenceError("run_dsgd: non-finite parameters", static_cast<std::size_t>(t));
      result.model = ClassifierModel::from_flat(params);
    } else {
      ++result.skipped_rounds;
    }
    if ((t + 1) % cfg.eval_interval == 0 || t + 1 == cfg.rounds) record(t + 1);
  }
  return result;
}

}  // namespace wml::edge
