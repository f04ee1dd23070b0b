#include <chrono>
#include <cmath>
#include <numeric>

#include "wml/detect/detect.hpp"
#include "wml/edge/data.hpp"
#include "wml/edge/edge.hpp"
#include "wml/errors.hpp"
#include "wml/harness/harness.hpp"
#include "wml/outage/outage.hpp"
#include "wml/team/team.hpp"

namespace wml::harness {

namespace {

// mean and standard error of the mean; no error bar for a single value
struct Summary {
  double mean = 0.0;
  std::optional<double> stderr_;
};

Summary summarize(const std::vector<double>& v) {
  Summary s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return s;
}

std::size_t positive_count(const ExperimentConfig& cfg, const std::string& key) {
  const auto v = cfg.get_int(key);
  if (v < 1) throw ConfigError("config: " + key + " must be >= 1");
  return static_cast<std::size_t>(v);
}

std::vector<double> increasing(const ExperimentConfig& cfg, const std::string& key) {
  const auto v = cfg.get_doubles(key);
  if (v.empty()) throw ConfigError("config: " + key + " is empty");
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) throw ConfigError("config: " + key + " must be strictly increasing");
  }
  return v;
}

void run_outage(const ExperimentConfig& cfg, ExperimentRecord& rec) {
  const auto antennas = static_cast<Index>(positive_count(cfg, "outage.antennas"));
  const std::size_t history = positive_count(cfg, "outage.history");
  const std::size_t problems = positive_count(cfg, "outage.problems");
  const auto gammas = increasing(cfg, "outage.gammas");
  const double limit = cfg.get_double("outage.limit");
  const auto constraint = cfg.get_string("outage.constraint") == "sum_power"
                              ? outage::PowerConstraint::sum_power(limit)
                              : outage::PowerConstraint::per_antenna(limit);
  const auto mc = static_cast<std::uint64_t>(positive_count(cfg, "outage.mc_samples"));

  const Rng root(cfg.seed());
  Curve sample{"sgd_sample_outage", "gamma", "outage", {}};
  Curve sgd_mc{"sgd_mc_outage", "gamma", "outage", {}};
  Curve mrt_mc{"mrt_mc_outage", "gamma", "outage", {}};
  for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
    const double gamma = gammas[gi];
    if (!(gamma > 0.0)) throw ConfigError("config: outage.gammas must be positive");
    std::vector<double> s_vals, sgd_vals, mrt_vals;
    for (std::size_t p = 0; p < problems; ++p) {
      // the same channel histories for every gamma
      Rng hist_rng = root.child("history", p);
      outage::OutageProblem problem{channel::draw_history(antennas, history, hist_rng), gamma, constraint};
      outage::SmoothSgdConfig sgd;
      sgd.temperature = cfg.get_double("outage.temperature_ratio") * gamma;
      sgd.step_size = cfg.get_double("outage.step_size");
      sgd.iterations = static_cast<int>(cfg.get_int("outage.iterations"));
      sgd.minibatch = static_cast<int>(cfg.get_int("outage.minibatch"));
      sgd.seed = root.child("sgd", gi * problems + p).engine()();
      const auto sol = outage::minimize_outage(problem, sgd);
      const auto mrt = outage::mrt_baseline(problem.history, constraint);
      s_vals.push_back(sol.trace.best_sample_outage);
      Rng mc_a = root.child("mc", gi * problems + p);
      Rng mc_b = mc_a;  // common random numbers for the two beamformers
      sgd_vals.push_back(outage::mc_outage(sol.beamformer, gamma, mc, mc_a).value);
      mrt_vals.push_back(outage::mc_outage(mrt, gamma, mc, mc_b).value);
    }
    for (auto [curve, vals] : {std::pair{&sample, &s_vals}, {&sgd_mc, &sgd_vals}, {&mrt_mc, &mrt_vals}}) {
      const Summary s = summarize(*vals);
      curve->points.push_back({gamma, s.mean, s.stderr_});
    }
  }
  rec.curves = {sample, sgd_mc, mrt_mc};
}

team::TdConfig team_config(const ExperimentConfig& cfg) {
  team::TdConfig c;
  c.noise_levels = {cfg.get_double("team.sigma1"), cfg.get_double("team.sigma2")};
  c.link_snr_db = cfg.get_double("team.link_snr_db");
  c.message_dim = static_cast<int>(cfg.get_int("team.message_dim"));
  c.gain_mean = cfg.get_double("team.gain_mean");
  c.grid_points = static_cast<int>(cfg.get_int("team.grid_points"));
  c.initial_power_fraction = cfg.get_double("team.initial_power_fraction");
  c.training.batch_size = static_cast<int>(cfg.get_int("train.batch_size"));
  c.training.epochs = static_cast<int>(cfg.get_int("train.epochs"));
  c.training.dropout_train = cfg.get_double("train.dropout");
  c.learning_rate = cfg.get_double("train.learning_rate");
  c.n_train = positive_count(cfg, "train.n_train");
  c.n_test = positive_count(cfg, "train.n_test");
  c.network.hidden_layers.clear();
  for (auto h : cfg.get_ints("train.hidden")) c.network.hidden_layers.push_back(static_cast<int>(h));
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

void run_teamdc(const ExperimentConfig& cfg, ExperimentRecord& rec) {
  const team::TdConfig base = team_config(cfg);
  const auto p_values = increasing(cfg, "team.p_values");
  const std::size_t seeds = positive_count(cfg, "team.seeds");
  const double sigma1[] = {base.noise_levels[0]};

  const char* names[] = {"centralized", "decentralized_coop", "decentralized", "naive", "active_passive",
                         "forced_sharing"};
  std::vector<Curve> curves;
  for (const char* n : names) curves.push_back({n, "p_max", "normalized_sum_rate", {}});

  for (double p : p_values) {
    team::TdConfig c = base;
    c.p_max = p;
    try {
      c.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    std::vector<std::vector<double>> vals(curves.size());
    for (std::size_t s = 0; s < seeds; ++s) {
      const auto scores = team::compare_schemes(c, sigma1, cfg.seed() + s).front();
      const double row[] = {scores.centralized, scores.cooperative, scores.decentralized,
                            scores.naive,       scores.active_passive, scores.forced_sharing};
      for (std::size_t i = 0; i < curves.size(); ++i) vals[i].push_back(row[i]);
    }
    for (std::size_t i = 0; i < curves.size(); ++i) {
      const Summary sm = summarize(vals[i]);
      curves[i].points.push_back({p, sm.mean, sm.stderr_});
    }
  }
  rec.curves = std::move(curves);
}

edge::MnistSplit edge_data(const ExperimentConfig& cfg, ExperimentRecord& rec) {
  const std::string source = cfg.get_string("data.source");
  const std::string dir_key = cfg.get_string("data.dir");
  const std::filesystem::path dir = dir_key.empty() ? default_data_dir() : std::filesystem::path(dir_key);
  const std::size_t n_train = positive_count(cfg, "data.n_train");
  const std::size_t n_test = positive_count(cfg, "data.n_test");
  const bool fallback = cfg.get_bool("data.fallback");

  if (source != "synthetic") {
    if (edge::mnist_available(dir)) {
      rec.info["data.used"] = "mnist";
      return edge::load_mnist(dir, n_train, n_test);
    }
    if (!fallback) throw DatasetError("edge: MNIST files not found under " + dir.string());
  }
  rec.info["data.used"] = "synthetic";
  return edge::synthetic_digits(n_train, n_test, cfg.get_uint("data.synthetic_seed"));
}

void run_edge(const ExperimentConfig& cfg, ExperimentRecord& rec) {
  edge::EdgeConfig base;
  base.channel_uses = static_cast<Index>(positive_count(cfg, "edge.channel_uses"));
  base.worker_energy = cfg.get_double("edge.energy");
  base.noise_variance = cfg.get_double("edge.noise_variance");
  base.identity_projection = cfg.get_string("edge.projection") == "identity";
  base.projection_seed = cfg.get_uint("edge.projection_seed");
  base.bits_per_entry = static_cast<int>(cfg.get_int("edge.bits_per_entry"));
  base.fading = cfg.get_string("edge.fading") == "rayleigh" ? edge::FadingKind::rayleigh : edge::FadingKind::none;
  base.power_cutoff = cfg.get_double("edge.power_cutoff");
  base.rounds = static_cast<int>(cfg.get_int("edge.rounds"));
  base.local_batch = positive_count(cfg, "edge.local_batch");
  base.optimizer.learning_rate = cfg.get_double("edge.learning_rate");
  base.eval_interval = static_cast<int>(cfg.get_int("edge.eval_interval"));
  const std::size_t seeds = positive_count(cfg, "edge.seeds");
  const auto k_values = cfg.get_ints("edge.k_values");

  // fail fast on bad settings before loading data
  for (auto k : k_values) {
    edge::EdgeConfig c = base;
    if (k < 1) throw ConfigError("config: edge.k_values must be >= 1");
    c.n_workers = static_cast<std::size_t>(k);
    try {
      c.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  const edge::MnistSplit data = edge_data(cfg, rec);

  for (const auto& scheme : cfg.get_strings("edge.schemes")) {
    for (auto k : k_values) {
      edge::EdgeConfig c = base;
      c.scheme = scheme == "analog" ? edge::TransmitScheme::analog : edge::TransmitScheme::digital;
      c.n_workers = static_cast<std::size_t>(k);
      std::vector<edge::DsgdResult> runs;
      for (std::size_t s = 0; s < seeds; ++s) {
        c.seed = cfg.seed() + s;
        runs.push_back(edge::run_dsgd(c, data.train, data.test));
      }
      Curve curve{scheme + "_k" + std::to_string(k), "round", "accuracy", {}};
      for (std::size_t i = 0; i < runs.front().rounds.size(); ++i) {
        std::vector<double> acc;
        for (const auto& r : runs) acc.push_back(r.accuracy[i]);
        const Summary sm = summarize(acc);
        curve.points.push_back({static_cast<double>(runs.front().rounds[i]), sm.mean, sm.stderr_});
      }
      std::size_t silent = 0, skipped = 0;
      for (const auto& r : runs) {
        silent += r.silent_messages;
        skipped += r.skipped_rounds;
      }
      rec.info[curve.name + ".silent_messages"] = std::to_string(silent);
      rec.info[curve.name + ".skipped_rounds"] = std::to_string(skipped);
      rec.curves.push_back(std::move(curve));
    }
  }
}

void run_detect(const ExperimentConfig& cfg, ExperimentRecord& rec) {
  detect::DetectorConfig d;
  d.n_rx = static_cast<Index>(positive_count(cfg, "detect.n_rx"));
  d.n_tx = static_cast<Index>(positive_count(cfg, "detect.n_tx"));
  d.layers = static_cast<int>(cfg.get_int("detect.layers"));
  d.hidden = static_cast<int>(cfg.get_int("detect.hidden"));
  d.snr_db = cfg.get_double("detect.train_snr_db");
  d.batch_size = positive_count(cfg, "detect.batch_size");
  d.optimizer.learning_rate = cfg.get_double("detect.learning_rate");
  d.seed = cfg.seed();
  try {
    d.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (d.n_tx > detect::kMaxEnumerationTx) throw ConfigError("config: detect.n_tx exceeds the ML enumeration limit");
  const auto snrs = increasing(cfg, "detect.snr_values");
  const std::size_t tests = positive_count(cfg, "detect.test_instances");

  const auto trained = detect::learned_detect_train(d, positive_count(cfg, "detect.n_train"));
  rec.info["final_training_loss"] = std::to_string(trained.loss_trace.back());
  const detect::Detector learned = [&](const channel::MimoInstance& i) { return trained.detector.detect(i); };

  const Rng root(cfg.seed());
  Curve ml{"ml_ber", "snr_db", "ber", {}}, zf{"zf_ber", "snr_db", "ber", {}}, nn{"learned_ber", "snr_db", "ber", {}};
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    Rng test_rng = root.child("test", i);
    const auto inst = detect::draw_instances(d.n_rx, d.n_tx, snrs[i], tests, test_rng);
    ml.points.push_back({snrs[i], detect::ber(detect::ml_detect, inst), {}});
    zf.points.push_back({snrs[i], detect::ber(detect::zf_detect, inst), {}});
    nn.points.push_back({snrs[i], detect::ber(learned, inst), {}});
  }
  rec.curves = {ml, zf, nn};
}

}  // namespace

ExperimentRecord run(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentRecord rec;
  rec.config = cfg;
  const auto start = std::chrono::steady_clock::now();
  switch (cfg.experiment()) {
    case Experiment::outage: run_outage(cfg, rec); break;
    case Experiment::teamdc: run_teamdc(cfg, rec); break;
    case Experiment::edge: run_edge(cfg, rec); break;
    case Experiment::detect: run_detect(cfg, rec); break;
  }
  rec.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& c : rec.curves) c.validate();
  return rec;
}

}  // namespace wml::harness
