#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "wml/detect/detect.hpp"
#include "wml/errors.hpp"

using namespace wml;
using namespace wml::detect;
using channel::MimoInstance;

namespace {

MimoInstance instance(RealMatrix h, RealVector x, RealVector y) {
  MimoInstance m;
  m.channel = std::move(h);
  m.input = std::move(x);
  m.received = std::move(y);
  return m;
}

RealVector vec(std::initializer_list<double> xs) {
  RealVector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

TEST(MlDetectTest, ScalarExample) {
  const auto r = ml_detect(instance(RealMatrix::Constant(1, 1, 2.0), vec({1}), vec({1.9})));
  EXPECT_EQ(r.estimate, vec({1}));
}

TEST(MlDetectTest, NoiselessRecovery) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const MimoInstance m = channel::draw_mimo_instance(6, 4, 0.0, rng);
    EXPECT_EQ(ml_detect(m).estimate, m.input);
  }
}

TEST(MlDetectTest, MatchesEnumerationOracle) {
  Rng rng(2);
  for (int i = 0; i < 2000; ++i) {
    const MimoInstance m = channel::draw_mimo_instance(4, 3, 1.0, rng);
    std::vector<std::vector<double>> h(4, std::vector<double>(3));
    for (Index a = 0; a < 4; ++a)
      for (Index b = 0; b < 3; ++b) h[a][b] = m.channel(a, b);
    const auto want = oracle::enumerate_ml(h, {m.received.data(), m.received.data() + 4});
    EXPECT_EQ(ml_detect(m).estimate, Eigen::Map<const RealVector>(want.data(), 3));
  }
}

TEST(MlDetectTest, TiesGoToLexicographicallySmaller) {
  // zero channel: every candidate costs the same
  const auto r = ml_detect(instance(RealMatrix::Zero(2, 2), vec({1, 1}), vec({0.3, -0.1})));
  EXPECT_EQ(r.estimate, vec({-1, -1}));
}

TEST(MlDetectTest, RejectsLargeK) {
  Rng rng(3);
  EXPECT_THROW(ml_detect(channel::draw_mimo_instance(13, 13, 1.0, rng)), InvalidArgument);
}

TEST(ZfDetectTest, IdentityChannel) {
  const RealMatrix eye = RealMatrix::Identity(2, 2);
  EXPECT_EQ(zf_detect(instance(eye, vec({1, -1}), vec({1, -1}))).estimate, vec({1, -1}));
  EXPECT_EQ(zf_detect(instance(eye, vec({1, -1}), vec({0.1, -0.1}))).estimate, vec({1, -1}));
  RealMatrix rank_one(2, 2);
  rank_one << 1, 2, 2, 4;
  EXPECT_THROW(zf_detect(instance(rank_one, vec({1, 1}), vec({1, 1}))), InvalidArgument);
}

TEST(ZfDetectTest, NeverBeatsMl) {
  Rng rng(4);
  for (double snr : {0.0, 5.0, 10.0}) {
    const auto tests = draw_instances(8, 4, snr, 10000, rng);
    EXPECT_GE(ber(zf_detect, tests), ber(ml_detect, tests)) << "snr " << snr;
  }
}

TEST(NoiseConventionTest, VarianceIsKOverSnr) {
  EXPECT_NEAR(std::pow(noise_std_for_snr(10.0, 4), 2), 0.4, 1e-12);
  EXPECT_NEAR(std::pow(noise_std_for_snr(0.0, 3), 2), 3.0, 1e-12);
}

TEST(BerTest, EchoNegateGuess) {
  Rng rng(5);
  const auto tests = draw_instances(4, 4, 10.0, 25000, rng);
  EXPECT_EQ(ber([](const MimoInstance& m) { return DetectionResult{m.input, m.input}; }, tests), 0.0);
  EXPECT_EQ(ber([](const MimoInstance& m) { return DetectionResult{-m.input, -m.input}; }, tests), 1.0);
  Rng guess(6);
  const double b = ber(
      [&](const MimoInstance& m) {
        RealVector x(m.n_tx());
        for (Index i = 0; i < x.size(); ++i) x[i] = guess.bernoulli(0.5) ? 1.0 : -1.0;
        return DetectionResult{x, x};
      },
      tests);
  EXPECT_NEAR(b, 0.5, 0.01);
}

TEST(UnfoldedDetectorTest, FirstLayerSeesZeroEstimates) {
  DetectorConfig cfg;
  cfg.n_rx = 4;
  cfg.n_tx = 2;
  cfg.layers = 1;
  Rng rng(7);
  UnfoldedDetector d = UnfoldedDetector::initialize(cfg, rng);
  // zero the weights on the v, x and H^T H x inputs: the output cannot change
  // when x_0 = v_0 = 0
  const RealVector before = d.soft_trajectory(draw_instances(4, 2, 10.0, 3, rng)).back().col(0);
  Rng again(7);
  UnfoldedDetector d2 = UnfoldedDetector::initialize(cfg, again);
  d2.layers[0].params.weights[0].rightCols(3 * cfg.n_tx).setZero();
  const RealVector after = d2.soft_trajectory(draw_instances(4, 2, 10.0, 3, again)).back().col(0);
  EXPECT_EQ(before, after);
}

TEST(UnfoldedDetectorTest, GradientMatchesFiniteDifferences) {
  DetectorConfig cfg;
  cfg.n_rx = 4;
  cfg.n_tx = 2;
  cfg.layers = 2;
  cfg.hidden = 6;
  Rng rng(8);
  UnfoldedDetector d = UnfoldedDetector::initialize(cfg, rng);
  const auto batch = draw_instances(4, 2, 5.0, 9, rng);
  const auto g = unfolded_gradient(d, batch);
  for (std::size_t l = 0; l < d.layers.size(); ++l) {
    const RealVector flat = d.layers[l].params.flatten();
    const RealVector gl = g.gradients[l].flatten();
    for (Index i = 0; i < flat.size(); ++i) {
      UnfoldedDetector up = d, down = d;
      RealVector fu = flat, fd = flat;
      fu[i] += 1e-6;
      fd[i] -= 1e-6;
      up.layers[l].params.assign_flat(fu);
      down.layers[l].params.assign_flat(fd);
      const double num = (unfolded_gradient(up, batch).loss - unfolded_gradient(down, batch).loss) / 2e-6;
      EXPECT_LE(oracle::relative_error(gl[i], num, 1e-5), 1e-4) << "layer " << l << " entry " << i;
    }
  }
}

TEST(LearnedDetectTrainTest, DeterministicAndLossFalls) {
  DetectorConfig cfg;
  cfg.seed = 9;
  const auto a = learned_detect_train(cfg, 50000);
  const auto b = learned_detect_train(cfg, 50000);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  ASSERT_EQ(a.loss_trace.size(), 100u);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 10; ++i) {
    head += a.loss_trace[static_cast<std::size_t>(i)];
    tail += a.loss_trace[a.loss_trace.size() - 1 - static_cast<std::size_t>(i)];
  }
  EXPECT_LT(tail, head);
}
