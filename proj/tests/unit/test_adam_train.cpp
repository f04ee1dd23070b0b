#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "wml/errors.hpp"
#include "wml/nn/adam.hpp"
#include "wml/nn/train.hpp"

using namespace wml;
using namespace wml::nn;

namespace {

MlpSpec scalar_spec() {
  MlpSpec s;
  s.input_dim = 1;
  s.output_dim = 1;
  return s;
}

// Points at least `margin` away from the line 0.8 x - 0.6 y + 0.1 = 0; the
// line itself certifies separability.
std::vector<Sample> separable_set(Rng& rng, int n, double margin) {
  std::vector<Sample> data;
  while (static_cast<int>(data.size()) < n) {
    const double x = rng.uniform() * 4.0 - 2.0;
    const double y = rng.uniform() * 4.0 - 2.0;
    const double d = 0.8 * x - 0.6 * y + 0.1;
    if (std::abs(d) < margin) continue;
    data.push_back({RealVector{{x, y}}, RealVector::Constant(1, d > 0 ? 1.0 : 0.0)});
  }
  return data;
}

}  // namespace

TEST(AdamTest, FirstStepClosedForm) {
  MlpModel m = MlpModel::zeros(scalar_spec());
  AdamState st = AdamState::for_spec(m.spec, {0.001, 0.9, 0.999, 1e-8});
  Parameters g = Parameters::zeros(m.spec);
  g.weights[0](0, 0) = 1.0;
  adam_step(m, st, g);
  // m_hat = v_hat = 1
  EXPECT_DOUBLE_EQ(m.params.weights[0](0, 0), -0.001 / (1.0 + 1e-8));
  EXPECT_EQ(m.params.biases[0][0], 0.0);
  EXPECT_EQ(st.step_count, 1u);
}

TEST(AdamTest, ZeroGradientLeavesParametersAlone) {
  Rng rng(1);
  MlpModel m = MlpModel::initialize(scalar_spec(), rng);
  const RealVector before = m.params.flatten();
  AdamState st = AdamState::for_spec(m.spec);
  adam_step(m, st, Parameters::zeros(m.spec));
  EXPECT_TRUE(m.params.flatten() == before);
}

TEST(AdamTest, ConstantSignGivesStrictlyMonotoneParameter) {
  MlpModel m = MlpModel::zeros(scalar_spec());
  AdamState st = AdamState::for_spec(m.spec);
  Parameters g = Parameters::zeros(m.spec);
  Rng rng(2);
  double prev = m.params.weights[0](0, 0);
  for (int i = 0; i < 1000; ++i) {
    g.weights[0](0, 0) = 0.1 + rng.uniform();  // positive, varying magnitude
    adam_step(m, st, g);
    const double now = m.params.weights[0](0, 0);
    ASSERT_LT(now, prev) << "step " << i;
    prev = now;
  }
  EXPECT_EQ(st.step_count, 1000u);
}

TEST(AdamTest, ShapeMismatchThrows) {
  MlpModel m = MlpModel::zeros(scalar_spec());
  AdamState st = AdamState::for_spec(m.spec);
  MlpSpec other = scalar_spec();
  other.input_dim = 2;
  EXPECT_THROW(adam_step(m, st, Parameters::zeros(other)), DimensionError);
}

TEST(AdamTest, FlatVariantMatchesStructured) {
  Rng rng(3);
  MlpSpec spec = scalar_spec();
  spec.input_dim = 3;
  spec.hidden_layers = {4};
  MlpModel m = MlpModel::initialize(spec, rng);
  RealVector flat = m.params.flatten();
  AdamState st = AdamState::for_spec(spec);
  FlatAdamState fst = FlatAdamState::zeros(flat.size());
  for (int i = 0; i < 5; ++i) {
    Parameters g = Parameters::zeros(spec);
    RealVector gf(flat.size());
    for (Index k = 0; k < gf.size(); ++k) gf[k] = rng.normal();
    g.assign_flat(gf);
    adam_step(m, st, g);
    adam_step(flat, fst, gf);
  }
  EXPECT_LT((m.params.flatten() - flat).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TrainTest, SeparableSetReachesFullAccuracy) {
  Rng rng(7);
  const auto data = separable_set(rng, 200, 0.2);
  MlpSpec spec;
  spec.input_dim = 2;
  spec.output_dim = 1;
  spec.output_activation = OutputActivation::sigmoid();
  Rng init(8);
  MlpModel m = MlpModel::initialize(spec, init);
  AdamState st = AdamState::for_spec(spec, {0.05});
  const TrainConfig cfg{20, 300, 0.0, 0.0, 11};
  const TrainResult r = train(m, data, Loss::cross_entropy(OutputKind::sigmoid), cfg, st);
  int correct = 0;
  for (const auto& s : data) {
    const double p = mlp_forward(r.model, s.input)[0];
    correct += ((p > 0.5) == (s.target[0] > 0.5)) ? 1 : 0;
  }
  EXPECT_EQ(correct, 200);
  EXPECT_EQ(r.loss_trace.size(), 300u);
  EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());
}

TEST(TrainTest, ZeroEpochsReturnsModelUnchanged) {
  Rng rng(1);
  const auto data = separable_set(rng, 10, 0.1);
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden_layers = {5};
  const MlpModel m = MlpModel::initialize(spec, rng);
  AdamState st = AdamState::for_spec(spec);
  const TrainResult r = train(m, data, Loss::mean_squared_error(), {5, 0, 0.3, 0.0, 1}, st);
  EXPECT_TRUE(r.model.params.flatten() == m.params.flatten());
  EXPECT_TRUE(r.loss_trace.empty());
  EXPECT_EQ(st.step_count, 0u);
}

TEST(TrainTest, EqualSeedsGiveBitIdenticalRuns) {
  Rng rng(4);
  const auto data = separable_set(rng, 60, 0.1);
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden_layers = {16, 16};
  spec.output_activation = OutputActivation::sigmoid();
  Rng init(5);
  const MlpModel m = MlpModel::initialize(spec, init);
  const TrainConfig cfg{16, 20, 0.3, 0.0, 99};
  AdamState s1 = AdamState::for_spec(spec);
  AdamState s2 = AdamState::for_spec(spec);
  const TrainResult a = train(m, data, Loss::mean_squared_error(), cfg, s1);
  const TrainResult b = train(m, data, Loss::mean_squared_error(), cfg, s2);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_TRUE(a.model.params.flatten() == b.model.params.flatten());

  AdamState s3 = AdamState::for_spec(spec);
  TrainConfig other = cfg;
  other.seed = 100;
  const TrainResult c = train(m, data, Loss::mean_squared_error(), other, s3);
  EXPECT_NE(a.loss_trace, c.loss_trace);
}

TEST(TrainTest, DivergenceReportsEpoch) {
  Rng rng(4);
  const auto data = separable_set(rng, 8, 0.1);
  MlpSpec spec;
  spec.input_dim = 2;
  const MlpModel m = MlpModel::zeros(spec);
  AdamState st = AdamState::for_spec(spec);
  const Loss bad = Loss::custom([](const RealVector& out, const RealVector&, const RealVector&, RealVector& g) {
    g = RealVector::Constant(out.size(), std::numeric_limits<double>::infinity());
    return 0.0;
  });
  try {
    (void)train(m, data, bad, {4, 3, 0.0, 0.0, 1}, st);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.where(), 0u);
  }
}

TEST(TrainTest, RejectsOversizedBatchAndEmptyData) {
  MlpSpec spec;
  const MlpModel m = MlpModel::zeros(spec);
  AdamState st = AdamState::for_spec(spec);
  std::vector<Sample> one{{RealVector::Zero(1), RealVector::Zero(1)}};
  EXPECT_THROW(train(m, one, Loss::mean_squared_error(), {2, 1, 0.0, 0.0, 0}, st), InvalidArgument);
  EXPECT_THROW(train(m, std::vector<Sample>{}, Loss::mean_squared_error(), {1, 1, 0.0, 0.0, 0}, st),
               InvalidArgument);
}
