#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "wml/errors.hpp"
#include "wml/nn/mlp.hpp"

using namespace wml;
using namespace wml::nn;

namespace {

MlpSpec make_spec(int in, std::vector<int> hidden, int out, OutputActivation act = OutputActivation::linear()) {
  MlpSpec s;
  s.input_dim = in;
  s.hidden_layers = std::move(hidden);
  s.output_dim = out;
  s.output_activation = act;
  return s;
}

std::vector<oracle::PlainLayer> to_plain(const MlpModel& m) {
  std::vector<oracle::PlainLayer> layers;
  for (std::size_t l = 0; l < m.weights().size(); ++l) {
    oracle::PlainLayer p;
    const auto& w = m.weights()[l];
    p.w.assign(static_cast<std::size_t>(w.rows()), std::vector<double>(static_cast<std::size_t>(w.cols())));
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) p.w[r][c] = w(r, c);
    p.b.assign(m.biases()[l].data(), m.biases()[l].data() + m.biases()[l].size());
    layers.push_back(std::move(p));
  }
  return layers;
}

RealVector random_vector(Index n, Rng& rng) {
  RealVector v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

// Objective of the flattened parameters evaluated through the library's
// forward pass only; the backward pass is never touched.
double batch_objective(MlpModel model, const std::vector<double>& flat, const std::vector<Sample>& batch,
                       const Loss& loss) {
  model.params.assign_flat(Eigen::Map<const RealVector>(flat.data(), static_cast<Index>(flat.size())));
  double total = 0.0;
  RealVector scratch;
  for (const auto& s : batch) {
    ForwardCache cache;
    const RealMatrix out = forward(model, RealMatrix(s.input), 0.0, nullptr, &cache);
    total += loss(out.col(0), cache.pre_activations.back().col(0), s.target, scratch);
  }
  return total / static_cast<double>(batch.size());
}

double max_fd_relative_error(const MlpModel& model, const std::vector<Sample>& batch, const Loss& loss) {
  const GradientResult g = mlp_gradient(model, batch, loss);
  const RealVector analytic = g.gradient.flatten();
  const RealVector flat = model.params.flatten();
  std::vector<double> x(flat.data(), flat.data() + flat.size());
  const auto fd = oracle::central_difference(
      [&](const std::vector<double>& p) { return batch_objective(model, p, batch, loss); }, x, 1e-5);
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    // absolute floor guards entries whose true derivative is ~0
    const double err = std::abs(fd[i] - analytic[static_cast<Index>(i)]) /
                       std::max({std::abs(fd[i]), std::abs(analytic[static_cast<Index>(i)]), 1e-6});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace

TEST(MlpSpecTest, RejectsInvalidDimensions) {
  EXPECT_THROW(make_spec(0, {}, 1).validate(), InvalidArgument);
  EXPECT_THROW(make_spec(1, {0}, 1).validate(), InvalidArgument);
  MlpSpec s = make_spec(1, {}, 1);
  s.dropout_rate = 1.0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  EXPECT_THROW(make_spec(1, {}, 1, OutputActivation::scaled_sigmoid(0.0)).validate(), InvalidArgument);
}

TEST(MlpForwardTest, ZeroModelWithSigmoidGivesHalf) {
  const MlpModel m = MlpModel::zeros(make_spec(3, {5, 4}, 2, OutputActivation::sigmoid()));
  const RealVector out = mlp_forward(m, RealVector::Constant(3, 7.0));
  ASSERT_EQ(out.size(), 2);
  EXPECT_EQ(out[0], 0.5);
  EXPECT_EQ(out[1], 0.5);
}

TEST(MlpForwardTest, IdentityLinearLayer) {
  MlpModel m = MlpModel::zeros(make_spec(2, {}, 2));
  m.params.weights[0] = RealMatrix::Identity(2, 2);
  const RealVector out = mlp_forward(m, RealVector{{1.5, -2.0}});
  EXPECT_EQ(out[0], 1.5);
  EXPECT_EQ(out[1], -2.0);
}

TEST(MlpForwardTest, MatchesStraightLineOracle) {
  Rng rng(42);
  const MlpModel m = MlpModel::initialize(make_spec(4, {50, 50, 50, 50}, 2), rng);
  for (int i = 0; i < 5; ++i) {
    const RealVector x = random_vector(4, rng);
    const RealVector got = mlp_forward(m, x);
    const auto want = oracle::plain_forward(to_plain(m), std::vector<double>(x.data(), x.data() + 4));
    for (Index k = 0; k < 2; ++k) {
      EXPECT_NEAR(got[k], want[static_cast<std::size_t>(k)], 1e-12 * (1.0 + std::abs(want[k])));
    }
  }
}

TEST(MlpForwardTest, ScaledSigmoidStaysInBox) {
  Rng rng(3);
  const MlpModel m = MlpModel::initialize(make_spec(4, {50, 50}, 2, OutputActivation::scaled_sigmoid(10.0)), rng);
  for (double mag : {0.0, 1.0, 1e3, 1e8}) {
    const RealVector out = mlp_forward(m, RealVector::Constant(4, mag));
    EXPECT_TRUE((out.array() >= 0.0).all() && (out.array() <= 10.0).all());
  }
}

TEST(MlpForwardTest, SoftmaxOutputsSumToOne) {
  Rng rng(5);
  const MlpModel m = MlpModel::initialize(make_spec(6, {8}, 10, OutputActivation::softmax()), rng);
  const RealVector out = mlp_forward(m, random_vector(6, rng) * 50.0);
  EXPECT_NEAR(out.sum(), 1.0, 1e-12);
}

TEST(MlpForwardTest, Errors) {
  const MlpModel m = MlpModel::zeros(make_spec(2, {3}, 1));
  EXPECT_THROW(mlp_forward(m, RealVector::Zero(3)), DimensionError);
  RealVector bad = RealVector::Zero(2);
  bad[1] = std::nan("");
  EXPECT_THROW(mlp_forward(m, bad), NumericalError);
  EXPECT_THROW(mlp_forward(m, RealVector::Zero(2), 0.3, nullptr), InvalidArgument);
}

TEST(MlpForwardTest, DropoutIsUnbiasedOnLinearOutput) {
  Rng init(9);
  const MlpModel m = MlpModel::initialize(make_spec(5, {30}, 3), init);
  const RealVector x = random_vector(5, init);
  const RealVector clean = mlp_forward(m, x);
  Rng rng(10);
  RealVector acc = RealVector::Zero(3);
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) acc += mlp_forward(m, x, 0.3, &rng);
  acc /= draws;
  for (Index k = 0; k < 3; ++k) {
    EXPECT_LT(std::abs(acc[k] - clean[k]), 0.01 * std::max(1.0, std::abs(clean[k]))) << "output " << k;
  }
}

TEST(MlpGradientTest, ScalarSquare) {
  MlpModel m = MlpModel::zeros(make_spec(1, {}, 1));
  m.params.weights[0](0, 0) = 3.0;
  const std::vector<Sample> batch{{RealVector::Ones(1), RealVector::Zero(1)}};
  const Loss square = Loss::custom([](const RealVector& out, const RealVector&, const RealVector&, RealVector& g) {
    g = 2.0 * out;
    return out.squaredNorm();
  });
  const GradientResult r = mlp_gradient(m, batch, square);
  EXPECT_DOUBLE_EQ(r.loss, 9.0);
  EXPECT_DOUBLE_EQ(r.gradient.weights[0](0, 0), 6.0);
}

TEST(MlpGradientTest, ConstantLossGivesZeroGradient) {
  Rng rng(1);
  const MlpModel m = MlpModel::initialize(make_spec(3, {7, 7}, 2), rng);
  const std::vector<Sample> batch{{random_vector(3, rng), RealVector::Zero(2)},
                                  {random_vector(3, rng), RealVector::Zero(2)}};
  const Loss constant = Loss::custom([](const RealVector& out, const RealVector&, const RealVector&, RealVector& g) {
    g = RealVector::Zero(out.size());
    return 4.0;
  });
  const GradientResult r = mlp_gradient(m, batch, constant);
  EXPECT_EQ(r.gradient.flatten().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.loss, 4.0);
}

TEST(MlpGradientTest, LeavesModelUnchanged) {
  Rng rng(2);
  const MlpModel m = MlpModel::initialize(make_spec(3, {4}, 1), rng);
  const RealVector before = m.params.flatten();
  const std::vector<Sample> batch{{random_vector(3, rng), RealVector::Ones(1)}};
  (void)mlp_gradient(m, batch, Loss::mean_squared_error());
  EXPECT_EQ((m.params.flatten() - before).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MlpGradientTest, MatchesFiniteDifferencesMse) {
  Rng rng(17);
  const MlpModel m = MlpModel::initialize(make_spec(3, {6, 5}, 2), rng);
  std::vector<Sample> batch;
  for (int i = 0; i < 8; ++i) batch.push_back({random_vector(3, rng), random_vector(2, rng)});
  EXPECT_LT(max_fd_relative_error(m, batch, Loss::mean_squared_error()), 1e-4);
}

// Gradient exactness over depth, seeds and output maps.
TEST(MlpGradientTest, FiniteDifferencePropertyOverDepthsAndSeeds) {
  struct Case {
    OutputActivation act;
    bool cross_entropy;
  };
  const std::vector<Case> cases{{OutputActivation::linear(), false},
                                {OutputActivation::sigmoid(), false},
                                {OutputActivation::scaled_sigmoid(4.0), false},
                                {OutputActivation::softmax(), true},
                                {OutputActivation::sigmoid(), true}};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (int depth = 1; depth <= 4; ++depth) {
      const Case& c = cases[(seed + static_cast<std::uint64_t>(depth)) % cases.size()];
      Rng rng(seed * 100 + static_cast<std::uint64_t>(depth));
      const std::vector<int> hidden(static_cast<std::size_t>(depth - 1), 6);
      const MlpModel m = MlpModel::initialize(make_spec(4, hidden, 3, c.act), rng);
      std::vector<Sample> batch;
      for (int i = 0; i < 6; ++i) {
        RealVector t = random_vector(3, rng);
        if (c.cross_entropy) {
          if (c.act.kind == OutputKind::softmax) {
            t = RealVector::Zero(3);
            t[static_cast<Index>(rng.uniform_index(3))] = 1.0;
          } else {
            t = t.unaryExpr([](double v) { return v > 0 ? 1.0 : 0.0; });
          }
        }
        batch.push_back({random_vector(4, rng), t});
      }
      const Loss loss = c.cross_entropy ? Loss::cross_entropy(c.act.kind) : Loss::mean_squared_error();
      EXPECT_LT(max_fd_relative_error(m, batch, loss), 1e-4) << "seed " << seed << " depth " << depth;
    }
  }
}

TEST(MlpGradientTest, InputGradientMatchesFiniteDifferences) {
  Rng rng(23);
  const MlpModel m = MlpModel::initialize(make_spec(5, {9, 9}, 2, OutputActivation::sigmoid()), rng);
  const RealVector x = random_vector(5, rng);
  const RealVector w = random_vector(2, rng);  // objective = w . f(x)
  ForwardCache cache;
  forward(m, RealMatrix(x), 0.0, nullptr, &cache);
  Parameters scratch = Parameters::zeros(m.spec);
  const RealMatrix dx = backward(m, cache, RealMatrix(w), GradientAt::output, scratch);
  const auto fd = oracle::central_difference(
      [&](const std::vector<double>& v) {
        return w.dot(mlp_forward(m, Eigen::Map<const RealVector>(v.data(), 5)));
      },
      std::vector<double>(x.data(), x.data() + 5));
  for (Index i = 0; i < 5; ++i) {
    EXPECT_LT(oracle::relative_error(dx(i, 0), fd[static_cast<std::size_t>(i)], 1e-6), 1e-4);
  }
}

TEST(MlpGradientTest, BatchPermutationInvarianceIsExact) {
  Rng rng(31);
  const MlpModel m = MlpModel::initialize(make_spec(4, {50, 50}, 2), rng);
  std::vector<Sample> batch;
  for (int i = 0; i < 64; ++i) batch.push_back({random_vector(4, rng), random_vector(2, rng)});
  const GradientResult a = mlp_gradient(m, batch, Loss::mean_squared_error());
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(batch.begin(), batch.end(), rng.engine());
    const GradientResult b = mlp_gradient(m, batch, Loss::mean_squared_error());
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_TRUE(a.gradient.flatten() == b.gradient.flatten());
  }
}

TEST(MlpGradientTest, NonFiniteGradientReportsLayer) {
  Rng rng(4);
  const MlpModel m = MlpModel::initialize(make_spec(2, {3, 3}, 1), rng);
  const std::vector<Sample> batch{{RealVector::Ones(2), RealVector::Ones(1)}};
  const Loss nan_loss = Loss::custom([](const RealVector& out, const RealVector&, const RealVector&, RealVector& g) {
    g = RealVector::Constant(out.size(), std::nan(""));
    return 0.0;
  });
  try {
    (void)mlp_gradient(m, batch, nan_loss);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.where(), 2u);
  }
  EXPECT_THROW(mlp_gradient(m, std::vector<Sample>{}, nan_loss), InvalidArgument);
}

TEST(ParametersTest, FlattenRoundTrip) {
  Rng rng(8);
  const MlpModel m = MlpModel::initialize(make_spec(3, {4, 2}, 5), rng);
  Parameters p = Parameters::zeros(m.spec);
  p.assign_flat(m.params.flatten());
  EXPECT_TRUE(p.flatten() == m.params.flatten());
  EXPECT_EQ(p.size(), 3u * 4 + 4 + 4 * 2 + 2 + 2 * 5 + 5);
}
