#include <benchmark/benchmark.h>

#include <vector>

#include "wml/channel/channels.hpp"
#include "wml/detect/detect.hpp"
#include "wml/edge/data.hpp"
#include "wml/edge/edge.hpp"
#include "wml/nn/mlp.hpp"
#include "wml/outage/outage.hpp"
#include "wml/team/team.hpp"

using namespace wml;

namespace {

nn::MlpSpec team_net() {
  nn::MlpSpec s;
  s.input_dim = 4;
  s.hidden_layers = {50, 50, 50, 50};
  s.output_dim = 1;
  s.output_activation = nn::OutputActivation::scaled_sigmoid(10.0);
  return s;
}

}  // namespace

static void BM_MlpForwardBackward(benchmark::State& state) {
  Rng rng(1);
  const auto model = nn::MlpModel::initialize(team_net(), rng);
  const Index batch = state.range(0);
  RealMatrix x(4, batch);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  for (auto _ : state) {
    nn::ForwardCache cache;
    const RealMatrix out = nn::forward(model, x, 0.3, &rng, &cache);
    nn::Parameters g = nn::Parameters::zeros(model.spec);
    benchmark::DoNotOptimize(nn::backward(model, cache, RealMatrix::Ones(1, batch), nn::GradientAt::output, g));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpForwardBackward)->Arg(400)->Arg(4000);

static void BM_MinimizeOutage(benchmark::State& state) {
  Rng rng(2);
  const outage::OutageProblem p{channel::draw_history(2, 50, rng), 0.5, outage::PowerConstraint::sum_power(1.0)};
  const outage::SmoothSgdConfig cfg{0.05, 0.5, static_cast<int>(state.range(0)), 16, 3};
  for (auto _ : state) benchmark::DoNotOptimize(outage::minimize_outage(p, cfg));
}
BENCHMARK(BM_MinimizeOutage)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_McOutage(benchmark::State& state) {
  Rng rng(3);
  const outage::Beamformer w{channel::draw_rayleigh(2, rng)};
  for (auto _ : state) benchmark::DoNotOptimize(outage::mc_outage(w, 0.5, 100000, rng));
}
BENCHMARK(BM_McOutage)->Unit(benchmark::kMillisecond);

static void BM_ActivePassive(benchmark::State& state) {
  Rng rng(4);
  const auto world = channel::draw_world(2, {0.0, 0.0}, 1.0, rng).world;
  for (auto _ : state) benchmark::DoNotOptimize(team::active_passive(world, 10.0, 1001));
}
BENCHMARK(BM_ActivePassive);

static void BM_LocalGradient(benchmark::State& state) {
  const auto data = edge::synthetic_digits(1000, 1, 5);
  const auto model = edge::ClassifierModel::zeros();
  Rng rng(5);
  for (auto _ : state) benchmark::DoNotOptimize(edge::local_gradient(model, data.train, 128, rng));
}
BENCHMARK(BM_LocalGradient);

static void BM_DigitalCompress(benchmark::State& state) {
  Rng rng(6);
  RealVector g(edge::kModelDim);
  for (Index i = 0; i < g.size(); ++i) g[i] = rng.normal();
  const auto budget = edge::digital_bit_budget(edge::kModelDim, static_cast<std::size_t>(state.range(0)), 20000.0);
  for (auto _ : state) benchmark::DoNotOptimize(edge::digital_compress(g, budget.bits, 4));
}
BENCHMARK(BM_DigitalCompress)->Arg(5)->Arg(25);

static void BM_AnalogRound(benchmark::State& state) {
  Rng rng(7);
  const auto k = static_cast<std::size_t>(state.range(0));
  std::vector<RealVector> grads(k, RealVector(edge::kModelDim));
  for (auto& g : grads)
    for (Index i = 0; i < g.size(); ++i) g[i] = rng.normal();
  const auto proj = edge::Projection::identity(edge::kModelDim);
  for (auto _ : state) {
    const auto msgs = edge::analog_encode_round(grads, 20000.0, proj);
    std::vector<edge::GradientMessage> sent(msgs->begin(), msgs->end());
    const RealVector r = edge::ota_round(sent, 1.0, rng);
    benchmark::DoNotOptimize(edge::ps_decode_analog(r, msgs->front().alpha, static_cast<double>(k), proj));
  }
}
BENCHMARK(BM_AnalogRound)->Arg(5)->Arg(25);

static void BM_MlDetect(benchmark::State& state) {
  Rng rng(8);
  const auto inst = detect::draw_instances(8, state.range(0), 10.0, 64, rng);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(detect::ml_detect(inst[i++ % inst.size()]));
}
BENCHMARK(BM_MlDetect)->Arg(4)->Arg(8);

static void BM_UnfoldedGradient(benchmark::State& state) {
  detect::DetectorConfig cfg;
  Rng rng(9);
  const auto d = detect::UnfoldedDetector::initialize(cfg, rng);
  const auto batch = detect::draw_instances(cfg.n_rx, cfg.n_tx, 10.0, cfg.batch_size, rng);
  for (auto _ : state) benchmark::DoNotOptimize(detect::unfolded_gradient(d, batch));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_UnfoldedGradient)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
