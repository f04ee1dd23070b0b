#include "wml/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "wml/errors.hpp"

namespace wml::nn {

TrainResult train(MlpModel model, std::span<const Sample> dataset, const Loss& loss, const TrainConfig& config,
                  AdamState& state) {
  if (dataset.empty()) {
    throw InvalidArgument("train: empty dataset");
  }
  if (config.epochs < 0) {
    throw InvalidArgument("train: epochs must be non-negative");
  }
  if (config.batch_size < 1 || static_cast<std::size_t>(config.batch_size) > dataset.size()) {
    throw InvalidArgument("train: batch_size must lie in [1, dataset size]");
  }

  TrainResult result{std::move(model), {}};
  result.loss_trace.reserve(static_cast<std::size_t>(config.epochs));

  const Rng root(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::vector<Sample> batch;
  const std::size_t batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = root.child("shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    Rng dropout_rng = root.child("dropout", static_cast<std::uint64_t>(epoch));

    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(dataset[order[i]]);
      }
      GradientResult g;
      try {
        g = mlp_gradient(result.model, batch, loss, config.dropout_train, &dropout_rng);
      } catch (const NumericalError& e) {
        throw DivergenceError(std::string("train: ") + e.what(), static_cast<std::size_t>(epoch));
      }
      weighted += g.loss * static_cast<double>(stop - start);
      adam_step(result.model, state, g.gradient);
    }
    const double epoch_loss = weighted / static_cast<double>(dataset.size());
    if (!std::isfinite(epoch_loss) || !result.model.params.all_finite()) {
      throw DivergenceError("train: non-finite loss", static_cast<std::size_t>(epoch));
    }
    result.loss_trace.push_back(epoch_loss);
  }
  return result;
}

}  // namespace wml::nn
