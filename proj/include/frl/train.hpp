#pragma once

#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "frl/adam.hpp"
#include "frl/models.hpp"
#include "frl/rng.hpp"
#include "frl/tensor.hpp"

namespace frl {

struct TrainSettings {
  int epochs = 10;
  int batch_size = 64;
  double lr = 0.0;          // 0 selects the family default
  int lr_decay_every = 0;   // epochs between halvings; 0 disables
  double lr_decay = 0.5;
  uint64_t seed = 0;
};

// Mini-batch Adam over any model exposing loss(batch, rng) in nats/dim and
// named_params(). Returns the per-epoch mean training loss in bits/dim.
// Deterministic for a fixed seed: shuffling and model noise run on their own
// derived streams.
template <typename Model, typename T = float>
std::vector<double> train_model(Model& model, const std::vector<QuantSample>& data,
                                const TrainSettings& cfg, double default_lr) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.epochs < 1 || cfg.batch_size < 1)
    throw std::invalid_argument("train: epochs and batch_size must be positive");

  auto named = model.named_params();
  std::vector<TensorT<T>*> params;
  for (auto& p : named) params.push_back(p.tensor);

  AdamConfig acfg;
  acfg.lr = cfg.lr > 0.0 ? cfg.lr : default_lr;
  AdamT<T> opt(acfg);

  Rng shuffle_rng(mix_seed(cfg.seed, hash_str("shuffle")));
  Rng model_rng(mix_seed(cfg.seed, hash_str("model-noise")));

  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> curve;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.lr_decay_every > 0 && epoch > 0 && epoch % cfg.lr_decay_every == 0)
      opt.set_lr(opt.config().lr * cfg.lr_decay);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double nats_sum = 0.0;
    int64_t count = 0;
    for (size_t start = 0; start < data.size(); start += cfg.batch_size) {
      const size_t end = std::min(start + cfg.batch_size, data.size());
      std::vector<const QuantSample*> batch;
      batch.reserve(end - start);
      for (size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
      try {
        TapeT<T> tape;
        const TensorT<T> loss = model.loss(batch, model_rng);
        nats_sum += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
        count += static_cast<int64_t>(batch.size());
        const GradsT<T> grads = tape.backward(loss);
        std::vector<const std::vector<T>*> gptrs;
        gptrs.reserve(params.size());
        for (const auto& p : named) gptrs.push_back(&grads.at(*p.tensor));
        opt.step(params, gptrs);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train: epoch " + std::to_string(epoch) + ", batch at sample " +
                                 std::to_string(start) + ": " + e.what());
      }
    }
    curve.push_back(nats_sum / static_cast<double>(count) / std::numbers::ln2);
  }
  return curve;
}

}  // namespace frl
