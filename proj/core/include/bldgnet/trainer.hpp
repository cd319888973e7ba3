#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bldgnet/netgraph.hpp"

namespace bldg {

struct TrainConfig {
  double learning_rate = 0.02;
  double momentum = 0.9;
  double weight_decay = 5e-5;
  int batch_size = 5;
  int epochs = 1;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;

  void validate() const;
};

// One image with class-index labels at output resolution.
template <typename T>
struct TrainingSample {
  Tensor<T> image;  // H x W x C
  ClassMap labels;  // (H/2) x (W/2), values in [0, classes)
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_error = 0.0;
  double wall_seconds = 0.0;
};

// "epoch\ttrain_loss\tvalidation_error\twall_seconds", full-precision losses.
std::string format_epoch_line(const EpochLog& log);
EpochLog parse_epoch_line(const std::string& line);

// Momentum/weight-decay step, in place:
//   v <- momentum * v - weight_decay * lr * w - lr * g;  w <- w + v
// Biases use the same rule without weight decay.
template <typename T>
void sgd_update(ParamSet<T>& params, const ParamGrads<T>& grads,
                const TrainConfig& config);

// Fraction of pixels whose argmax class differs from the label.
template <typename T>
double validate(const NetworkSpec& spec, const ParamSet<T>& params,
                const std::vector<TrainingSample<T>>& samples);

template <typename T>
struct TrainResult {
  ParamSet<T> final_params;
  ParamSet<T> best_params;  // lowest validation error seen
  std::vector<EpochLog> log;
  std::vector<std::size_t> validation_indices;
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  // Called whenever the best validation error improves.
  std::function<void(const EpochLog&)> on_best;
};

// Mini-batch SGD with per-epoch seeded shuffling. The last
// floor(validation_fraction * N) samples of a seeded permutation are held out
// for validation; with none held out the training samples are scored.
template <typename T>
TrainResult<T> train(const NetworkSpec& spec, ParamSet<T> initial,
                     const std::vector<TrainingSample<T>>& dataset,
                     const TrainConfig& config, const TrainHooks& hooks = {});

}  // namespace bldg
