#include "bldgnet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

namespace bldg {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ValueError("learning_rate must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ValueError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValueError("weight_decay must be >= 0");
  if (batch_size < 1) throw ValueError("batch_size must be >= 1");
  if (epochs < 0) throw ValueError("epochs must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ValueError("validation_fraction must lie in [0, 1)");
}

std::string format_epoch_line(const EpochLog& log) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d\t%.17g\t%.17g\t%.3f", log.epoch,
                log.train_loss, log.validation_error, log.wall_seconds);
  return buf;
}

EpochLog parse_epoch_line(const std::string& line) {
  std::istringstream in(line);
  EpochLog log;
  if (!(in >> log.epoch >> log.train_loss >> log.validation_error >>
        log.wall_seconds)) {
    throw ParseError("malformed epoch log line: '" + line + "'");
  }
  return log;
}

template <typename T>
void sgd_update(ParamSet<T>& params, const ParamGrads<T>& grads,
                const TrainConfig& config) {
  const std::size_t n = params.layers.size();
  if (grads.filters.size() != n || grads.bias.size() != n ||
      params.velocity.filters.size() != n || params.velocity.bias.size() != n) {
    throw ShapeError("sgd_update: gradient/momentum layer count mismatch");
  }
  const T lr = static_cast<T>(config.learning_rate);
  const T mu = static_cast<T>(config.momentum);
  const T decay = static_cast<T>(config.weight_decay * config.learning_rate);

  auto step = [&](Tensor<T>& w, Tensor<T>& v, const Tensor<T>& g, T wd) {
    w.require_same_shape(g, "sgd_update gradient");
    w.require_same_shape(v, "sgd_update momentum");
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = mu * v[i] - wd * w[i] - lr * g[i];
      w[i] += v[i];
    }
  };
  for (std::size_t l = 0; l < n; ++l) {
    step(params.layers[l].filters, params.velocity.filters[l],
         grads.filters[l], decay);
    step(params.layers[l].bias, params.velocity.bias[l], grads.bias[l], T{});
  }
}

template <typename T>
double validate(const NetworkSpec& spec, const ParamSet<T>& params,
                const std::vector<TrainingSample<T>>& samples) {
  std::size_t wrong = 0, total = 0;
  for (const auto& s : samples) {
    const Tensor<T> probs = forward(spec, params, s.image, false).probs;
    const std::size_t c = probs.dim(2);
    if (s.labels.size() * c != probs.size())
      throw ShapeError("validate: label map does not match output extents");
    for (std::size_t p = 0; p < s.labels.size(); ++p) {
      const T* q = probs.data() + p * c;
      const auto arg = static_cast<std::int32_t>(std::max_element(q, q + c) - q);
      if (arg != s.labels[p]) ++wrong;
    }
    total += s.labels.size();
  }
  return total ? static_cast<double>(wrong) / static_cast<double>(total) : 0.0;
}

namespace {

template <typename T>
void accumulate(ParamGrads<double>& acc, const ParamGrads<T>& g) {
  for (std::size_t l = 0; l < g.filters.size(); ++l) {
    for (std::size_t i = 0; i < g.filters[l].size(); ++i)
      acc.filters[l][i] += static_cast<double>(g.filters[l][i]);
    for (std::size_t i = 0; i < g.bias[l].size(); ++i)
      acc.bias[l][i] += static_cast<double>(g.bias[l][i]);
  }
}

template <typename T>
ParamGrads<T> mean_of(const ParamGrads<double>& acc, std::size_t count) {
  const double inv = 1.0 / static_cast<double>(count);
  ParamGrads<T> out;
  for (const auto& t : acc.filters) {
    Tensor<double> scaled = t;
    scaled *= inv;
    out.filters.push_back(scaled.template cast<T>());
  }
  for (const auto& t : acc.bias) {
    Tensor<double> scaled = t;
    scaled *= inv;
    out.bias.push_back(scaled.template cast<T>());
  }
  return out;
}

}  // namespace

template <typename T>
TrainResult<T> train(const NetworkSpec& spec, ParamSet<T> initial,
                     const std::vector<TrainingSample<T>>& dataset,
                     const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  spec.validate();
  if (dataset.empty()) throw ValueError("train: dataset is empty");

  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_val = static_cast<std::size_t>(
      std::floor(config.validation_fraction * static_cast<double>(dataset.size())));
  if (n_val >= dataset.size())
    throw ValueError("train: validation split leaves no training samples");
  std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> val_idx(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_idx.begin(), val_idx.end());

  std::vector<TrainingSample<T>> val_set;
  for (std::size_t i : (val_idx.empty() ? train_idx : val_idx))
    val_set.push_back(dataset[i]);

  TrainResult<T> result;
  result.validation_indices = val_idx;
  result.final_params = std::move(initial);
  result.best_params = result.final_params;
  double best_error = std::numeric_limits<double>::infinity();

  ParamSet<T>& params = result.final_params;
  const ParamGrads<double> zero = convert_params<double>(params).zeros_like();
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(train_idx.begin(), train_idx.end(), rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += batch) {
      const std::size_t end = std::min(start + batch, train_idx.size());
      ParamGrads<double> acc = zero;
      double batch_loss = 0.0;
      for (std::size_t j = start; j < end; ++j) {
        const TrainingSample<T>& s = dataset[train_idx[j]];
        auto fwd = forward(spec, params, s.image, true, false);
        BackwardResult<T> b = backward(spec, params, fwd.cache, s.labels);
        batch_loss += static_cast<double>(b.loss);
        accumulate(acc, b.grads);
      }
      const std::size_t count = end - start;
      batch_loss /= static_cast<double>(count);
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite loss at epoch " +
                            std::to_string(epoch) + ", batch " +
                            std::to_string(batches + 1));
      }
      sgd_update(params, mean_of<T>(acc, count), config);
      loss_sum += batch_loss;
      ++batches;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(batches);
    log.validation_error = validate(spec, params, val_set);
    log.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    result.log.push_back(log);
    if (hooks.on_epoch) hooks.on_epoch(log);
    if (log.validation_error < best_error) {
      best_error = log.validation_error;
      result.best_params = params;
      if (hooks.on_best) hooks.on_best(log);
    }
  }
  return result;
}

template void sgd_update(ParamSet<float>&, const ParamGrads<float>&,
                         const TrainConfig&);
template void sgd_update(ParamSet<double>&, const ParamGrads<double>&,
                         const TrainConfig&);
template double validate(const NetworkSpec&, const ParamSet<float>&,
                         const std::vector<TrainingSample<float>>&);
template double validate(const NetworkSpec&, const ParamSet<double>&,
                         const std::vector<TrainingSample<double>>&);
template TrainResult<float> train(const NetworkSpec&, ParamSet<float>,
                                  const std::vector<TrainingSample<float>>&,
                                  const TrainConfig&, const TrainHooks&);
template TrainResult<double> train(const NetworkSpec&, ParamSet<double>,
                                   const std::vector<TrainingSample<double>>&,
                                   const TrainConfig&, const TrainHooks&);

}  // namespace bldg
