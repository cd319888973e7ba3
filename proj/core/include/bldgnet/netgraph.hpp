#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bldgnet/layers.hpp"
#include "bldgnet/tensor.hpp"

namespace bldg {

// One conv -> ReLU -> optional 2x2 max-pool block.
struct StageSpec {
  int filter_count = 0;
  int filter_size = 3;  // odd
  int pool = 1;         // 1 = no pooling, 2 = 2x2 max pooling
  bool tapped = false;  // branched into the fusion head

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

struct NetworkSpec {
  std::vector<StageSpec> stages;
  int input_channels = 3;
  int fusion_classes = 128;

  // Sum of filter counts over tapped stages.
  int fusion_input_channels() const;
  // Product of pooling factors over all stages; input extents must be a
  // multiple of this (and of 2, the output stride).
  int total_stride() const;
  // Required divisor of input extents (at least 16).
  int input_multiple() const;
  // Upsampling factor from a stage's output resolution back to the stage-1
  // output resolution.
  int tap_factor(std::size_t stage) const;
  // Per-stage checks only: filter counts, odd sizes, pools in {1, 2}.
  void validate_layers() const;
  // Throws ValueError on an architecture that cannot be built and trained:
  // validate_layers() plus a pooling first stage and a tapped last stage.
  void validate() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// The seven-stage building-extraction architecture: 290 fused channels,
// 128 classes.
NetworkSpec paper_network();

// Same filter sizes, pools and taps with custom per-stage filter counts.
NetworkSpec scaled_network(const std::vector<int>& filter_counts,
                           int fusion_classes = 128);

// Spec text format, one directive per line ('#' starts a comment):
//   input_channels 3
//   classes 128
//   stage <filters> <size> <pool> [tap]
NetworkSpec parse_network_spec(const std::string& text);
std::string format_network_spec(const NetworkSpec& spec);

// Unit-count recurrence R(i) = p_i * R(i+1) + (s_i - 1), R(m) = 1.
// profile[i] is R(i) for i = 0..m; profile[0] is the receptive field.
std::vector<long long> receptive_field_profile(const NetworkSpec& spec);
long long receptive_field(const NetworkSpec& spec);

// Named-tensor gradient/momentum container shaped like the parameters.
// Index i < stages.size() addresses stage i; the last entry is the fusion head.
template <typename T>
struct ParamGrads {
  std::vector<Tensor<T>> filters;
  std::vector<Tensor<T>> bias;

  std::size_t layer_count() const { return filters.size(); }
};

template <typename T>
struct ParamSet {
  std::vector<ConvParams<T>> layers;  // stages..., fusion head
  ParamGrads<T> velocity;

  std::size_t layer_count() const { return layers.size(); }
  ConvParams<T>& fusion() { return layers.back(); }
  const ConvParams<T>& fusion() const { return layers.back(); }

  // Zero tensors shaped like the parameters.
  ParamGrads<T> zeros_like() const;
  // Names used in checkpoints: stage1.filters, stage1.bias, ...,
  // fusion.filters, fusion.bias.
  std::vector<std::string> array_names() const;
};

// Uniform weights in [-a, a], a = sqrt(6 / (fan_in + fan_out)); zero biases
// and momentum. Fully determined by `seed`.
template <typename T>
ParamSet<T> init_params(const NetworkSpec& spec, std::uint64_t seed);

template <typename T>
struct StageCache {
  Tensor<T> input;
  Tensor<T> pre_activation;
  std::optional<ArgmaxMap> pool_argmax;
};

template <typename T>
struct ForwardCache {
  std::vector<StageCache<T>> stages;
  Tensor<T> stacked;  // fused-resolution stack of upsampled taps
  Tensor<T> logits;
};

template <typename T>
struct ForwardResult {
  Tensor<T> probs;  // (H/2) x (W/2) x classes; empty without with_probs
  std::optional<ForwardCache<T>> cache;
};

// A training step only needs the cache; with_probs = false skips the
// softmax.
template <typename T>
ForwardResult<T> forward(const NetworkSpec& spec, const ParamSet<T>& params,
                         const Tensor<T>& image, bool keep_intermediates,
                         bool with_probs = true);

// Path masks for the branch-decomposition checks. cut_fusion_branch[i] drops
// the gradient reaching stage i through the fusion head; cut_next_stage[i]
// drops the gradient reaching stage i through stage i+1.
struct BackwardOptions {
  std::vector<bool> cut_fusion_branch;
  std::vector<bool> cut_next_stage;
};

template <typename T>
struct BackwardResult {
  T loss{};
  ParamGrads<T> grads;
};

// Labels are class indices in [0, classes) at output resolution.
template <typename T>
BackwardResult<T> backward(const NetworkSpec& spec, const ParamSet<T>& params,
                           const std::optional<ForwardCache<T>>& cache,
                           const ClassMap& labels,
                           const BackwardOptions& options = {});

template <typename U, typename T>
ParamSet<U> convert_params(const ParamSet<T>& params);

}  // namespace bldg
