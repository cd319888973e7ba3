#pragma once

#include <cstdint>
#include <vector>

#include "bldgnet/tensor.hpp"

namespace bldg {

enum class Padding { same_zero, valid };

// A bank of `count` filters of size kh x kw x cin plus one bias per filter.
template <typename T>
struct ConvParams {
  Tensor<T> filters;  // count x kh x kw x cin
  Tensor<T> bias;     // count
  Padding padding = Padding::same_zero;

  std::size_t count() const { return filters.dim(0); }
  std::size_t kernel_h() const { return filters.dim(1); }
  std::size_t kernel_w() const { return filters.dim(2); }
  std::size_t in_channels() const { return filters.dim(3); }

  // Throws ShapeError on malformed banks (rank, bias length, even kernels
  // under same-zero padding).
  void validate() const;
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> filters;
  Tensor<T> bias;
};

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvParams<T>& p);

// Partial derivatives of sum(upstream * conv2d(input, p)). With
// `with_input_grad` false the input gradient is skipped and left empty.
template <typename T>
ConvGrads<T> conv2d_vjp(const Tensor<T>& input, const ConvParams<T>& p,
                        const Tensor<T>& upstream, bool with_input_grad = true);

// Winning flat input offset for every pooled element, in pooled row-major
// order. The input shape is kept so the adjoint can be sized without it.
struct ArgmaxMap {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::uint32_t> index;
};

template <typename T>
struct PoolResult {
  Tensor<T> output;
  ArgmaxMap argmax;
};

// 2x2 non-overlapping max pooling; odd trailing row/column is dropped and
// ties go to the first element in row-major window order.
template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input);

template <typename T>
Tensor<T> maxpool2_vjp(const ArgmaxMap& argmax, const Tensor<T>& upstream);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

template <typename T>
Tensor<T> relu_vjp(const Tensor<T>& input, const Tensor<T>& upstream);

// Per-pixel softmax over the channel axis of an H x W x C tensor.
template <typename T>
Tensor<T> pixel_softmax(const Tensor<T>& logits);

template <typename T>
struct XentResult {
  T loss{};
  Tensor<T> grad_logits;
};

// Mean over pixels of -log softmax(logits)[label]. Labels must lie in
// [0, C) where C is the channel count of `logits`.
template <typename T>
XentResult<T> pixel_softmax_xent(const Tensor<T>& logits,
                                 const ClassMap& labels);

}  // namespace bldg
