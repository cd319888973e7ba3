#pragma once

#include <span>
#include <vector>

#include "bldgnet/tensor.hpp"

namespace bldg {

// Triangle filter that performs linear interpolation when convolved with a
// zero-stuffed signal carrying `insertions` zeros between known samples.
// taps = [1, 2, ..., n+1, ..., 2, 1] / (n+1), center tap exactly 1.
struct InterpFilter {
  int insertions = 0;
  std::vector<double> taps;

  int factor() const { return insertions + 1; }
  int radius() const { return insertions; }
};

InterpFilter make_interp_filter(int insertions);

// 1-D interpolation of `signal` by `factor` via zero-stuffing and
// convolution; returns the (n-1)*factor+1 samples spanned by the input.
template <typename T>
std::vector<T> interpolate_line(std::span<const T> signal, int factor);

// Bilinear upsampling of an H x W x C map to (H*f) x (W*f) x C. The
// convolution produces (H-1)*f+1 rows/cols; the last computed row and column
// are replicated f-1 times to reach H*f x W*f.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& map, int factor);

// Exact adjoint of upsample_bilinear. `upstream` must be (H*f) x (W*f) x C.
template <typename T>
Tensor<T> upsample_vjp(const Tensor<T>& upstream, int factor);

}  // namespace bldg
