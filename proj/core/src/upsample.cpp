#include "bldgnet/upsample.hpp"

#include <algorithm>
#include <string>

namespace bldg {

namespace {

void require_factor(int factor, const char* what) {
  if (factor < 1) {
    throw ValueError(std::string(what) + ": factor must be >= 1, got " +
                     std::to_string(factor));
  }
}

// View of an H x W x C tensor as `outer` lines of `length` samples along one
// spatial axis, each sample being a contiguous vector of `inner` values.
struct AxisView {
  std::size_t outer, length, inner;
};

AxisView axis_view(const Shape& s, int axis) {
  if (axis == 0) return {1, s[0], s[1] * s[2]};
  return {s[0], s[1], s[2]};
}

// Zero-stuff along one axis and convolve with the triangle filter
// (same-zero padding), then replicate the last computed sample so the line
// grows from n to n * factor samples.
template <typename T>
Tensor<T> upsample_axis(const Tensor<T>& in, int axis, const InterpFilter& f) {
  const std::size_t fac = static_cast<std::size_t>(f.factor());
  const AxisView v = axis_view(in.shape(), axis);
  Shape out_shape = in.shape();
  out_shape[static_cast<std::size_t>(axis)] = v.length * fac;
  Tensor<T> out(out_shape);

  const std::size_t stuffed = (v.length - 1) * fac + 1;
  const std::ptrdiff_t r = f.radius();
  for (std::size_t o = 0; o < v.outer; ++o) {
    const T* src = in.data() + o * v.length * v.inner;
    T* dst = out.data() + o * v.length * fac * v.inner;
    for (std::size_t j = 0; j < stuffed; ++j) {
      T* y = dst + j * v.inner;
      for (std::ptrdiff_t t = -r; t <= r; ++t) {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(j) + t;
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(stuffed)) continue;
        // Stuffed zeros contribute nothing; only known samples are read.
        if (static_cast<std::size_t>(s) % fac != 0) continue;
        const T w = static_cast<T>(f.taps[static_cast<std::size_t>(t + r)]);
        const T* x = src + (static_cast<std::size_t>(s) / fac) * v.inner;
        for (std::size_t k = 0; k < v.inner; ++k) y[k] += w * x[k];
      }
    }
    const T* last = dst + (stuffed - 1) * v.inner;
    for (std::size_t j = stuffed; j < v.length * fac; ++j)
      std::copy(last, last + v.inner, dst + j * v.inner);
  }
  return out;
}

template <typename T>
Tensor<T> upsample_axis_adjoint(const Tensor<T>& up, int axis,
                                const InterpFilter& f) {
  const std::size_t fac = static_cast<std::size_t>(f.factor());
  const AxisView v = axis_view(up.shape(), axis);
  const std::size_t n = v.length / fac;
  Shape out_shape = up.shape();
  out_shape[static_cast<std::size_t>(axis)] = n;
  Tensor<T> out(out_shape);

  const std::size_t stuffed = (n - 1) * fac + 1;
  const std::ptrdiff_t r = f.radius();
  std::vector<T> folded(stuffed * v.inner);
  for (std::size_t o = 0; o < v.outer; ++o) {
    const T* src = up.data() + o * v.length * v.inner;
    // Adjoint of edge replication: replicated samples fold onto the last
    // computed one.
    std::copy(src, src + stuffed * v.inner, folded.begin());
    T* tail = folded.data() + (stuffed - 1) * v.inner;
    for (std::size_t j = stuffed; j < v.length; ++j)
      for (std::size_t k = 0; k < v.inner; ++k) tail[k] += src[j * v.inner + k];

    // Convolution with the (symmetric) filter, kept only at the known-sample
    // positions, which is the adjoint of zero-stuffing.
    T* dst = out.data() + o * n * v.inner;
    for (std::size_t i = 0; i < n; ++i) {
      T* g = dst + i * v.inner;
      const std::ptrdiff_t centre = static_cast<std::ptrdiff_t>(i * fac);
      for (std::ptrdiff_t t = -r; t <= r; ++t) {
        const std::ptrdiff_t s = centre + t;
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(stuffed)) continue;
        const T w = static_cast<T>(f.taps[static_cast<std::size_t>(t + r)]);
        const T* u = folded.data() + static_cast<std::size_t>(s) * v.inner;
        for (std::size_t k = 0; k < v.inner; ++k) g[k] += w * u[k];
      }
    }
  }
  return out;
}

template <typename T>
void require_map(const Tensor<T>& t, const char* what) {
  if (t.rank() != 3 || t.dim(0) == 0 || t.dim(1) == 0) {
    throw ShapeError(std::string(what) + ": expected non-empty H x W x C, got " +
                     shape_string(t.shape()));
  }
}

}  // namespace

InterpFilter make_interp_filter(int insertions) {
  if (insertions < 0) {
    throw ValueError("make_interp_filter: insertion count must be >= 0, got " +
                     std::to_string(insertions));
  }
  InterpFilter f;
  f.insertions = insertions;
  const int n1 = insertions + 1;
  f.taps.resize(static_cast<std::size_t>(2 * insertions + 1));
  for (int i = 0; i <= insertions; ++i) {
    const double v = static_cast<double>(i + 1) / n1;
    f.taps[static_cast<std::size_t>(i)] = v;
    f.taps[static_cast<std::size_t>(2 * insertions - i)] = v;
  }
  return f;
}

template <typename T>
std::vector<T> interpolate_line(std::span<const T> signal, int factor) {
  require_factor(factor, "interpolate_line");
  if (signal.empty()) return {};
  const InterpFilter f = make_interp_filter(factor - 1);
  Tensor<T> line({signal.size(), 1, 1},
                 std::vector<T>(signal.begin(), signal.end()));
  const Tensor<T> up = upsample_axis(line, 0, f);
  const std::size_t core = (signal.size() - 1) * static_cast<std::size_t>(factor) + 1;
  return std::vector<T>(up.data(), up.data() + core);
}

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& map, int factor) {
  require_factor(factor, "upsample_bilinear");
  require_map(map, "upsample_bilinear");
  if (factor == 1) return map;
  const InterpFilter f = make_interp_filter(factor - 1);
  return upsample_axis(upsample_axis(map, 0, f), 1, f);
}

template <typename T>
Tensor<T> upsample_vjp(const Tensor<T>& upstream, int factor) {
  require_factor(factor, "upsample_vjp");
  require_map(upstream, "upsample_vjp");
  const auto fac = static_cast<std::size_t>(factor);
  if (upstream.dim(0) % fac != 0 || upstream.dim(1) % fac != 0) {
    throw ShapeError("upsample_vjp: upstream " +
                     shape_string(upstream.shape()) +
                     " is not an upsampled shape for factor " +
                     std::to_string(factor));
  }
  if (factor == 1) return upstream;
  const InterpFilter f = make_interp_filter(factor - 1);
  return upsample_axis_adjoint(upsample_axis_adjoint(upstream, 1, f), 0, f);
}

template std::vector<float> interpolate_line(std::span<const float>, int);
template std::vector<double> interpolate_line(std::span<const double>, int);
template Tensor<float> upsample_bilinear(const Tensor<float>&, int);
template Tensor<double> upsample_bilinear(const Tensor<double>&, int);
template Tensor<float> upsample_vjp(const Tensor<float>&, int);
template Tensor<double> upsample_vjp(const Tensor<double>&, int);

}  // namespace bldg
