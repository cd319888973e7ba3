#include "bldgnet/layers.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bldg {

namespace {

struct ConvGeometry {
  std::size_t in_h, in_w, cin;
  std::size_t out_h, out_w, count;
  std::size_t kh, kw;
  std::ptrdiff_t pad_top, pad_left;
  std::size_t patch;  // kh * kw * cin
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const ConvParams<T>& p) {
  p.validate();
  if (input.rank() != 3) {
    throw ShapeError("conv2d: input must be H x W x C, got " +
                     shape_string(input.shape()));
  }
  ConvGeometry g{};
  g.in_h = input.dim(0);
  g.in_w = input.dim(1);
  g.cin = input.dim(2);
  g.count = p.count();
  g.kh = p.kernel_h();
  g.kw = p.kernel_w();
  if (g.cin != p.in_channels()) {
    throw ShapeError("conv2d: input has " + std::to_string(g.cin) +
                     " channels but filters expect " +
                     std::to_string(p.in_channels()));
  }
  if (p.padding == Padding::same_zero) {
    g.out_h = g.in_h;
    g.out_w = g.in_w;
    g.pad_top = static_cast<std::ptrdiff_t>(g.kh / 2);
    g.pad_left = static_cast<std::ptrdiff_t>(g.kw / 2);
  } else {
    if (g.in_h < g.kh || g.in_w < g.kw) {
      throw ShapeError("conv2d: valid padding needs input " +
                       shape_string(input.shape()) + " at least as large as " +
                       "the " + std::to_string(g.kh) + "x" +
                       std::to_string(g.kw) + " kernel");
    }
    g.out_h = g.in_h - g.kh + 1;
    g.out_w = g.in_w - g.kw + 1;
    g.pad_top = 0;
    g.pad_left = 0;
  }
  g.patch = g.kh * g.kw * g.cin;
  return g;
}

int blas_int(std::size_t n) {
  if (n > static_cast<std::size_t>(std::numeric_limits<int>::max()))
    throw ShapeError("matrix extent " + std::to_string(n) + " too large");
  return static_cast<int>(n);
}

// Gathers the zero-extended input windows of one output row into
// `patches` (out_w x patch, row-major).
template <typename T>
void gather_row(const Tensor<T>& input, const ConvGeometry& g, std::size_t y,
                std::vector<T>& patches) {
  const T* src = input.data();
  const std::size_t span = g.kw * g.cin;
  for (std::size_t ky = 0; ky < g.kh; ++ky) {
    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - g.pad_top;
    const bool row_inside = iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.in_h);
    for (std::size_t x = 0; x < g.out_w; ++x) {
      T* dst = patches.data() + x * g.patch + ky * span;
      if (!row_inside) {
        std::fill(dst, dst + span, T{});
        continue;
      }
      const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(x) - g.pad_left;
      const T* row = src + static_cast<std::size_t>(iy) * g.in_w * g.cin;
      if (ix0 >= 0 && ix0 + static_cast<std::ptrdiff_t>(g.kw) <=
                          static_cast<std::ptrdiff_t>(g.in_w)) {
        const T* s = row + static_cast<std::size_t>(ix0) * g.cin;
        std::copy(s, s + span, dst);
        continue;
      }
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const std::ptrdiff_t ix = ix0 + static_cast<std::ptrdiff_t>(kx);
        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) {
          std::fill(dst + kx * g.cin, dst + (kx + 1) * g.cin, T{});
        } else {
          const T* s = row + static_cast<std::size_t>(ix) * g.cin;
          std::copy(s, s + g.cin, dst + kx * g.cin);
        }
      }
    }
  }
}

// Adds per-window gradients of one output row back onto the input grid.
template <typename T>
void scatter_row(Tensor<T>& grad_input, const ConvGeometry& g, std::size_t y,
                 const std::vector<T>& patches) {
  T* dst = grad_input.data();
  for (std::size_t ky = 0; ky < g.kh; ++ky) {
    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - g.pad_top;
    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
    for (std::size_t x = 0; x < g.out_w; ++x) {
      const T* src = patches.data() + x * g.patch + ky * g.kw * g.cin;
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const std::ptrdiff_t ix =
            static_cast<std::ptrdiff_t>(x + kx) - g.pad_left;
        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
        T* d = dst + (static_cast<std::size_t>(iy) * g.in_w +
                      static_cast<std::size_t>(ix)) *
                         g.cin;
        const T* s = src + kx * g.cin;
        for (std::size_t c = 0; c < g.cin; ++c) d[c] += s[c];
      }
    }
  }
}

// C (m x n) = A * B + beta * C, row-major with leading dimensions.
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, blas_int(m),
              blas_int(n), blas_int(k), 1.0, a, blas_int(lda), b,
              blas_int(ldb), beta, c, blas_int(ldc));
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a,
          std::size_t lda, const float* b, std::size_t ldb, float beta,
          float* c, std::size_t ldc) {
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, blas_int(m),
              blas_int(n), blas_int(k), 1.0f, a, blas_int(lda), b,
              blas_int(ldb), beta, c, blas_int(ldc));
}

// Same with A transposed: C (m x n) = A^T * B + beta * C, A stored k x m.
void gemm_at(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double beta,
             double* c, std::size_t ldc) {
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, blas_int(m),
              blas_int(n), blas_int(k), 1.0, a, blas_int(lda), b,
              blas_int(ldb), beta, c, blas_int(ldc));
}

void gemm_at(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float beta,
             float* c, std::size_t ldc) {
  cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, blas_int(m),
              blas_int(n), blas_int(k), 1.0f, a, blas_int(lda), b,
              blas_int(ldb), beta, c, blas_int(ldc));
}

}  // namespace

template <typename T>
void ConvParams<T>::validate() const {
  if (filters.rank() != 4) {
    throw ShapeError("filter bank must be count x kh x kw x cin, got " +
                     shape_string(filters.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != filters.dim(0)) {
    throw ShapeError("bias shape " + shape_string(bias.shape()) +
                     " does not match filter count " +
                     std::to_string(filters.dim(0)));
  }
  if (padding == Padding::same_zero &&
      (filters.dim(1) % 2 == 0 || filters.dim(2) % 2 == 0)) {
    throw ShapeError("same-zero padding requires odd kernel extents, got " +
                     shape_string(filters.shape()));
  }
}

// A 1x1 convolution reads its windows straight from the input rows.
bool pointwise(const ConvGeometry& g) { return g.kh == 1 && g.kw == 1; }

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvParams<T>& p) {
  const ConvGeometry g = conv_geometry(input, p);
  Tensor<T> out = Tensor<T>::hwc(g.out_h, g.out_w, g.count);
  T* o = out.data();
  for (std::size_t i = 0; i < g.out_h * g.out_w; ++i)
    std::copy(p.bias.data(), p.bias.data() + g.count, o + i * g.count);

  // Each output row is patches (out_w x patch) times filters^T.
  std::vector<T> patches(pointwise(g) ? 0 : g.out_w * g.patch);
  std::vector<T> wt(g.patch * g.count);
  for (std::size_t f = 0; f < g.count; ++f)
    for (std::size_t k = 0; k < g.patch; ++k)
      wt[k * g.count + f] = p.filters[f * g.patch + k];
  for (std::size_t y = 0; y < g.out_h; ++y) {
    const T* a = input.data() + y * g.in_w * g.cin;
    if (!pointwise(g)) {
      gather_row(input, g, y, patches);
      a = patches.data();
    }
    gemm(g.out_w, g.count, g.patch, a, g.patch, wt.data(), g.count, T{1},
         o + y * g.out_w * g.count, g.count);
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_vjp(const Tensor<T>& input, const ConvParams<T>& p,
                        const Tensor<T>& upstream, bool with_input_grad) {
  const ConvGeometry g = conv_geometry(input, p);
  if (upstream.shape() != Shape{g.out_h, g.out_w, g.count}) {
    throw ShapeError("conv2d_vjp: upstream " +
                     shape_string(upstream.shape()) + " does not match " +
                     "conv output " +
                     shape_string(Shape{g.out_h, g.out_w, g.count}));
  }
  ConvGrads<T> grads{with_input_grad ? Tensor<T>(input.shape()) : Tensor<T>{},
                     Tensor<T>(p.filters.shape()), Tensor<T>(p.bias.shape())};

  std::vector<T> patches(pointwise(g) ? 0 : g.out_w * g.patch);
  std::vector<T> dpatches(with_input_grad ? g.out_w * g.patch : 0);
  T* db = grads.bias.data();
  for (std::size_t y = 0; y < g.out_h; ++y) {
    const T* up = upstream.data() + y * g.out_w * g.count;
    for (std::size_t x = 0; x < g.out_w; ++x)
      for (std::size_t f = 0; f < g.count; ++f) db[f] += up[x * g.count + f];
    const T* b = input.data() + y * g.in_w * g.cin;
    if (!pointwise(g)) {
      gather_row(input, g, y, patches);
      b = patches.data();
    }
    // d filters (count x patch) += up^T * patches
    gemm_at(g.count, g.patch, g.out_w, up, g.count, b, g.patch, T{1},
            grads.filters.data(), g.patch);
    if (with_input_grad) {
      // d patches (out_w x patch) = up * filters
      gemm(g.out_w, g.patch, g.count, up, g.count, p.filters.data(), g.patch,
           T{0}, dpatches.data(), g.patch);
      scatter_row(grads.input, g, y, dpatches);
    }
  }
  return grads;
}

template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input) {
  if (input.rank() != 3) {
    throw ShapeError("maxpool2: input must be H x W x C, got " +
                     shape_string(input.shape()));
  }
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (h < 2 || w < 2) {
    throw ShapeError("maxpool2: input extents must be at least 2x2, got " +
                     shape_string(input.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult<T> r{Tensor<T>::hwc(oh, ow, c),
                  ArgmaxMap{input.shape(), Shape{oh, ow, c}, {}}};
  r.argmax.index.resize(oh * ow * c);
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      for (std::size_t k = 0; k < c; ++k) {
        std::size_t best = ((2 * i) * w + 2 * j) * c + k;
        T best_v = input[best];
        const std::size_t cand[3] = {((2 * i) * w + 2 * j + 1) * c + k,
                                     ((2 * i + 1) * w + 2 * j) * c + k,
                                     ((2 * i + 1) * w + 2 * j + 1) * c + k};
        for (std::size_t idx : cand) {
          if (input[idx] > best_v) {
            best_v = input[idx];
            best = idx;
          }
        }
        const std::size_t o = (i * ow + j) * c + k;
        r.output[o] = best_v;
        r.argmax.index[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2_vjp(const ArgmaxMap& argmax, const Tensor<T>& upstream) {
  if (upstream.shape() != argmax.output_shape) {
    throw ShapeError("maxpool2_vjp: upstream " +
                     shape_string(upstream.shape()) + " vs pooled " +
                     shape_string(argmax.output_shape));
  }
  Tensor<T> grad(argmax.input_shape);
  for (std::size_t o = 0; o < argmax.index.size(); ++o)
    grad[argmax.index[o]] += upstream[o];
  return grad;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    out[i] = input[i] > T{} ? input[i] : T{};
  return out;
}

template <typename T>
Tensor<T> relu_vjp(const Tensor<T>& input, const Tensor<T>& upstream) {
  input.require_same_shape(upstream, "relu_vjp");
  Tensor<T> grad(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    grad[i] = input[i] > T{} ? upstream[i] : T{};
  return grad;
}

template <typename T>
Tensor<T> pixel_softmax(const Tensor<T>& logits) {
  if (logits.rank() != 3) {
    throw ShapeError("pixel_softmax: logits must be H x W x C, got " +
                     shape_string(logits.shape()));
  }
  const std::size_t c = logits.dim(2);
  const std::size_t pixels = logits.dim(0) * logits.dim(1);
  Tensor<T> probs(logits.shape());
  for (std::size_t p = 0; p < pixels; ++p) {
    const T* l = logits.data() + p * c;
    T* q = probs.data() + p * c;
    const T m = *std::max_element(l, l + c);
    T sum{};
    for (std::size_t k = 0; k < c; ++k) {
      q[k] = std::exp(l[k] - m);
      sum += q[k];
    }
    const T inv = T{1} / sum;
    for (std::size_t k = 0; k < c; ++k) q[k] *= inv;
  }
  return probs;
}

template <typename T>
XentResult<T> pixel_softmax_xent(const Tensor<T>& logits,
                                 const ClassMap& labels) {
  if (logits.rank() != 3 || labels.rank() != 2 ||
      labels.dim(0) != logits.dim(0) || labels.dim(1) != logits.dim(1)) {
    throw ShapeError("pixel_softmax_xent: logits " +
                     shape_string(logits.shape()) + " vs labels " +
                     shape_string(labels.shape()));
  }
  const std::size_t c = logits.dim(2);
  const std::size_t pixels = labels.size();
  for (std::size_t p = 0; p < pixels; ++p) {
    if (labels[p] < 0 || static_cast<std::size_t>(labels[p]) >= c) {
      throw ValueError("pixel_softmax_xent: label " +
                       std::to_string(labels[p]) + " at pixel " +
                       std::to_string(p) + " outside [0, " +
                       std::to_string(c - 1) + "]");
    }
  }

  XentResult<T> r{T{}, Tensor<T>(logits.shape())};
  const double scale = 1.0 / static_cast<double>(pixels);
  std::vector<double> e(c);
  double total = 0.0;
  for (std::size_t p = 0; p < pixels; ++p) {
    const T* l = logits.data() + p * c;
    const std::size_t y = static_cast<std::size_t>(labels[p]);
    const double m = *std::max_element(l, l + c);
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      e[k] = std::exp(static_cast<double>(l[k]) - m);
      sum += e[k];
    }
    if (l[y] == m) {
      // log1p keeps precision when the true class dominates.
      double rest = 0.0;
      for (std::size_t k = 0; k < c; ++k)
        if (k != y) rest += e[k];
      total += std::log1p(rest);
    } else {
      total += m - static_cast<double>(l[y]) + std::log(sum);
    }
    T* g = r.grad_logits.data() + p * c;
    const double inv = scale / sum;
    for (std::size_t k = 0; k < c; ++k) g[k] = static_cast<T>(e[k] * inv);
    g[y] = static_cast<T>((e[y] / sum - 1.0) * scale);
  }
  r.loss = static_cast<T>(total / static_cast<double>(pixels));
  return r;
}

#define BLDG_INSTANTIATE_LAYERS(T)                                          \
  template struct ConvParams<T>;                                            \
  template Tensor<T> conv2d(const Tensor<T>&, const ConvParams<T>&);        \
  template ConvGrads<T> conv2d_vjp(const Tensor<T>&, const ConvParams<T>&,  \
                                   const Tensor<T>&, bool);                 \
  template PoolResult<T> maxpool2(const Tensor<T>&);                        \
  template Tensor<T> maxpool2_vjp(const ArgmaxMap&, const Tensor<T>&);      \
  template Tensor<T> relu(const Tensor<T>&);                                \
  template Tensor<T> relu_vjp(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> pixel_softmax(const Tensor<T>&);                       \
  template XentResult<T> pixel_softmax_xent(const Tensor<T>&, const ClassMap&);

BLDG_INSTANTIATE_LAYERS(float)
BLDG_INSTANTIATE_LAYERS(double)

#undef BLDG_INSTANTIATE_LAYERS

}  // namespace bldg
