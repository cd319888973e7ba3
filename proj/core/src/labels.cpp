#include "bldgnet/labels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace bldg {

namespace {

constexpr std::int64_t kUnreached = std::numeric_limits<std::int64_t>::max();

void require_binary(const Mask& mask, const char* what) {
  if (mask.rank() != 2) {
    throw ShapeError(std::string(what) + ": mask must be H x W, got " +
                     shape_string(mask.shape()));
  }
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 1) {
      throw ValueError(std::string(what) + ": mask value " +
                       std::to_string(mask[i]) + " at index " +
                       std::to_string(i) + " is not 0/1");
    }
  }
}

// Exact rational a/b with b > 0.
struct Ratio {
  std::int64_t num;
  std::int64_t den;
};

bool less_equal(const Ratio& a, const Ratio& b) {
  return a.num * b.den <= b.num * a.den;
}

// Lower envelope of the parabolas f[q] + (p - q)^2 over the finite entries of
// `f`, evaluated at every integer p. Intersections are kept as exact
// rationals so the result is the true minimum.
void envelope_1d(const std::vector<std::int64_t>& f,
                 std::vector<std::int64_t>& out, std::vector<std::size_t>& v,
                 std::vector<Ratio>& z) {
  const std::size_t n = f.size();
  std::size_t k = 0;
  bool any = false;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kUnreached) continue;
    if (!any) {
      v[0] = q;
      any = true;
      continue;
    }
    const auto qi = static_cast<std::int64_t>(q);
    for (;;) {
      const auto vi = static_cast<std::int64_t>(v[k]);
      const Ratio s{(f[q] + qi * qi) - (f[v[k]] + vi * vi), 2 * (qi - vi)};
      if (k > 0 && less_equal(s, z[k])) {
        --k;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      break;
    }
  }
  if (!any) {
    std::fill(out.begin(), out.end(), kUnreached);
    return;
  }
  const std::size_t last = k;
  k = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const auto pi = static_cast<std::int64_t>(p);
    // Advance while the next breakpoint lies strictly left of p.
    while (k < last && z[k + 1].num < pi * z[k + 1].den) ++k;
    const auto d = pi - static_cast<std::int64_t>(v[k]);
    out[p] = f[v[k]] + d * d;
  }
}

}  // namespace

Mask boundary_pixels(const Mask& mask) {
  require_binary(mask, "boundary_pixels");
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  Mask b = Mask::map(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (!mask(r, c)) continue;
      const bool edge = r == 0 || c == 0 || r + 1 == h || c + 1 == w;
      if (edge || !mask(r - 1, c) || !mask(r + 1, c) || !mask(r, c - 1) ||
          !mask(r, c + 1)) {
        b(r, c) = 1;
      }
    }
  }
  return b;
}

Tensor<std::int64_t> squared_distance_transform(const Mask& sites) {
  require_binary(sites, "squared_distance_transform");
  const std::size_t h = sites.dim(0), w = sites.dim(1);
  Tensor<std::int64_t> dist({h, w}, kUnreached);
  if (std::none_of(sites.values().begin(), sites.values().end(),
                   [](std::uint8_t v) { return v != 0; })) {
    dist.fill(-1);
    return dist;
  }

  const std::size_t n = std::max(h, w);
  std::vector<std::int64_t> f(n), out(n);
  std::vector<std::size_t> v(n);
  std::vector<Ratio> z(n + 1);

  // Pass 1: along columns.
  f.resize(h);
  out.resize(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) f[r] = sites(r, c) ? 0 : kUnreached;
    envelope_1d(f, out, v, z);
    for (std::size_t r = 0; r < h; ++r) dist(r, c) = out[r];
  }
  // Pass 2: along rows, over the column-wise squared distances.
  f.resize(w);
  out.resize(w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) f[c] = dist(r, c);
    envelope_1d(f, out, v, z);
    for (std::size_t c = 0; c < w; ++c) dist(r, c) = out[c];
  }
  return dist;
}

RealMap signed_distance_transform(const Mask& mask) {
  const Mask boundary = boundary_pixels(mask);
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  RealMap out = RealMap::map(h, w, static_cast<double>(kMinDistanceClass));
  const Tensor<std::int64_t> d2 = squared_distance_transform(boundary);
  if (d2.size() > 0 && d2[0] < 0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = std::sqrt(static_cast<double>(d2[i]));
    if (boundary[i]) {
      out[i] = 0.0;
    } else {
      out[i] = mask[i] ? d : -d;
    }
  }
  return out;
}

ClassMap quantize(const RealMap& values) {
  ClassMap q(values.shape());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (std::isnan(v)) {
      throw ValueError("quantize: NaN at index " + std::to_string(i));
    }
    // std::round is half-away-from-zero.
    const double r = std::clamp(std::round(v),
                                static_cast<double>(kMinDistanceClass),
                                static_cast<double>(kMaxDistanceClass));
    q[i] = static_cast<std::int32_t>(r);
  }
  return q;
}

ClassMap to_class_indices(const ClassMap& quantized) {
  ClassMap out(quantized.shape());
  for (std::size_t i = 0; i < quantized.size(); ++i) {
    const std::int32_t v = quantized[i];
    if (v < kMinDistanceClass || v > kMaxDistanceClass) {
      throw ValueError("to_class_indices: value " + std::to_string(v) +
                       " outside [-64, 63]");
    }
    out[i] = v - kMinDistanceClass;
  }
  return out;
}

ClassMap from_class_indices(const ClassMap& indices) {
  ClassMap out(indices.shape());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::int32_t k = indices[i];
    if (k < 0 || k >= kClassCount) {
      throw ValueError("from_class_indices: index " + std::to_string(k) +
                       " outside [0, 127]");
    }
    out[i] = k + kMinDistanceClass;
  }
  return out;
}

LabelField make_label_field(const Mask& mask) {
  LabelField f;
  f.values = signed_distance_transform(mask);
  f.classes = quantize(f.values);
  return f;
}

template <typename T>
RealMap expectation_decode(const Tensor<T>& probs) {
  if (probs.rank() != 3 || probs.dim(2) != kClassCount) {
    throw ShapeError("expectation_decode: expected H x W x 128, got " +
                     shape_string(probs.shape()));
  }
  const std::size_t h = probs.dim(0), w = probs.dim(1);
  RealMap out = RealMap::map(h, w);
  for (std::size_t p = 0; p < h * w; ++p) {
    const T* q = probs.data() + p * kClassCount;
    double sum = 0.0, value = 0.0;
    for (int k = 0; k < kClassCount; ++k) {
      const double pk = static_cast<double>(q[k]);
      if (!(pk >= 0.0)) {
        throw ValueError("expectation_decode: negative or NaN probability at "
                         "pixel " + std::to_string(p));
      }
      sum += pk;
      value += pk * static_cast<double>(k + kMinDistanceClass);
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ValueError("expectation_decode: probabilities at pixel " +
                       std::to_string(p) + " sum to " + std::to_string(sum));
    }
    out[p] = value;
  }
  return out;
}

template RealMap expectation_decode(const Tensor<float>&);
template RealMap expectation_decode(const Tensor<double>&);

Readout threshold_readout(const RealMap& values) {
  Readout r{Mask(values.shape()), Mask(values.shape())};
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    r.building[i] = v > 0.5 ? 1 : 0;
    r.boundary[i] = (v >= -0.5 && v <= 0.5) ? 1 : 0;
  }
  return r;
}

}  // namespace bldg
