#pragma once

#include <cstdint>

#include "bldgnet/tensor.hpp"

namespace bldg {

inline constexpr int kClassCount = 128;
inline constexpr int kMinDistanceClass = -64;
inline constexpr int kMaxDistanceClass = 63;

// Signed distances in output-pixel units together with their quantized
// classes in [-64, 63].
struct LabelField {
  RealMap values;
  ClassMap classes;
};

// Building pixels that touch a non-building pixel (4-adjacency) or the image
// edge.
Mask boundary_pixels(const Mask& mask);

// Exact Euclidean distance to the nearest boundary pixel: positive on
// interior building pixels, zero on the boundary, negative outside. A mask
// without boundary pixels maps to -64 everywhere.
RealMap signed_distance_transform(const Mask& mask);

// Squared Euclidean distance from every pixel to the nearest set pixel of
// `sites` (two separable lower-envelope passes). Entries are -1 when `sites`
// is empty.
Tensor<std::int64_t> squared_distance_transform(const Mask& sites);

// Round half away from zero, then clamp to [-64, 63].
ClassMap quantize(const RealMap& values);

// Shift quantized distances [-64, 63] to class indices [0, 127] and back.
ClassMap to_class_indices(const ClassMap& quantized);
ClassMap from_class_indices(const ClassMap& indices);

LabelField make_label_field(const Mask& mask);

// Per-pixel probability-weighted sum of class values (k - 64).
template <typename T>
RealMap expectation_decode(const Tensor<T>& probs);

struct Readout {
  Mask building;  // values > 0.5
  Mask boundary;  // -0.5 <= values <= 0.5
};

Readout threshold_readout(const RealMap& values);

}  // namespace bldg
