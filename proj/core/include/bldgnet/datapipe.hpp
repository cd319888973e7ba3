#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bldgnet/tensor.hpp"

namespace bldg {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

// Implicitly closed ring in pixel coordinates (x right, y down).
struct Polygon {
  std::vector<Point> vertices;

  // Throws ValueError for fewer than 3 vertices, zero area or
  // self-intersection.
  void validate() const;
  double area() const;  // unsigned
  Point bbox_center() const;

  friend bool operator==(const Polygon&, const Polygon&) = default;
};

// Even-odd membership; points on an edge count as inside.
bool point_in_polygon(const Polygon& poly, Point p);

// Pixel (r, c) is set iff its centre (c + 0.5, r + 0.5) lies inside any
// polygon after the polygon coordinates are multiplied by `scale`.
Mask rasterize(std::span<const Polygon> polygons, std::size_t height,
               std::size_t width, double scale = 1.0);

struct WindowOrigin {
  long x = 0;
  long y = 0;
  int border_crossings = 0;

  friend bool operator==(const WindowOrigin&, const WindowOrigin&) = default;
};

struct WindowSearch {
  long window = 512;  // square window extent in pixels
  long stride = 8;
  long search_radius = 64;
  long scene_width = 0;
  long scene_height = 0;
};

// True when the polygon boundary meets the boundary of the axis-aligned
// window [x0, x0 + size] x [y0, y0 + size].
bool crosses_window_border(const Polygon& poly, double x0, double y0,
                           double size);

// Candidate origins: the window centred on the anchor's bounding-box centre
// shifted by (dx, dy) on the stride grid with |dx|, |dy| <= search_radius,
// kept only when fully inside the scene. Returns the candidate with the
// fewest border-crossing polygons; ties go to the smallest centre distance,
// then row-major order.
WindowOrigin select_tile_window(std::span<const Polygon> polygons,
                                std::size_t anchor, const WindowSearch& search);

struct Shift {
  int dx = 0;
  int dy = 0;

  friend bool operator==(const Shift&, const Shift&) = default;
};

// Sum over channels of the central-difference gradient magnitude.
Tensor<double> gradient_magnitude(const Tensor<double>& image);

// Integer (dx, dy) within +-max_shift maximising the normalised
// cross-correlation between the mask's boundary map moved by (dx, dy) and
// the image gradient magnitude, over the valid overlap. Ties go to the
// smallest |dx| + |dy|, then row-major (dy, then dx).
Shift align_footprints(const Mask& mask, const Tensor<double>& image,
                       int max_shift);

Mask shift_mask(const Mask& mask, Shift s);
Polygon translate(const Polygon& poly, double dx, double dy);

struct SceneConfig {
  int tile = 512;
  int min_buildings = 4;
  int max_buildings = 12;
  double min_size = 15.0;  // rectangle side length range, image pixels
  double max_size = 100.0;
  double max_rotation_deg = 45.0;
  double gap = 4.0;  // minimum clearance between buildings
  double margin = 4.0;  // minimum clearance to the tile edge
  double texture_noise = 0.04;
  double shadow_length = 6.0;
  int max_retries = 200;

  void validate() const;
};

struct SceneSample {
  Tensor<double> image;  // tile x tile x 3, values in [0, 1]
  Mask mask;             // (tile/2) x (tile/2)
  std::vector<Polygon> polygons;
  std::uint64_t seed = 0;
  int requested_buildings = 0;
};

SceneSample generate_scene(std::uint64_t seed, const SceneConfig& config);

}  // namespace bldg
