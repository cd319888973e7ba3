#include "bldgnet/datapipe.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <tuple>

#include "bldgnet/labels.hpp"

namespace bldg {

namespace {

double cross(Point o, Point a, Point b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool within_box(Point a, Point b, Point p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

bool on_segment(Point a, Point b, Point p) {
  return cross(a, b, p) == 0.0 && within_box(a, b, p);
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

// Closed-segment intersection, touching included.
bool segments_intersect(Point a, Point b, Point c, Point d) {
  const int d1 = sign(cross(c, d, a)), d2 = sign(cross(c, d, b));
  const int d3 = sign(cross(a, b, c)), d4 = sign(cross(a, b, d));
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  if (d1 == 0 && within_box(c, d, a)) return true;
  if (d2 == 0 && within_box(c, d, b)) return true;
  if (d3 == 0 && within_box(a, b, c)) return true;
  if (d4 == 0 && within_box(a, b, d)) return true;
  return false;
}

struct Box {
  double x0, y0, x1, y1;
};

Box bounds(const Polygon& p) {
  Box b{std::numeric_limits<double>::infinity(),
        std::numeric_limits<double>::infinity(),
        -std::numeric_limits<double>::infinity(),
        -std::numeric_limits<double>::infinity()};
  for (const Point& v : p.vertices) {
    b.x0 = std::min(b.x0, v.x);
    b.y0 = std::min(b.y0, v.y);
    b.x1 = std::max(b.x1, v.x);
    b.y1 = std::max(b.y1, v.y);
  }
  return b;
}

double signed_area(const Polygon& p) {
  double a = 0.0;
  const std::size_t n = p.vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& u = p.vertices[i];
    const Point& v = p.vertices[(i + 1) % n];
    a += u.x * v.y - v.x * u.y;
  }
  return 0.5 * a;
}

// Scanline fill of one polygon into `mask`.
void fill_polygon(const Polygon& poly, double scale, Mask& mask) {
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  const std::size_t n = poly.vertices.size();
  std::vector<Point> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = {poly.vertices[i].x * scale, poly.vertices[i].y * scale};

  Box b{v[0].x, v[0].y, v[0].x, v[0].y};
  for (const Point& p : v) {
    b.x0 = std::min(b.x0, p.x);
    b.y0 = std::min(b.y0, p.y);
    b.x1 = std::max(b.x1, p.x);
    b.y1 = std::max(b.y1, p.y);
  }
  const auto row_lo = static_cast<long>(std::max(0.0, std::ceil(b.y0 - 0.5)));
  const auto row_hi = static_cast<long>(
      std::min(static_cast<double>(h) - 1.0, std::floor(b.y1 - 0.5)));

  auto set_span = [&](std::size_t r, double xa, double xb) {
    const double lo = std::max(0.0, std::ceil(xa - 0.5));
    const double hi = std::min(static_cast<double>(w) - 1.0,
                               std::floor(xb - 0.5));
    for (auto c = static_cast<long>(lo); c <= static_cast<long>(hi); ++c)
      mask(r, static_cast<std::size_t>(c)) = 1;
  };

  std::vector<double> xs;
  for (long r = row_lo; r <= row_hi; ++r) {
    const double y = static_cast<double>(r) + 0.5;
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Point& a = v[i];
      const Point& c = v[(i + 1) % n];
      // Half-open in y so shared vertices are counted once.
      if ((a.y <= y && y < c.y) || (c.y <= y && y < a.y)) {
        xs.push_back(a.x + (y - a.y) * (c.x - a.x) / (c.y - a.y));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2)
      set_span(static_cast<std::size_t>(r), xs[k], xs[k + 1]);

    // Centres lying exactly on an edge are inside.
    for (std::size_t i = 0; i < n; ++i) {
      const Point& a = v[i];
      const Point& c = v[(i + 1) % n];
      if (y < std::min(a.y, c.y) || y > std::max(a.y, c.y)) continue;
      if (a.y == c.y) {
        set_span(static_cast<std::size_t>(r), std::min(a.x, c.x),
                 std::max(a.x, c.x));
        continue;
      }
      const double x = a.x + (y - a.y) * (c.x - a.x) / (c.y - a.y);
      const double col = x - 0.5;
      if (col == std::floor(col) && col >= 0.0 &&
          col < static_cast<double>(w) &&
          on_segment(a, c, {x, y})) {
        mask(static_cast<std::size_t>(r), static_cast<std::size_t>(col)) = 1;
      }
    }
  }
}

}  // namespace

void Polygon::validate() const {
  const std::size_t n = vertices.size();
  if (n < 3)
    throw ValueError("polygon needs at least 3 vertices, got " +
                     std::to_string(n));
  for (const Point& p : vertices)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw ValueError("polygon has a non-finite vertex");
  if (!(std::abs(signed_area(*this)) > 0.0))
    throw ValueError("polygon has zero area");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(vertices[i], vertices[(i + 1) % n], vertices[j],
                             vertices[(j + 1) % n])) {
        throw ValueError("polygon self-intersects between edges " +
                         std::to_string(i) + " and " + std::to_string(j));
      }
    }
  }
}

double Polygon::area() const { return std::abs(signed_area(*this)); }

Point Polygon::bbox_center() const {
  const Box b = bounds(*this);
  return {0.5 * (b.x0 + b.x1), 0.5 * (b.y0 + b.y1)};
}

bool point_in_polygon(const Polygon& poly, Point p) {
  const std::size_t n = poly.vertices.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = poly.vertices[i];
    const Point& b = poly.vertices[j];
    if (on_segment(a, b, p)) return true;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

Mask rasterize(std::span<const Polygon> polygons, std::size_t height,
               std::size_t width, double scale) {
  if (height == 0 || width == 0)
    throw ValueError("rasterize: extents must be positive");
  Mask mask = Mask::map(height, width);
  for (const Polygon& p : polygons) {
    p.validate();
    fill_polygon(p, scale, mask);
  }
  return mask;
}

bool crosses_window_border(const Polygon& poly, double x0, double y0,
                           double size) {
  const Box b = bounds(poly);
  const double x1 = x0 + size, y1 = y0 + size;
  if (b.x1 < x0 || b.x0 > x1 || b.y1 < y0 || b.y0 > y1) return false;
  // Fully inside (strictly) cannot touch the border.
  if (b.x0 > x0 && b.x1 < x1 && b.y0 > y0 && b.y1 < y1) return false;
  const std::array<Point, 4> corners = {
      Point{x0, y0}, Point{x1, y0}, Point{x1, y1}, Point{x0, y1}};
  const std::size_t n = poly.vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = poly.vertices[i];
    const Point& c = poly.vertices[(i + 1) % n];
    for (std::size_t k = 0; k < 4; ++k)
      if (segments_intersect(a, c, corners[k], corners[(k + 1) % 4]))
        return true;
  }
  return false;
}

WindowOrigin select_tile_window(std::span<const Polygon> polygons,
                                std::size_t anchor,
                                const WindowSearch& search) {
  if (anchor >= polygons.size())
    throw ValueError("select_tile_window: anchor index out of range");
  if (search.window <= 0 || search.stride <= 0 || search.search_radius < 0)
    throw ValueError("select_tile_window: window and stride must be positive, "
                     "radius non-negative");
  if (search.window > search.scene_width || search.window > search.scene_height)
    throw ValueError("select_tile_window: window larger than the scene");

  const Point centre = polygons[anchor].bbox_center();
  const double half = static_cast<double>(search.window) / 2.0;
  const long base_x = std::lround(centre.x - half);
  const long base_y = std::lround(centre.y - half);
  const long steps = search.search_radius / search.stride;

  bool found = false;
  WindowOrigin best;
  double best_dist = 0.0;
  for (long sy = -steps; sy <= steps; ++sy) {
    for (long sx = -steps; sx <= steps; ++sx) {
      const long ox = base_x + sx * search.stride;
      const long oy = base_y + sy * search.stride;
      if (ox < 0 || oy < 0 || ox + search.window > search.scene_width ||
          oy + search.window > search.scene_height)
        continue;
      int count = 0;
      for (const Polygon& p : polygons)
        if (crosses_window_border(p, static_cast<double>(ox),
                                  static_cast<double>(oy),
                                  static_cast<double>(search.window)))
          ++count;
      const double ddx = static_cast<double>(ox) + half - centre.x;
      const double ddy = static_cast<double>(oy) + half - centre.y;
      const double dist = ddx * ddx + ddy * ddy;
      // Iteration is row-major, so strict comparisons keep the earliest.
      if (!found || count < best.border_crossings ||
          (count == best.border_crossings && dist < best_dist)) {
        found = true;
        best = {ox, oy, count};
        best_dist = dist;
      }
    }
  }
  if (!found)
    throw ValueError("select_tile_window: no candidate window fits inside the "
                     "scene");
  return best;
}

Tensor<double> gradient_magnitude(const Tensor<double>& image) {
  if (image.rank() != 3)
    throw ShapeError("gradient_magnitude: image must be H x W x C");
  const std::size_t h = image.dim(0), w = image.dim(1), ch = image.dim(2);
  Tensor<double> g = Tensor<double>::map(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t rp = std::min(r + 1, h - 1), rm = r ? r - 1 : 0;
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t cp = std::min(c + 1, w - 1), cm = c ? c - 1 : 0;
      double sum = 0.0;
      for (std::size_t k = 0; k < ch; ++k) {
        const double gx = 0.5 * (image(r, cp, k) - image(r, cm, k));
        const double gy = 0.5 * (image(rp, c, k) - image(rm, c, k));
        sum += std::sqrt(gx * gx + gy * gy);
      }
      g(r, c) = sum;
    }
  }
  return g;
}

Shift align_footprints(const Mask& mask, const Tensor<double>& image,
                       int max_shift) {
  if (image.rank() != 3 || mask.rank() != 2 || mask.dim(0) != image.dim(0) ||
      mask.dim(1) != image.dim(1)) {
    throw ShapeError("align_footprints: mask " + shape_string(mask.shape()) +
                     " and image " + shape_string(image.shape()) +
                     " are not co-extensive");
  }
  const long h = static_cast<long>(mask.dim(0));
  const long w = static_cast<long>(mask.dim(1));
  if (max_shift < 0 || 2L * max_shift >= std::min(h, w)) {
    throw ValueError("align_footprints: max_shift " +
                     std::to_string(max_shift) +
                     " must be non-negative and below half the extent");
  }
  const Tensor<double> grad = gradient_magnitude(image);
  const Mask edges = boundary_pixels(mask);

  std::vector<Shift> order;
  for (int dy = -max_shift; dy <= max_shift; ++dy)
    for (int dx = -max_shift; dx <= max_shift; ++dx) order.push_back({dx, dy});
  std::stable_sort(order.begin(), order.end(), [](Shift a, Shift b) {
    return std::abs(a.dx) + std::abs(a.dy) < std::abs(b.dx) + std::abs(b.dy);
  });

  Shift best{0, 0};
  double best_score = -std::numeric_limits<double>::infinity();
  for (const Shift s : order) {
    const long y0 = std::max(0L, static_cast<long>(s.dy));
    const long y1 = std::min(h, h + s.dy);
    const long x0 = std::max(0L, static_cast<long>(s.dx));
    const long x1 = std::min(w, w + s.dx);
    double n = 0, sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (long y = y0; y < y1; ++y) {
      for (long x = x0; x < x1; ++x) {
        const double a = edges(static_cast<std::size_t>(y - s.dy),
                               static_cast<std::size_t>(x - s.dx));
        const double b = grad(static_cast<std::size_t>(y),
                              static_cast<std::size_t>(x));
        n += 1;
        sa += a;
        sb += b;
        saa += a * a;
        sbb += b * b;
        sab += a * b;
      }
    }
    const double var_a = saa - sa * sa / n;
    const double var_b = sbb - sb * sb / n;
    double score = 0.0;
    if (var_a > 0.0 && var_b > 0.0)
      score = (sab - sa * sb / n) / std::sqrt(var_a * var_b);
    if (score > best_score) {
      best_score = score;
      best = s;
    }
  }
  return best;
}

Mask shift_mask(const Mask& mask, Shift s) {
  const long h = static_cast<long>(mask.dim(0));
  const long w = static_cast<long>(mask.dim(1));
  Mask out(mask.shape());
  for (long y = 0; y < h; ++y) {
    const long sy = y - s.dy;
    if (sy < 0 || sy >= h) continue;
    for (long x = 0; x < w; ++x) {
      const long sx = x - s.dx;
      if (sx < 0 || sx >= w) continue;
      out(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
          mask(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
    }
  }
  return out;
}

Polygon translate(const Polygon& poly, double dx, double dy) {
  Polygon out = poly;
  for (Point& p : out.vertices) {
    p.x += dx;
    p.y += dy;
  }
  return out;
}

void SceneConfig::validate() const {
  if (tile <= 0 || tile % 16 != 0)
    throw ValueError("scene tile must be a positive multiple of 16, got " +
                     std::to_string(tile));
  if (min_buildings < 0 || max_buildings < min_buildings)
    throw ValueError("scene building count range is invalid");
  if (!(min_size > 0.0) || max_size < min_size)
    throw ValueError("scene building size range is invalid");
  if (max_size + 2.0 * margin >= tile)
    throw ValueError("scene buildings cannot fit inside the tile");
  if (max_retries < 1) throw ValueError("scene max_retries must be >= 1");
}

namespace {

// Corners of a w x h rectangle centred at (cx, cy), rotated by `angle`.
Polygon oriented_rect(double cx, double cy, double w, double h,
                      double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Polygon p;
  const std::array<std::pair<double, double>, 4> local = {
      std::pair{-w / 2, -h / 2}, std::pair{w / 2, -h / 2},
      std::pair{w / 2, h / 2}, std::pair{-w / 2, h / 2}};
  for (auto [u, v] : local) p.vertices.push_back({cx + c * u - s * v, cy + s * u + c * v});
  return p;
}

// Separating-axis test for convex polygons, with `gap` of clearance.
bool convex_overlap(const Polygon& a, const Polygon& b, double gap) {
  for (const Polygon* poly : {&a, &b}) {
    const std::size_t n = poly->vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point& p = poly->vertices[i];
      const Point& q = poly->vertices[(i + 1) % n];
      double nx = q.y - p.y, ny = p.x - q.x;
      const double len = std::hypot(nx, ny);
      nx /= len;
      ny /= len;
      double amin = std::numeric_limits<double>::infinity(), amax = -amin;
      double bmin = amin, bmax = -amin;
      for (const Point& v : a.vertices) {
        const double d = v.x * nx + v.y * ny;
        amin = std::min(amin, d);
        amax = std::max(amax, d);
      }
      for (const Point& v : b.vertices) {
        const double d = v.x * nx + v.y * ny;
        bmin = std::min(bmin, d);
        bmax = std::max(bmax, d);
      }
      if (amax + gap <= bmin || bmax + gap <= amin) return false;
    }
  }
  return true;
}

// Smooth value noise: bilinear interpolation of a coarse random lattice.
std::vector<double> value_noise(std::mt19937_64& rng, int size, int cell) {
  const int n = size / cell + 2;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> lattice(static_cast<std::size_t>(n * n));
  for (auto& v : lattice) v = u(rng);
  std::vector<double> out(static_cast<std::size_t>(size * size));
  for (int y = 0; y < size; ++y) {
    const double fy = static_cast<double>(y) / cell;
    const int iy = static_cast<int>(fy);
    const double ty = fy - iy;
    for (int x = 0; x < size; ++x) {
      const double fx = static_cast<double>(x) / cell;
      const int ix = static_cast<int>(fx);
      const double tx = fx - ix;
      auto at = [&](int yy, int xx) {
        return lattice[static_cast<std::size_t>(yy * n + xx)];
      };
      const double top = at(iy, ix) * (1 - tx) + at(iy, ix + 1) * tx;
      const double bot = at(iy + 1, ix) * (1 - tx) + at(iy + 1, ix + 1) * tx;
      out[static_cast<std::size_t>(y * size + x)] = top * (1 - ty) + bot * ty;
    }
  }
  return out;
}

}  // namespace

SceneSample generate_scene(std::uint64_t seed, const SceneConfig& config) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SceneSample sample;
  sample.seed = seed;
  const int tile = config.tile;
  sample.requested_buildings = static_cast<int>(
      std::uniform_int_distribution<int>(config.min_buildings,
                                         config.max_buildings)(rng));

  // Placement.
  const double max_angle = config.max_rotation_deg * std::numbers::pi / 180.0;
  for (int b = 0; b < sample.requested_buildings; ++b) {
    for (int attempt = 0; attempt < config.max_retries; ++attempt) {
      const double w = uniform(config.min_size, config.max_size);
      const double h = uniform(config.min_size, config.max_size);
      const double angle = uniform(-max_angle, max_angle);
      const double cx = uniform(0.0, tile), cy = uniform(0.0, tile);
      Polygon rect = oriented_rect(cx, cy, w, h, angle);
      const Box box = bounds(rect);
      if (box.x0 < config.margin || box.y0 < config.margin ||
          box.x1 > tile - config.margin || box.y1 > tile - config.margin)
        continue;
      const bool clash = std::any_of(
          sample.polygons.begin(), sample.polygons.end(),
          [&](const Polygon& o) { return convex_overlap(rect, o, config.gap); });
      if (clash) continue;
      sample.polygons.push_back(std::move(rect));
      break;
    }
  }

  // Background: two octaves of smooth noise around a muted ground colour.
  const auto size = static_cast<std::size_t>(tile);
  sample.image = Tensor<double>::hwc(size, size, 3);
  const std::vector<double> coarse = value_noise(rng, tile, 32);
  const std::vector<double> fine = value_noise(rng, tile, 8);
  const std::array<double, 3> ground = {uniform(0.28, 0.38),
                                        uniform(0.30, 0.40),
                                        uniform(0.22, 0.32)};
  const std::array<double, 3> vegetation = {0.16, 0.30, 0.14};
  std::uniform_real_distribution<double> grain(-config.texture_noise,
                                               config.texture_noise);
  for (std::size_t i = 0; i < size * size; ++i) {
    const double green = std::clamp(coarse[i] * 1.5, 0.0, 1.0);
    for (std::size_t k = 0; k < 3; ++k) {
      const double base = ground[k] * (1 - green) + vegetation[k] * green;
      sample.image[i * 3 + k] = base * (1.0 + 0.15 * fine[i]) + grain(rng);
    }
  }

  // Shadows fall down-right of each building (sun from the upper left).
  for (const Polygon& p : sample.polygons) {
    const Polygon shadow =
        translate(p, config.shadow_length, config.shadow_length);
    const Mask sm = rasterize(std::span(&shadow, 1), size, size);
    for (std::size_t i = 0; i < size * size; ++i)
      if (sm[i])
        for (std::size_t k = 0; k < 3; ++k) sample.image[i * 3 + k] *= 0.45;
  }

  // Roofs: per-building albedo and tint, split into two faces with
  // slightly different brightness, plus grain.
  for (const Polygon& p : sample.polygons) {
    const double albedo = uniform(0.55, 0.9);
    const std::array<double, 3> tint = {uniform(0.85, 1.1), uniform(0.85, 1.0),
                                        uniform(0.8, 1.0)};
    const double face = uniform(0.8, 0.95);
    const Point c = p.bbox_center();
    const double ax = p.vertices[1].x - p.vertices[0].x;
    const double ay = p.vertices[1].y - p.vertices[0].y;
    const Mask bm = rasterize(std::span(&p, 1), size, size);
    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t col = 0; col < size; ++col) {
        if (!bm(r, col)) continue;
        const double side = (static_cast<double>(col) + 0.5 - c.x) * ay -
                            (static_cast<double>(r) + 0.5 - c.y) * ax;
        const double shade = side > 0 ? 1.0 : face;
        for (std::size_t k = 0; k < 3; ++k)
          sample.image(r, col, k) = albedo * tint[k] * shade + grain(rng);
      }
    }
  }
  for (auto& v : sample.image.values()) v = std::clamp(v, 0.0, 1.0);

  sample.mask = rasterize(sample.polygons, size / 2, size / 2, 0.5);
  return sample;
}

}  // namespace bldg
