#include <doctest.h>

#include <cmath>
#include <random>

#include "bldgnet/datapipe.hpp"
#include "bldgnet/labels.hpp"
#include "oracles.hpp"

using namespace bldg;

namespace {

Polygon rect(double x0, double y0, double x1, double y1) {
  return Polygon{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}};
}

// Star-shaped polygon: jittered angles keep every angular gap below pi, so
// the outline cannot cross itself.
Polygon random_star(std::mt19937_64& rng, double cx, double cy, double rmax) {
  const int n = std::uniform_int_distribution<int>(3, 12)(rng);
  std::uniform_real_distribution<double> jitter(0, 0.8), radius(0.3 * rmax, rmax);
  Polygon p;
  for (int i = 0; i < n; ++i) {
    const double a = 2 * M_PI * (i + jitter(rng)) / n;
    const double r = radius(rng);
    p.vertices.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
  }
  return p;
}

// Synthetic image whose edges come from the mask: building pixels bright.
Tensor<double> edge_image(const Mask& mask) {
  Tensor<double> img = Tensor<double>::hwc(mask.dim(0), mask.dim(1), 3, 0.2);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i])
      for (std::size_t k = 0; k < 3; ++k) img[i * 3 + k] = 0.8;
  return img;
}

Mask blocks_mask(std::size_t n, std::mt19937_64& rng) {
  Mask m = Mask::map(n, n);
  std::uniform_int_distribution<std::size_t> pos(12, n - 24), len(5, 10);
  for (int b = 0; b < 3; ++b) {
    const std::size_t r = pos(rng), c = pos(rng), h = len(rng), w = len(rng);
    for (std::size_t y = r; y < r + h; ++y)
      for (std::size_t x = c; x < c + w; ++x) m(y, x) = 1;
  }
  return m;
}

}  // namespace

TEST_CASE("rasterize examples") {
  const std::vector<Polygon> square{rect(0, 0, 2, 2)};
  Mask want = Mask::map(4, 4);
  want(0, 0) = want(0, 1) = want(1, 0) = want(1, 1) = 1;
  CHECK(rasterize(square, 4, 4) == want);
  CHECK(rasterize(std::vector<Polygon>{}, 3, 5) == Mask::map(3, 5));

  const std::vector<Polygon> tri{{{{0, 0}, {4, 0}, {0, 4}}}};
  CHECK(rasterize(tri, 4, 4) == oracle::rasterize(tri, 4, 4));

  // Centres exactly on edges count as inside.
  const std::vector<Polygon> edges{rect(0.5, 0.5, 2.5, 2.5)};
  const Mask e = rasterize(edges, 4, 4);
  CHECK(std::count(e.storage().begin(), e.storage().end(), 1) == 9);
  CHECK(e(2, 2) == 1);
  CHECK(e(3, 3) == 0);

  CHECK(rasterize(square, 2, 2, 0.5)(0, 0) == 1);
  CHECK(rasterize(square, 2, 2, 0.5)(1, 1) == 0);
}

TEST_CASE("rasterize agrees with per-pixel point tests") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Polygon> polys;
    const int n = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < n; ++i) {
      std::uniform_real_distribution<double> centre(4, 28);
      polys.push_back(random_star(rng, centre(rng), centre(rng), 9));
    }
    CHECK(rasterize(polys, 32, 32) == oracle::rasterize(polys, 32, 32));
    CHECK(rasterize(polys, 16, 16, 0.5) == oracle::rasterize(polys, 16, 16, 0.5));
    for (const Polygon& p : polys)
      for (int k = 0; k < 20; ++k) {
        std::uniform_real_distribution<double> u(0, 32);
        const Point q{u(rng), u(rng)};
        CHECK(point_in_polygon(p, q) == oracle::inside(p, q));
      }
  }
}

TEST_CASE("polygon validation") {
  CHECK_NOTHROW(rect(0, 0, 1, 1).validate());
  CHECK(rect(0, 0, 3, 2).area() == 6.0);
  CHECK(rect(0, 0, 4, 2).bbox_center() == Point{2, 1});
  CHECK_THROWS_AS((Polygon{{{0, 0}, {1, 0}}}).validate(), ValueError);
  CHECK_THROWS_AS((Polygon{{{0, 0}, {1, 0}, {2, 0}}}).validate(), ValueError);
  const Polygon bowtie{{{0, 0}, {2, 2}, {2, 0}, {0, 2}}};
  CHECK_THROWS_AS(bowtie.validate(), ValueError);
  CHECK_THROWS_AS(rasterize(std::vector<Polygon>{bowtie}, 4, 4), ValueError);
  CHECK(translate(rect(0, 0, 1, 1), 2, 3) == rect(2, 3, 3, 4));
}

TEST_CASE("tile window selection") {
  WindowSearch search;
  search.window = 64;
  search.stride = 4;
  search.search_radius = 16;
  search.scene_width = 400;
  search.scene_height = 400;

  const std::vector<Polygon> lone{rect(190, 190, 210, 210), rect(20, 20, 30, 30)};
  const WindowOrigin w = select_tile_window(lone, 0, search);
  CHECK(w.border_crossings == 0);
  CHECK(w.x < 190);
  CHECK(w.x + 64 > 210);
  CHECK(w.y < 190);
  CHECK(w.y + 64 > 210);

  search.search_radius = 0;
  CHECK(select_tile_window(lone, 0, search) == WindowOrigin{168, 168, 0});

  // Edge-to-edge lattice: every candidate window crosses some building.
  std::mt19937_64 rng(62);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Polygon> lattice;
    const double pitch = 14 + static_cast<double>(rng() % 6);
    for (double y = 100; y < 300; y += pitch)
      for (double x = 100; x < 300; x += pitch)
        lattice.push_back(rect(x, y, x + pitch, y + pitch));
    search.search_radius = 20;
    const std::size_t anchor = lattice.size() / 2;
    const WindowOrigin got = select_tile_window(lattice, anchor, search);

    const Point c = lattice[anchor].bbox_center();
    const long bx = std::lround(c.x - 32), by = std::lround(c.y - 32);
    int best = std::numeric_limits<int>::max();
    for (long sy = -5; sy <= 5; ++sy)
      for (long sx = -5; sx <= 5; ++sx) {
        const double ox = static_cast<double>(bx + 4 * sx), oy = static_cast<double>(by + 4 * sy);
        int count = 0;
        for (const Polygon& p : lattice) {
          const double x0 = p.vertices[0].x, y0 = p.vertices[0].y;
          const double x1 = p.vertices[2].x, y1 = p.vertices[2].y;
          const bool overlaps = x1 >= ox && x0 <= ox + 64 && y1 >= oy && y0 <= oy + 64;
          const bool strictly_inside = x0 > ox && x1 < ox + 64 && y0 > oy && y1 < oy + 64;
          count += overlaps && !strictly_inside;
        }
        best = std::min(best, count);
      }
    CHECK(best >= 1);
    CHECK(got.border_crossings == best);
  }

  search.scene_width = 32;
  CHECK_THROWS_AS(select_tile_window(lone, 0, search), ValueError);
  search.scene_width = 400;
  CHECK_THROWS_AS(select_tile_window(lone, 5, search), ValueError);
}

TEST_CASE("footprint alignment") {
  std::mt19937_64 rng(63);
  const Mask mask = blocks_mask(64, rng);
  const Tensor<double> image = edge_image(mask);
  CHECK(align_footprints(mask, image, 6) == Shift{0, 0});

  const Mask moved = shift_mask(mask, {3, -2});
  CHECK(moved(20, 20) == mask(22, 17));
  CHECK(align_footprints(moved, image, 6) == Shift{-3, 2});

  for (int trial = 0; trial < 10; ++trial) {
    const Shift planted{static_cast<int>(rng() % 11) - 5, static_cast<int>(rng() % 11) - 5};
    const Mask m = blocks_mask(64, rng);
    const Shift back = align_footprints(shift_mask(m, planted), edge_image(m), 6);
    CHECK(back == Shift{-planted.dx, -planted.dy});
  }

  CHECK(align_footprints(mask, Tensor<double>::hwc(64, 64, 3, 0.5), 4) == Shift{0, 0});
  CHECK_THROWS_AS(align_footprints(mask, image, 32), ValueError);
  CHECK_THROWS_AS(align_footprints(mask, Tensor<double>::hwc(32, 64, 3), 4), ShapeError);
}

TEST_CASE("gradient magnitude uses central differences") {
  Tensor<double> ramp = Tensor<double>::hwc(5, 5, 2);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c) ramp(r, c, 0) = ramp(r, c, 1) = 3.0 * c;
  const Tensor<double> g = gradient_magnitude(ramp);
  CHECK(g(2, 2) == doctest::Approx(6.0));
}

TEST_CASE("scene generation") {
  SceneConfig cfg;
  cfg.tile = 128;
  cfg.min_buildings = 2;
  cfg.max_buildings = 5;
  cfg.min_size = 12;
  cfg.max_size = 36;
  const SceneSample a = generate_scene(71, cfg);
  const SceneSample b = generate_scene(71, cfg);
  CHECK(a.image == b.image);
  CHECK(a.mask == b.mask);
  CHECK(a.polygons == b.polygons);
  CHECK_FALSE(generate_scene(72, cfg).image == a.image);
  CHECK(a.image.shape() == Shape{128, 128, 3});
  CHECK(a.mask.shape() == Shape{64, 64});
  for (double v : a.image.values()) CHECK((v >= 0.0 && v <= 1.0));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SceneSample s = generate_scene(seed, cfg);
    CHECK(s.seed == seed);
    CHECK(s.requested_buildings >= cfg.min_buildings);
    CHECK(s.requested_buildings <= cfg.max_buildings);
    CHECK(static_cast<int>(s.polygons.size()) <= s.requested_buildings);
    CHECK(s.mask == oracle::rasterize(s.polygons, 64, 64, 0.5));
    double area = 0.0;
    for (const Polygon& p : s.polygons) {
      CHECK_NOTHROW(p.validate());
      area += p.area();
      for (const Point& v : p.vertices) {
        CHECK(v.x >= cfg.margin - 1e-9);
        CHECK(v.x <= cfg.tile - cfg.margin + 1e-9);
      }
    }
    const double n = static_cast<double>(s.polygons.size());
    const double tile_area = static_cast<double>(cfg.tile * cfg.tile);
    CHECK(area >= n * cfg.min_size * cfg.min_size - 1e-6);
    CHECK(area <= n * cfg.max_size * cfg.max_size + 1e-6);
    // Mask fraction tracks the polygon fraction up to one half-resolution
    // pixel ring per building.
    const double frac = static_cast<double>(std::count(s.mask.storage().begin(), s.mask.storage().end(), 1)) /
                        static_cast<double>(s.mask.size());
    CHECK(std::abs(frac - area / tile_area) <= n * 4 * (cfg.max_size / 2 + 1) / (64.0 * 64.0));
  }

  SceneConfig empty = cfg;
  empty.min_buildings = empty.max_buildings = 0;
  const SceneSample blank = generate_scene(5, empty);
  CHECK(blank.polygons.empty());
  CHECK(blank.mask == Mask::map(64, 64));
  double lo = 1.0, hi = 0.0;
  for (double v : blank.image.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi > lo);

  SceneConfig bad = cfg;
  bad.tile = 100;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  CHECK_THROWS_AS(generate_scene(1, bad), ValueError);
}
