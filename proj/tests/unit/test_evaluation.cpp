#include <doctest.h>

#include <map>
#include <random>

#include "bldgnet/evaluation.hpp"
#include "oracles.hpp"

using namespace bldg;

namespace {

Mask from_rows(const std::vector<std::string>& rows) {
  Mask m = Mask::map(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c] == '#';
  return m;
}

}  // namespace

TEST_CASE("pixel precision and recall") {
  const Mask gt = from_rows({"####", "####", "....", "...."});
  PixelScores s = precision_recall(gt, gt);
  CHECK(s.precision == 1.0);
  CHECK(s.recall == 1.0);

  s = precision_recall(from_rows({"####", "....", "....", "...."}), gt);
  CHECK(s.precision == 1.0);
  CHECK(s.recall == 0.5);

  // 6 predicted, 8 true, 4 shared.
  s = precision_recall(from_rows({"..##", "..##", "..##", "...."}), gt);
  CHECK(s.precision == doctest::Approx(4.0 / 6));
  CHECK(s.recall == doctest::Approx(4.0 / 8));

  const Mask none = Mask::map(4, 4);
  s = precision_recall(none, none);
  CHECK(s.precision == 1.0);
  CHECK(s.recall == 1.0);
  s = precision_recall(none, gt);
  CHECK(s.precision == 0.0);
  CHECK(s.recall == 0.0);
  s = precision_recall(gt, none);
  CHECK(s.precision == 0.0);
  CHECK(s.recall == 1.0);

  std::mt19937_64 rng(81);
  for (int trial = 0; trial < 50; ++trial) {
    const Mask a = oracle::random_mask(9, 7, 0.4, rng), b = oracle::random_mask(9, 7, 0.4, rng);
    const PixelScores ab = precision_recall(a, b), ba = precision_recall(b, a);
    CHECK(ab.precision == ba.recall);
    CHECK(ab.recall == ba.precision);
  }
  CHECK_THROWS_AS(precision_recall(gt, Mask::map(4, 5)), ShapeError);
}

TEST_CASE("connected components match union-find") {
  std::mt19937_64 rng(82);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t h = 1 + rng() % 64, w = 1 + rng() % 64;
    const Mask m = oracle::random_mask(h, w, 0.45, rng);
    for (int conn : {4, 8}) {
      const Components got = label_components(m, conn);
      const Tensor<std::int32_t> want = oracle::components(m, conn);
      // Compare as partitions: the label correspondence must be a bijection.
      std::map<int, int> fwd, bwd;
      bool same = true;
      for (std::size_t i = 0; i < m.size(); ++i) {
        if ((got.labels[i] == 0) != (want[i] == 0)) same = false;
        if (!want[i]) continue;
        auto [f, fnew] = fwd.emplace(got.labels[i], want[i]);
        auto [b, bnew] = bwd.emplace(want[i], got.labels[i]);
        if (f->second != want[i] || b->second != got.labels[i]) same = false;
      }
      CHECK(same);
      CHECK(got.count == static_cast<int>(fwd.size()));
    }
  }
  const Mask diag = from_rows({"#.", ".#"});
  CHECK(label_components(diag, 8).count == 1);
  CHECK(label_components(diag, 4).count == 2);
  CHECK_THROWS_AS(label_components(diag, 6), ValueError);
}

TEST_CASE("building detection by mass centre") {
  const Mask gt = from_rows({"..........", ".######...", ".######...", ".######...",
                             ".######...", "..........", "..........", "..........",
                             "..........", ".........."});
  DetectionOptions strict;
  strict.min_area = 0;

  Detection d = detect_score(from_rows({"..........", "..........", "..###.....", "..###.....",
                                        "..........", "..........", "..........", "..........",
                                        "..........", ".........."}),
                             gt, strict);
  CHECK(d.true_detections == 1);
  CHECK(d.false_alarms == 0);

  d = detect_score(from_rows({"..........", "..........", "..........", "..........",
                              "..........", "..........", "......###.", "......###.",
                              "..........", ".........."}),
                   gt, strict);
  CHECK(d.true_detections == 0);
  CHECK(d.false_alarms == 1);

  // A U around a small building: the mass centre lands in the empty middle.
  const Mask small = from_rows({"..........", "..........", "..........", "...##.....",
                                "...##.....", "..........", "..........", "..........",
                                "..........", ".........."});
  const Mask u = from_rows({"..........", ".######...", ".#....#...", ".#....#...",
                            ".#....#...", ".#....#...", "..........", "..........",
                            "..........", ".........."});
  // Centre of the U computed by hand: rows 1..5, columns 1..6.
  double sr = 0, sc = 0, n = 0;
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c < 10; ++c)
      if (u(r, c)) {
        sr += static_cast<double>(r);
        sc += static_cast<double>(c);
        ++n;
      }
  const auto cr = static_cast<std::size_t>(std::lround(sr / n));
  const auto cc = static_cast<std::size_t>(std::lround(sc / n));
  CHECK(small(cr, cc) == 0);
  d = detect_score(u, small, strict);
  CHECK(d.true_detections == 0);
  CHECK(d.false_alarms == 1);

  // Two blobs in one building each count; a 2-pixel speck is filtered.
  const Mask two = from_rows({"..........", ".##..##...", ".##..##...", "..........",
                              "..........", "..........", "..........", "........#.",
                              "........#.", ".........."});
  d = detect_score(two, gt);
  CHECK(d.true_detections == 2);
  CHECK(d.false_alarms == 0);
  d = detect_score(two, gt, strict);
  CHECK(d.true_detections == 2);
  CHECK(d.false_alarms == 1);

  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 30; ++trial) {
    const Mask pred = oracle::random_mask(20, 20, 0.3, rng);
    const Mask truth = oracle::random_mask(20, 20, 0.5, rng);
    DetectionOptions opt;
    opt.min_area = static_cast<int>(rng() % 4);
    const Detection det = detect_score(pred, truth, opt);
    const Components comps = label_components(pred, 8);
    std::vector<int> area(static_cast<std::size_t>(comps.count) + 1, 0);
    for (std::size_t i = 0; i < comps.labels.size(); ++i) ++area[static_cast<std::size_t>(comps.labels[i])];
    int surviving = 0;
    for (int l = 1; l <= comps.count; ++l) surviving += area[static_cast<std::size_t>(l)] >= opt.min_area;
    CHECK(det.true_detections + det.false_alarms == surviving);
  }
}

TEST_CASE("detection against polygons") {
  // Output grid at half resolution: pixel (r, c) covers image [2c, 2c+2).
  const std::vector<Polygon> gt{{{{2, 2}, {10, 2}, {10, 10}, {2, 10}}}};
  const Mask inside = from_rows({"........", ".##.....", ".##.....", "........", "........",
                                 "........", "........", "........"});
  const Mask outside = from_rows({"........", "........", "........", "........", "........",
                                  "........", "......##", "......##"});
  Detection d = detect_score(inside, gt, 0.5);
  CHECK(d.true_detections == 1);
  CHECK(d.false_alarms == 0);
  d = detect_score(outside, gt, 0.5);
  CHECK(d.true_detections == 0);
  CHECK(d.false_alarms == 1);
  CHECK_THROWS_AS(detect_score(inside, gt, 0.0), ValueError);
}

TEST_CASE("metric reports") {
  std::vector<ImageMetrics> rows{{"a", {1.0, 0.5, 2, 1, 3}}, {"b", {0.5, 1.0, 4, 3, 5}}};
  const Metrics mean = mean_metrics(rows);
  CHECK(mean.precision == 0.75);
  CHECK(mean.recall == 0.75);
  CHECK(mean.true_detections == 6);
  CHECK(mean.false_alarms == 4);
  CHECK(mean.building_count == 8);
  const std::string report = format_metrics_report(rows);
  CHECK(report.find("images 2\n") != std::string::npos);
  CHECK(report.find("precision 0.7500000000\n") != std::string::npos);
  CHECK(report.find("true_detections 6\n") != std::string::npos);
  const std::string table = format_metrics_table(rows);
  CHECK(table.find("a\t1.0000000000\t0.5000000000\t2\t1\t3\n") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);
}
