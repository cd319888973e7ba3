#include "bldgnet/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

namespace bldg {

namespace {

void require_same_extent(const Mask& a, const Mask& b, const char* what) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": extents " +
                     shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

struct Centre {
  double row;
  double col;
};

// Mass centres of components that survive the area filter.
std::vector<Centre> component_centres(const Mask& pred,
                                      const DetectionOptions& options) {
  const Components comps = label_components(pred, options.connectivity);
  std::vector<double> sr(static_cast<std::size_t>(comps.count) + 1, 0.0);
  std::vector<double> sc(sr.size(), 0.0);
  std::vector<long> area(sr.size(), 0);
  const std::size_t w = pred.dim(1);
  for (std::size_t i = 0; i < comps.labels.size(); ++i) {
    const auto l = static_cast<std::size_t>(comps.labels[i]);
    if (!l) continue;
    sr[l] += static_cast<double>(i / w);
    sc[l] += static_cast<double>(i % w);
    ++area[l];
  }
  std::vector<Centre> centres;
  for (std::size_t l = 1; l < sr.size(); ++l) {
    if (area[l] < options.min_area) continue;
    const auto a = static_cast<double>(area[l]);
    centres.push_back({sr[l] / a, sc[l] / a});
  }
  return centres;
}

}  // namespace

PixelScores precision_recall(const Mask& pred, const Mask& gt) {
  require_same_extent(pred, gt, "precision_recall");
  std::size_t tp = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    tp += p && g;
    np += p;
    ng += g;
  }
  PixelScores s;
  if (np == 0) {
    s.precision = ng == 0 ? 1.0 : 0.0;
  } else {
    s.precision = static_cast<double>(tp) / static_cast<double>(np);
  }
  s.recall = ng == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(ng);
  return s;
}

Components label_components(const Mask& mask, int connectivity) {
  if (mask.rank() != 2) throw ShapeError("label_components: mask must be H x W");
  if (connectivity != 4 && connectivity != 8)
    throw ValueError("label_components: connectivity must be 4 or 8");
  const long h = static_cast<long>(mask.dim(0));
  const long w = static_cast<long>(mask.dim(1));
  Components out{Tensor<std::int32_t>(mask.shape()), 0};
  std::vector<std::pair<long, long>> stack;
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      const auto i = static_cast<std::size_t>(r * w + c);
      if (!mask[i] || out.labels[i]) continue;
      const std::int32_t id = ++out.count;
      out.labels[i] = id;
      stack.push_back({r, c});
      while (!stack.empty()) {
        const auto [y, x] = stack.back();
        stack.pop_back();
        for (long dy = -1; dy <= 1; ++dy) {
          for (long dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            if (connectivity == 4 && dy != 0 && dx != 0) continue;
            const long ny = y + dy, nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
            const auto j = static_cast<std::size_t>(ny * w + nx);
            if (!mask[j] || out.labels[j]) continue;
            out.labels[j] = id;
            stack.push_back({ny, nx});
          }
        }
      }
    }
  }
  return out;
}

Detection detect_score(const Mask& pred, const Mask& gt,
                       const DetectionOptions& options) {
  require_same_extent(pred, gt, "detect_score");
  Detection d;
  for (const Centre& c : component_centres(pred, options)) {
    const auto r = static_cast<std::size_t>(std::floor(c.row + 0.5));
    const auto col = static_cast<std::size_t>(std::floor(c.col + 0.5));
    if (gt(r, col))
      ++d.true_detections;
    else
      ++d.false_alarms;
  }
  return d;
}

Detection detect_score(const Mask& pred, std::span<const Polygon> gt,
                       double scale, const DetectionOptions& options) {
  if (pred.rank() != 2) throw ShapeError("detect_score: mask must be H x W");
  if (!(scale > 0.0)) throw ValueError("detect_score: scale must be positive");
  Detection d;
  for (const Centre& c : component_centres(pred, options)) {
    const Point p{(c.col + 0.5) / scale, (c.row + 0.5) / scale};
    bool inside = false;
    for (const Polygon& poly : gt) {
      if (point_in_polygon(poly, p)) {
        inside = true;
        break;
      }
    }
    if (inside)
      ++d.true_detections;
    else
      ++d.false_alarms;
  }
  return d;
}

Metrics mean_metrics(const std::vector<ImageMetrics>& rows) {
  Metrics m;
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.precision += r.metrics.precision;
    m.recall += r.metrics.recall;
    m.true_detections += r.metrics.true_detections;
    m.false_alarms += r.metrics.false_alarms;
    m.building_count += r.metrics.building_count;
  }
  m.precision /= static_cast<double>(rows.size());
  m.recall /= static_cast<double>(rows.size());
  return m;
}

std::string format_metrics_report(const std::vector<ImageMetrics>& rows) {
  const Metrics m = mean_metrics(rows);
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "images %zu\nprecision %.10f\nrecall %.10f\n"
                "true_detections %d\nfalse_alarms %d\nbuilding_count %d\n",
                rows.size(), m.precision, m.recall, m.true_detections,
                m.false_alarms, m.building_count);
  return buf;
}

std::string format_metrics_table(const std::vector<ImageMetrics>& rows) {
  std::ostringstream os;
  os << "id\tprecision\trecall\ttrue_detections\tfalse_alarms\tbuilding_count\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "\t%.10f\t%.10f\t%d\t%d\t%d\n",
                  r.metrics.precision, r.metrics.recall,
                  r.metrics.true_detections, r.metrics.false_alarms,
                  r.metrics.building_count);
    os << r.id << buf;
  }
  return os.str();
}

}  // namespace bldg
