#pragma once

#include <span>
#include <string>
#include <vector>

#include "bldgnet/datapipe.hpp"
#include "bldgnet/tensor.hpp"

namespace bldg {

struct PixelScores {
  double precision = 0.0;
  double recall = 0.0;
};

// tp = |pred & gt|. precision = tp/|pred| (1 when both are empty, 0 when
// only pred is empty); recall = tp/|gt| (1 when gt is empty).
PixelScores precision_recall(const Mask& pred, const Mask& gt);

struct Components {
  Tensor<std::int32_t> labels;  // 0 = background, 1..count
  int count = 0;
};

// Connected components in row-major discovery order.
Components label_components(const Mask& mask, int connectivity = 8);

struct Detection {
  int true_detections = 0;
  int false_alarms = 0;
};

struct DetectionOptions {
  int min_area = 4;  // components smaller than this are discarded
  int connectivity = 8;
};

// Mass centre (mean row, mean column) of every 8-connected predicted
// component; TD when the pixel nearest the centre is a ground-truth building
// pixel, FA otherwise.
Detection detect_score(const Mask& pred, const Mask& gt,
                       const DetectionOptions& options = {});

// Same, testing the centre (c + 0.5, r + 0.5) / scale against polygons given
// in image coordinates.
Detection detect_score(const Mask& pred, std::span<const Polygon> gt,
                       double scale, const DetectionOptions& options = {});

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  int true_detections = 0;
  int false_alarms = 0;
  int building_count = 0;
};

struct ImageMetrics {
  std::string id;
  Metrics metrics;
};

// "key value" lines: images, precision, recall (means over images),
// true_detections, false_alarms, building_count (totals).
std::string format_metrics_report(const std::vector<ImageMetrics>& rows);
// Tab-separated: header then one row per image.
std::string format_metrics_table(const std::vector<ImageMetrics>& rows);
Metrics mean_metrics(const std::vector<ImageMetrics>& rows);

}  // namespace bldg
