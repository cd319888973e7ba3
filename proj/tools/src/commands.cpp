#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bldgnet/checkpoint.hpp"
#include "bldgnet/error.hpp"
#include "bldgnet/io.hpp"
#include "bldgnet/labels.hpp"

namespace bldg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFieldSuffix = ".field.fgrid";

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw IoError("cannot create directory '" + dir.string() + "'");
}

std::string sample_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "tile_%04zu", index);
  return buf;
}

Mask load_sample_mask(const fs::path& path, std::size_t image_h,
                      std::size_t image_w) {
  Mask mask = load_mask(path);
  if (mask.dim(0) * 2 != image_h || mask.dim(1) * 2 != image_w)
    throw ShapeError(path.string() + ": mask " + shape_string(mask.shape()) +
                     " is not half the image extent " +
                     std::to_string(image_h) + "x" + std::to_string(image_w));
  return mask;
}

template <typename T>
std::vector<EpochLog> train_typed(const RunConfig& config,
                                  const fs::path& dataset_dir,
                                  const fs::path& checkpoint,
                                  const fs::path& log_path) {
  const NetworkSpec spec = config.network();
  spec.validate();
  const Manifest manifest = load_manifest(dataset_dir);
  std::vector<TrainingSample<T>> samples;
  samples.reserve(manifest.samples.size());
  for (const ManifestEntry& e : manifest.samples) {
    const fs::path image_path = dataset_dir / e.image;
    const Tensor<double> image = load_png(image_path);
    try {
      check_input_extents(spec, image.dim(0), image.dim(1));
    } catch (const ShapeError& err) {
      throw ShapeError(image_path.string() + ": " + err.what());
    }
    const Mask mask =
        load_sample_mask(dataset_dir / e.mask, image.dim(0), image.dim(1));
    samples.push_back({image.cast<T>(),
                       to_class_indices(make_label_field(mask).classes)});
  }

  std::ofstream log(log_path);
  if (!log) throw IoError("cannot open '" + log_path.string() + "' for writing");
  log << "epoch\ttrain_loss\tvalidation_error\twall_seconds\n";
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog& entry) {
    log << format_epoch_line(entry) << '\n' << std::flush;
  };
  TrainConfig train = config.train;
  train.seed = config.seed;
  const TrainResult<T> result = bldg::train(
      spec, init_params<T>(spec, config.seed), samples, train, hooks);
  if (!log) throw IoError("write failed for '" + log_path.string() + "'");
  save_checkpoint(checkpoint, make_checkpoint(spec, result.best_params));
  return result.log;
}

Tensor<double> overlay(const Tensor<double>& image, const Mask& mask,
                       bool solid_blue) {
  Tensor<double> out = image;
  for (std::size_t r = 0; r < image.dim(0); ++r) {
    for (std::size_t c = 0; c < image.dim(1); ++c) {
      if (!mask(r / 2, c / 2)) continue;
      if (solid_blue) {
        out(r, c, 0) = 0.0;
        out(r, c, 1) = 0.0;
        out(r, c, 2) = 1.0;
      } else {
        out(r, c, 0) = 0.5 * image(r, c, 0) + 0.5;
        out(r, c, 1) = 0.5 * image(r, c, 1);
        out(r, c, 2) = 0.5 * image(r, c, 2);
      }
    }
  }
  return out;
}

template <typename T>
RealMap decode_field(const NetworkSpec& spec, const ParamSet<T>& params,
                     const Tensor<double>& image) {
  const Tensor<T> probs = forward(spec, params, image.cast<T>(), false).probs;
  return expectation_decode(probs);
}

struct LoadedModel {
  NetworkSpec spec;
  ParamSet<float> f32;
  ParamSet<double> f64;
};

LoadedModel load_model(const RunConfig& config, const fs::path& checkpoint) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  LoadedModel m{ckpt.spec, {}, {}};
  if (config.precision == 32)
    m.f32 = params_from_checkpoint<float>(ckpt);
  else
    m.f64 = params_from_checkpoint<double>(ckpt);
  return m;
}

void infer_one(const RunConfig& config, const LoadedModel& model,
               const fs::path& image_path, const fs::path& prefix) {
  const Tensor<double> image = load_png(image_path);
  try {
    check_input_extents(model.spec, image.dim(0), image.dim(1));
  } catch (const ShapeError& e) {
    throw ShapeError(image_path.string() + ": " + e.what());
  }
  const RealMap field =
      config.precision == 32 ? decode_field(model.spec, model.f32, image)
                             : decode_field(model.spec, model.f64, image);
  const Readout readout = threshold_readout(field);
  const fs::path parent = prefix.parent_path();
  if (!parent.empty()) ensure_directory(parent);
  save_real_map(prefix.string() + kFieldSuffix, field);
  save_png(prefix.string() + ".building.png",
           overlay(image, readout.building, false));
  save_png(prefix.string() + ".boundary.png",
           overlay(image, readout.boundary, true));
}

}  // namespace

void save_manifest(const fs::path& dir, const Manifest& m) {
  json samples = json::array();
  for (const ManifestEntry& e : m.samples) {
    samples.push_back({{"id", e.id},
                       {"seed", e.seed},
                       {"image", e.image},
                       {"mask", e.mask},
                       {"polygons", e.polygons},
                       {"buildings", e.buildings},
                       {"requested_buildings", e.requested_buildings}});
  }
  const json doc = {{"format", "bldgnet-dataset"},
                    {"version", 1},
                    {"seed", m.seed},
                    {"tile", m.tile},
                    {"samples", samples}};
  const fs::path path = dir / kManifestName;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Manifest load_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifestName;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  Manifest m;
  try {
    const json doc = json::parse(in);
    if (doc.at("format").get<std::string>() != "bldgnet-dataset" ||
        doc.at("version").get<int>() != 1)
      throw ParseError("unsupported manifest format");
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.tile = doc.at("tile").get<int>();
    std::set<std::string> ids;
    for (const json& s : doc.at("samples")) {
      ManifestEntry e;
      e.id = s.at("id").get<std::string>();
      e.seed = s.at("seed").get<std::uint64_t>();
      e.image = s.at("image").get<std::string>();
      e.mask = s.at("mask").get<std::string>();
      e.polygons = s.at("polygons").get<std::string>();
      e.buildings = s.at("buildings").get<int>();
      e.requested_buildings = s.at("requested_buildings").get<int>();
      if (!ids.insert(e.id).second)
        throw ParseError("duplicate sample id '" + e.id + "'");
      m.samples.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return m;
}

std::vector<std::uint64_t> sample_seeds(std::uint64_t seed, std::size_t count) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> seeds(count);
  for (auto& s : seeds) s = rng();
  return seeds;
}

Manifest cmd_dataset(const RunConfig& config, std::size_t count,
                     const fs::path& out_dir) {
  config.scene.validate();
  ensure_directory(out_dir);
  Manifest m;
  m.seed = config.seed;
  m.tile = config.scene.tile;
  const std::vector<std::uint64_t> seeds = sample_seeds(config.seed, count);
  for (std::size_t i = 0; i < count; ++i) {
    const SceneSample s = generate_scene(seeds[i], config.scene);
    ManifestEntry e;
    e.id = sample_id(i);
    e.seed = seeds[i];
    e.image = e.id + ".png";
    e.mask = e.id + ".mask.fgrid";
    e.polygons = e.id + ".geojson";
    e.buildings = static_cast<int>(s.polygons.size());
    e.requested_buildings = s.requested_buildings;
    save_png(out_dir / e.image, s.image);
    save_mask(out_dir / e.mask, s.mask);
    save_polygons(out_dir / e.polygons, s.polygons);
    m.samples.push_back(std::move(e));
  }
  save_manifest(out_dir, m);
  return m;
}

std::vector<EpochLog> cmd_train(const RunConfig& config,
                                const fs::path& dataset_dir,
                                const fs::path& checkpoint,
                                const fs::path& log_path) {
  config.validate();
  return config.precision == 32
             ? train_typed<float>(config, dataset_dir, checkpoint, log_path)
             : train_typed<double>(config, dataset_dir, checkpoint, log_path);
}

void cmd_infer(const RunConfig& config, const fs::path& checkpoint,
               const fs::path& image, const fs::path& prefix) {
  config.validate();
  infer_one(config, load_model(config, checkpoint), image, prefix);
}

void cmd_infer_dataset(const RunConfig& config, const fs::path& checkpoint,
                       const fs::path& dataset_dir, const fs::path& out_dir) {
  config.validate();
  const LoadedModel model = load_model(config, checkpoint);
  const Manifest manifest = load_manifest(dataset_dir);
  ensure_directory(out_dir);
  for (const ManifestEntry& e : manifest.samples)
    infer_one(config, model, dataset_dir / e.image, out_dir / e.id);
}

Metrics score_field(const RealMap& field, const Mask& gt,
                    const std::vector<Polygon>& polygons,
                    const EvalConfig& config) {
  if (field.shape() != gt.shape())
    throw ShapeError("field " + shape_string(field.shape()) +
                     " does not match ground truth " +
                     shape_string(gt.shape()));
  const Mask pred = threshold_readout(field).building;
  // Both sides go through the same readout, so the boundary band counts
  // against neither precision nor recall.
  const Mask interior = threshold_readout(signed_distance_transform(gt)).building;
  const PixelScores pr = precision_recall(pred, interior);
  const DetectionOptions options{config.min_area, config.connectivity};
  const Detection d = config.polygons
                          ? detect_score(pred, polygons, 0.5, options)
                          : detect_score(pred, gt, options);
  Metrics m;
  m.precision = pr.precision;
  m.recall = pr.recall;
  m.true_detections = d.true_detections;
  m.false_alarms = d.false_alarms;
  m.building_count = config.polygons ? static_cast<int>(polygons.size())
                                     : label_components(gt, 8).count;
  return m;
}

std::vector<ImageMetrics> cmd_eval(const RunConfig& config,
                                   const fs::path& pred_dir,
                                   const fs::path& gt_dir) {
  const Manifest manifest = load_manifest(gt_dir);
  if (!fs::is_directory(pred_dir))
    throw IoError("prediction directory '" + pred_dir.string() +
                  "' does not exist");
  std::set<std::string> known;
  for (const ManifestEntry& e : manifest.samples) known.insert(e.id);
  std::vector<fs::path> extra;
  for (const auto& entry : fs::directory_iterator(pred_dir)) {
    const std::string name = entry.path().filename().string();
    const std::string suffix = kFieldSuffix;
    if (name.size() <= suffix.size() ||
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
      continue;
    if (!known.count(name.substr(0, name.size() - suffix.size())))
      extra.push_back(entry.path());
  }
  if (!extra.empty()) {
    std::sort(extra.begin(), extra.end());
    throw IoError("prediction '" + extra.front().string() +
                  "' has no ground-truth counterpart in '" +
                  (gt_dir / kManifestName).string() + "'");
  }

  std::vector<ImageMetrics> rows;
  for (const ManifestEntry& e : manifest.samples) {
    const fs::path pred_path = pred_dir / (e.id + kFieldSuffix);
    if (!fs::exists(pred_path))
      throw IoError("missing prediction '" + pred_path.string() +
                    "' for sample " + e.id);
    const RealMap field = load_real_map(pred_path);
    const Mask gt = load_mask(gt_dir / e.mask);
    const std::vector<Polygon> polygons =
        config.eval.polygons ? load_polygons(gt_dir / e.polygons)
                             : std::vector<Polygon>{};
    try {
      rows.push_back({e.id, score_field(field, gt, polygons, config.eval)});
    } catch (const ShapeError& err) {
      throw ShapeError(pred_path.string() + ": " + err.what());
    }
  }
  return rows;
}

void check_input_extents(const NetworkSpec& spec, std::size_t height,
                         std::size_t width) {
  const auto m = static_cast<std::size_t>(spec.input_multiple());
  if (height > 0 && width > 0 && height % m == 0 && width % m == 0) return;
  const auto down = [m](std::size_t v) { return v / m * m; };
  const auto up = [m](std::size_t v) { return (v + m - 1) / m * m; };
  std::ostringstream os;
  os << "image extent " << height << "x" << width
     << " is not a multiple of " << m << "; pad to " << up(height) << "x"
     << up(width);
  if (down(height) > 0 && down(width) > 0)
    os << " or crop to " << down(height) << "x" << down(width);
  throw ShapeError(os.str());
}

std::string cmd_rf(const NetworkSpec& spec, int input_size) {
  spec.validate_layers();
  if (input_size <= 0) throw ValueError("input size must be positive");
  const std::vector<long long> profile = receptive_field_profile(spec);
  std::ostringstream os;
  os << "# R<i>: window at the input of stage i+1 seen by one last-stage "
        "unit (R0: image pixels)\n";
  for (std::size_t i = 0; i < profile.size(); ++i)
    os << "R" << i << '\t' << profile[i] << '\n';
  os << "receptive_field\t" << profile.front() << '\n';
  os << "# stage output extents for a " << input_size << "x" << input_size
     << " input\n";
  long long extent = input_size;
  long long fused = 0;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const StageSpec& s = spec.stages[i];
    if (extent % s.pool != 0)
      throw ShapeError("input size " + std::to_string(input_size) +
                       " does not pool evenly at stage " +
                       std::to_string(i + 1));
    extent /= s.pool;
    if (i == 0) fused = extent;
    os << "stage" << i + 1 << '\t' << extent << 'x' << extent << 'x'
       << s.filter_count << (s.tapped ? "\ttap" : "") << '\n';
  }
  os << "fusion\t" << fused << 'x' << fused << 'x'
     << spec.fusion_classes << '\n';
  return os.str();
}

}  // namespace bldg::cli
