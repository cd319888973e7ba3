#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bldgnet/evaluation.hpp"
#include "bldgnet/trainer.hpp"
#include "run_config.hpp"

namespace bldg::cli {

// manifest.json in a dataset directory; file names are relative to it.
struct ManifestEntry {
  std::string id;
  std::uint64_t seed = 0;
  std::string image;
  std::string mask;
  std::string polygons;
  int buildings = 0;
  int requested_buildings = 0;
};

struct Manifest {
  std::uint64_t seed = 0;
  int tile = 0;
  std::vector<ManifestEntry> samples;
};

inline constexpr const char* kManifestName = "manifest.json";

void save_manifest(const std::filesystem::path& dir, const Manifest& m);
Manifest load_manifest(const std::filesystem::path& dir);

// Per-sample scene seeds drawn from one generator seeded with `seed`.
std::vector<std::uint64_t> sample_seeds(std::uint64_t seed, std::size_t count);

Manifest cmd_dataset(const RunConfig& config, std::size_t count,
                     const std::filesystem::path& out_dir);

// Trains on every sample of a dataset directory; writes the best checkpoint
// and a tab-separated epoch log.
std::vector<EpochLog> cmd_train(const RunConfig& config,
                                const std::filesystem::path& dataset_dir,
                                const std::filesystem::path& checkpoint,
                                const std::filesystem::path& log_path);

// Writes <prefix>.field.fgrid, <prefix>.building.png and
// <prefix>.boundary.png.
void cmd_infer(const RunConfig& config, const std::filesystem::path& checkpoint,
               const std::filesystem::path& image,
               const std::filesystem::path& prefix);

// Runs cmd_infer on every dataset image, writing <out_dir>/<id>.*.
void cmd_infer_dataset(const RunConfig& config,
                       const std::filesystem::path& checkpoint,
                       const std::filesystem::path& dataset_dir,
                       const std::filesystem::path& out_dir);

// Scores <pred_dir>/<id>.field.fgrid against every dataset sample.
std::vector<ImageMetrics> cmd_eval(const RunConfig& config,
                                   const std::filesystem::path& pred_dir,
                                   const std::filesystem::path& gt_dir);

// Scores one decoded field against a ground-truth mask (and its polygons when
// config.eval.polygons is set).
Metrics score_field(const RealMap& field, const Mask& gt,
                    const std::vector<Polygon>& polygons,
                    const EvalConfig& config);

// Receptive-field report: R(i) per stage, the final field, and per-stage
// output extents for a square input of `input_size` pixels.
std::string cmd_rf(const NetworkSpec& spec, int input_size);

// Rejects extents the network cannot take, with a pad/crop hint.
void check_input_extents(const NetworkSpec& spec, std::size_t height,
                         std::size_t width);

}  // namespace bldg::cli
