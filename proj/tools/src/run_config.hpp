#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bldgnet/datapipe.hpp"
#include "bldgnet/netgraph.hpp"
#include "bldgnet/trainer.hpp"

namespace bldg::cli {

// INI run configuration. Every key is optional; unknown sections and keys
// are rejected.
//
//   [run]      seed = 0, precision = 64 (32 or 64)
//   [train]    learning_rate, momentum, weight_decay, batch_size, epochs,
//              validation_fraction
//   [scene]    tile, min_buildings, max_buildings, min_size, max_size,
//              max_rotation_deg, gap, margin, texture_noise, shadow_length,
//              max_retries
//   [network]  filters = comma-separated per-stage counts (seven stages of
//              the default architecture), or spec_file = path to a spec
//              file; classes = 128
//   [eval]     min_area = 4, connectivity = 8, polygons = false
//   [paths]    dataset, checkpoint, log, output: defaults for the
//              corresponding command-line options
struct EvalConfig {
  int min_area = 4;
  int connectivity = 8;
  bool polygons = false;  // score TD/FA against polygons instead of masks
};

struct PathConfig {
  std::filesystem::path dataset;
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::filesystem::path output;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int precision = 64;
  TrainConfig train;
  SceneConfig scene;
  std::vector<int> filters;  // empty: default widths
  std::filesystem::path spec_file;
  int classes = 128;
  EvalConfig eval;
  PathConfig paths;

  // Resolved architecture: spec_file, else scaled filters, else the default
  // seven-stage network.
  NetworkSpec network() const;
  void validate() const;
};

RunConfig parse_run_config(const std::string& text,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace bldg::cli
