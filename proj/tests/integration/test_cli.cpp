#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "bldgnet/checkpoint.hpp"
#include "bldgnet/io.hpp"
#include "bldgnet/labels.hpp"
#include "cli.hpp"
#include "commands.hpp"
#include "oracles.hpp"
#include "run_config.hpp"

using namespace bldg;
using namespace bldg::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("bldgnet_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bldgnet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

constexpr const char* kSmallConfig = R"([run]
seed = 3

[scene]
tile = 32
min_buildings = 1
max_buildings = 2
min_size = 6
max_size = 12
shadow_length = 1
gap = 2
margin = 2

[network]
filters = 4, 4, 4, 4, 4, 4, 4

[train]
epochs = 2
batch_size = 2
validation_fraction = 0.25
)";

RunConfig small_config(const TempDir& dir) {
  write_file(dir / "small.ini", kSmallConfig);
  return load_run_config(dir / "small.ini");
}

// Value of a "key value" or "key<TAB>value" report line.
std::string value_of(const std::string& report, const std::string& key) {
  std::istringstream in(report);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + ' ', 0) == 0 || line.rfind(key + '\t', 0) == 0) return line.substr(key.size() + 1);
  return "";
}

}  // namespace

TEST_CASE("rf subcommand") {
  TempDir dir;
  Outcome r = run_cli({"rf"});
  CHECK(r.code == 0);
  CHECK(value_of(r.out, "receptive_field") == "148");
  CHECK(value_of(r.out, "stage1") == "256x256x50\ttap");
  CHECK(value_of(r.out, "stage7") == "32x32x70\ttap");
  CHECK(value_of(r.out, "fusion") == "256x256x128");
  CHECK(value_of(r.out, "R7") == "1");

  write_file(dir / "one.spec", "stage 1 5 1 tap\n");
  r = run_cli({"rf", "--spec", (dir / "one.spec").string()});
  CHECK(r.code == 0);
  CHECK(value_of(r.out, "receptive_field") == "5");

  write_file(dir / "fig7.spec", "# appendix example\nstage 1 3 2\nstage 1 3 1 tap\n");
  r = run_cli({"rf", "--spec", (dir / "fig7.spec").string(), "--input-size", "16"});
  CHECK(r.code == 0);
  CHECK(value_of(r.out, "receptive_field") == "8");
  CHECK(value_of(r.out, "fusion") == "8x8x128");

  write_file(dir / "bad.spec", "stage 1 3 2\nstage 1 4 1 tap\n");
  r = run_cli({"rf", "--spec", (dir / "bad.spec").string()});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: parse: ", 0) == 0);
  CHECK(r.err.find("line 2") != std::string::npos);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("usage and configuration errors") {
  TempDir dir;
  Outcome r = run_cli({});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: usage: ", 0) == 0);
  CHECK(run_cli({"frobnicate"}).code == 2);
  CHECK(run_cli({"--precision", "16", "rf"}).code == 2);
  CHECK(run_cli({"dataset", "--out", (dir / "x").string()}).code == 2);

  write_file(dir / "typo.ini", "[train]\nlearnin_rate = 0.1\n");
  r = run_cli({"--config", (dir / "typo.ini").string(), "rf"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: parse: ", 0) == 0);
  CHECK(r.err.find("learnin_rate") != std::string::npos);

  write_file(dir / "neg.ini", "[train]\nbatch_size = 0\n");
  CHECK(run_cli({"--config", (dir / "neg.ini").string(), "rf"}).err.rfind("error: value: ", 0) == 0);

  // Every config key documented in the README parses.
  const RunConfig c = small_config(dir);
  CHECK(c.seed == 3);
  CHECK(c.scene.tile == 32);
  CHECK(c.filters == std::vector<int>(7, 4));
  CHECK(c.train.epochs == 2);
  CHECK(c.network().fusion_input_channels() == 16);
}

TEST_CASE("dataset subcommand") {
  TempDir dir;
  const RunConfig config = small_config(dir);

  const Manifest empty = cmd_dataset(config, 0, dir / "empty");
  CHECK(empty.samples.empty());
  CHECK(std::distance(fs::directory_iterator(dir / "empty"), fs::directory_iterator{}) == 1);
  CHECK(load_manifest(dir / "empty").samples.empty());

  const Outcome r = run_cli({"--config", (dir / "small.ini").string(), "dataset", "--count", "10",
                             "--out", (dir / "a").string()});
  REQUIRE(r.code == 0);
  CHECK(value_of(r.out, "samples") == "10");
  cmd_dataset(config, 10, dir / "b");
  CHECK(read_file(dir / "a" / kManifestName) == read_file(dir / "b" / kManifestName));

  const Manifest m = load_manifest(dir / "a");
  REQUIRE(m.samples.size() == 10);
  CHECK(m.tile == 32);
  for (const ManifestEntry& e : m.samples) {
    for (const std::string& f : {e.image, e.mask, e.polygons})
      CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
    const Mask mask = load_mask(dir / "a" / e.mask);
    const std::vector<Polygon> polys = load_polygons(dir / "a" / e.polygons);
    CHECK(mask == oracle::rasterize(polys, 16, 16, 0.5));
    CHECK(static_cast<int>(polys.size()) == e.buildings);
    CHECK(load_png(dir / "a" / e.image).shape() == Shape{32, 32, 3});
  }

  RunConfig other = config;
  other.seed = 4;
  CHECK_FALSE(cmd_dataset(other, 3, dir / "c").samples[0].seed == m.samples[0].seed);
  CHECK_THROWS_AS(cmd_dataset(config, 1, "/proc/forbidden/out"), IoError);
}

TEST_CASE("train subcommand") {
  TempDir dir;
  RunConfig config = small_config(dir);
  cmd_dataset(config, 6, dir / "data");

  SUBCASE("zero epochs writes the initialization") {
    config.train.epochs = 0;
    const std::vector<EpochLog> log = cmd_train(config, dir / "data", dir / "init.ckpt", dir / "init.log");
    CHECK(log.empty());
    const Checkpoint c = load_checkpoint(dir / "init.ckpt");
    CHECK(c.spec == config.network());
    const ParamSet<float> want = init_params<float>(config.network(), config.seed);
    const ParamSet<float> got = params_from_checkpoint<float>(c);
    for (std::size_t l = 0; l < want.layer_count(); ++l) {
      CHECK(got.layers[l].filters == want.layers[l].filters);
      CHECK(got.layers[l].bias == want.layers[l].bias);
    }
  }

  SUBCASE("log has one line per epoch and replays exactly") {
    const std::string ini = (dir / "small.ini").string();
    const Outcome a = run_cli({"--config", ini, "train", "--dataset", (dir / "data").string(), "--out",
                               (dir / "a.ckpt").string()});
    REQUIRE(a.code == 0);
    CHECK(value_of(a.out, "epochs") == "2");
    const Outcome b = run_cli({"--config", ini, "train", "--dataset", (dir / "data").string(), "--out",
                               (dir / "b.ckpt").string(), "--log", (dir / "b.tsv").string()});
    REQUIRE(b.code == 0);
    auto losses = [](const fs::path& p) {
      std::istringstream in(read_file(p));
      std::string line;
      std::vector<std::string> cols;
      std::getline(in, line);
      CHECK(line.rfind("epoch\t", 0) == 0);
      while (std::getline(in, line)) cols.push_back(line.substr(0, line.find('\t', line.find('\t') + 1)));
      return cols;
    };
    const std::vector<std::string> la = losses(dir / "a.ckpt.log.tsv");
    CHECK(la.size() == 2);
    CHECK(la == losses(dir / "b.tsv"));
    CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));
  }

  SUBCASE("corrupt samples are named") {
    const Manifest m = load_manifest(dir / "data");
    write_file(dir / "data" / m.samples[2].mask, "garbage");
    const Outcome r = run_cli({"--config", (dir / "small.ini").string(), "train", "--dataset",
                               (dir / "data").string(), "--out", (dir / "c.ckpt").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find(m.samples[2].mask) != std::string::npos);
  }
}

TEST_CASE("infer subcommand") {
  TempDir dir;
  RunConfig config = small_config(dir);
  config.train.epochs = 0;
  cmd_dataset(config, 1, dir / "data");
  cmd_train(config, dir / "data", dir / "m.ckpt", dir / "m.log");

  Tensor<double> image = Tensor<double>::hwc(512, 512, 3, 0.4);
  std::mt19937_64 rng(101);
  for (auto& v : image.values()) v = static_cast<double>(rng() % 256) / 255.0;
  save_png(dir / "big.png", image);
  const Outcome r = run_cli({"--config", (dir / "small.ini").string(), "infer", "--checkpoint",
                             (dir / "m.ckpt").string(), "--image", (dir / "big.png").string(), "--out",
                             (dir / "big").string()});
  REQUIRE(r.code == 0);
  const RealMap field = load_real_map(dir / "big.field.fgrid");
  REQUIRE(field.shape() == Shape{256, 256});
  for (double v : field.values()) CHECK((v >= -64.0 && v <= 63.0));

  const Tensor<double> building = load_png(dir / "big.building.png");
  const Tensor<double> boundary = load_png(dir / "big.boundary.png");
  const Tensor<double> source = load_png(dir / "big.png");
  std::size_t marked = 0;
  for (std::size_t r0 = 0; r0 < 512; ++r0)
    for (std::size_t c0 = 0; c0 < 512; ++c0) {
      const double v = field(r0 / 2, c0 / 2);
      const bool blue = boundary(r0, c0, 0) == 0.0 && boundary(r0, c0, 1) == 0.0 && boundary(r0, c0, 2) == 1.0;
      const bool red = std::abs(building(r0, c0, 0) - (0.5 * source(r0, c0, 0) + 0.5)) < 1.0 / 255 &&
                       std::abs(building(r0, c0, 1) - 0.5 * source(r0, c0, 1)) < 1.0 / 255;
      CHECK((v >= -0.5 && v <= 0.5) == blue);
      if (v > 0.5) CHECK(red);
      CHECK_FALSE((v > 0.5 && blue));
      marked += blue || v > 0.5;
    }
  MESSAGE("marked pixels: " << marked);

  save_png(dir / "odd.png", Tensor<double>::hwc(100, 96, 3));
  const Outcome bad = run_cli({"infer", "--checkpoint", (dir / "m.ckpt").string(), "--image",
                               (dir / "odd.png").string(), "--out", (dir / "odd").string()});
  CHECK(bad.code == 1);
  CHECK(bad.err.rfind("error: shape: ", 0) == 0);
  CHECK(bad.err.find("pad") != std::string::npos);
  CHECK(run_cli({"infer", "--checkpoint", (dir / "none.ckpt").string(), "--image",
                 (dir / "big.png").string(), "--out", (dir / "x").string()})
            .err.rfind("error: io: ", 0) == 0);
}

TEST_CASE("eval subcommand") {
  TempDir dir;
  const RunConfig config = small_config(dir);
  const Manifest m = cmd_dataset(config, 4, dir / "data");
  fs::create_directories(dir / "same");
  fs::create_directories(dir / "blank");
  for (const ManifestEntry& e : m.samples) {
    const Mask gt = load_mask(dir / "data" / e.mask);
    save_real_map(dir / "same" / (e.id + ".field.fgrid"), signed_distance_transform(gt));
    save_real_map(dir / "blank" / (e.id + ".field.fgrid"), RealMap(gt.shape(), -64.0));
  }

  for (const ManifestEntry& e : m.samples) CHECK(e.buildings > 0);
  for (const ImageMetrics& row : cmd_eval(config, dir / "same", dir / "data")) {
    CHECK(row.metrics.precision == 1.0);
    CHECK(row.metrics.recall == 1.0);
  }
  for (const ImageMetrics& row : cmd_eval(config, dir / "blank", dir / "data")) {
    CHECK(row.metrics.recall == 0.0);
    CHECK(row.metrics.true_detections == 0);
  }

  const Outcome r = run_cli({"eval", "--pred", (dir / "same").string(), "--gt", (dir / "data").string(),
                             "--report", (dir / "report.txt").string()});
  REQUIRE(r.code == 0);
  CHECK(value_of(read_file(dir / "report.txt"), "precision") == "1.0000000000");
  CHECK(r.out.find(read_file(dir / "report.txt")) != std::string::npos);

  fs::remove(dir / "same" / (m.samples[1].id + ".field.fgrid"));
  Outcome missing = run_cli({"eval", "--pred", (dir / "same").string(), "--gt", (dir / "data").string()});
  CHECK(missing.code == 1);
  CHECK(missing.err.rfind("error: io: ", 0) == 0);
  CHECK(missing.err.find(m.samples[1].id) != std::string::npos);

  save_real_map(dir / "blank" / "stray.field.fgrid", RealMap::map(16, 16));
  missing = run_cli({"eval", "--pred", (dir / "blank").string(), "--gt", (dir / "data").string()});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("stray") != std::string::npos);
}

TEST_CASE("eval on hand-counted fixtures") {
  // Two 8x8 ground-truth masks with predicted fields whose scores were
  // counted by hand:
  //   fixA: gt 4x4 block rows/cols 2..5, interior 2x2 at rows/cols 3..4.
  //         pred building rows 3..4, cols 3..5 (6 px, 4 shared): P 4/6,
  //         R 1; one 6 px component centred at (3.5, 4) inside gt: TD 1.
  //   fixB: gt 3x3 blocks at rows/cols 0..2 and 5..7, interiors (1,1) and
  //         (6,6). pred (1,1), (6,6) and a 2x2 blob at rows 0..1, cols 5..6:
  //         P 2/6, R 1; single pixels fall under the 4 px area filter and
  //         the blob centre (0.5, 5.5) is background: TD 0, FA 1.
  TempDir dir;
  Manifest manifest;
  manifest.tile = 16;
  auto add = [&](const std::string& id, const Mask& gt, const RealMap& field) {
    ManifestEntry e{id, 0, id + ".png", id + ".mask.fgrid", id + ".geojson", 0, 0};
    save_png(dir / e.image, Tensor<double>::hwc(16, 16, 3));
    save_mask(dir / e.mask, gt);
    save_polygons(dir / e.polygons, {});
    fs::create_directories(dir / "pred");
    save_real_map(dir / "pred" / (id + ".field.fgrid"), field);
    manifest.samples.push_back(e);
  };
  Mask gt_a = Mask::map(8, 8);
  RealMap field_a(Shape{8, 8}, -5.0);
  for (std::size_t r = 2; r <= 5; ++r)
    for (std::size_t c = 2; c <= 5; ++c) gt_a(r, c) = 1;
  for (std::size_t r = 3; r <= 4; ++r)
    for (std::size_t c = 3; c <= 5; ++c) field_a(r, c) = 1.0;
  add("fixA", gt_a, field_a);

  Mask gt_b = Mask::map(8, 8);
  RealMap field_b(Shape{8, 8}, -5.0);
  for (std::size_t r = 0; r <= 2; ++r)
    for (std::size_t c = 0; c <= 2; ++c) gt_b(r, c) = gt_b(r + 5, c + 5) = 1;
  field_b(1, 1) = field_b(6, 6) = 1.0;
  for (std::size_t r = 0; r <= 1; ++r)
    for (std::size_t c = 5; c <= 6; ++c) field_b(r, c) = 1.0;
  add("fixB", gt_b, field_b);
  save_manifest(dir.path, manifest);

  const Outcome r = run_cli({"eval", "--pred", (dir / "pred").string(), "--gt", dir.path.string()});
  REQUIRE(r.code == 0);
  const std::string want =
      "id\tprecision\trecall\ttrue_detections\tfalse_alarms\tbuilding_count\n"
      "fixA\t0.6666666667\t1.0000000000\t1\t0\t1\n"
      "fixB\t0.3333333333\t1.0000000000\t0\t1\t2\n"
      "\n"
      "images 2\nprecision 0.5000000000\nrecall 1.0000000000\n"
      "true_detections 1\nfalse_alarms 1\nbuilding_count 3\n";
  CHECK(r.out == want);
}

TEST_CASE("inference and evaluation agree with in-memory scoring") {
  TempDir dir;
  RunConfig config = small_config(dir);
  cmd_dataset(config, 4, dir / "data");
  cmd_train(config, dir / "data", dir / "m.ckpt", dir / "m.log");
  cmd_infer_dataset(config, dir / "m.ckpt", dir / "data", dir / "pred");
  const std::vector<ImageMetrics> rows = cmd_eval(config, dir / "pred", dir / "data");

  const Checkpoint ckpt = load_checkpoint(dir / "m.ckpt");
  const ParamSet<double> params = params_from_checkpoint<double>(ckpt);
  const Manifest m = load_manifest(dir / "data");
  REQUIRE(rows.size() == m.samples.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor<double> image = load_png(dir / "data" / m.samples[i].image);
    const RealMap field = expectation_decode(forward(ckpt.spec, params, image, false).probs);
    const Metrics want = score_field(field, load_mask(dir / "data" / m.samples[i].mask), {}, config.eval);
    CHECK(rows[i].id == m.samples[i].id);
    CHECK(std::abs(rows[i].metrics.precision - want.precision) <= 1e-6);
    CHECK(std::abs(rows[i].metrics.recall - want.recall) <= 1e-6);
    CHECK(rows[i].metrics.true_detections == want.true_detections);
    CHECK(rows[i].metrics.false_alarms == want.false_alarms);
  }
}
