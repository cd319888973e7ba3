#include "cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "bldgnet/error.hpp"
#include "bldgnet/io.hpp"
#include "commands.hpp"

namespace bldg::cli {

namespace {

namespace fs = std::filesystem;

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

fs::path pick(const fs::path& flag, const fs::path& configured,
              const char* what) {
  if (!flag.empty()) return flag;
  if (!configured.empty()) return configured;
  throw ValueError(std::string("no ") + what +
                   " given (command-line option or [paths] entry)");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> precision;

  std::size_t count = 0;
  fs::path dataset, out, log, checkpoint, image, pred, gt, spec, table, report;
  bool polygons = false;
  std::optional<int> min_area;
  int input_size = 512;
};

RunConfig resolve_config(const Args& a) {
  RunConfig c = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (a.seed) c.seed = *a.seed;
  if (a.precision) c.precision = *a.precision;
  if (a.polygons) c.eval.polygons = true;
  if (a.min_area) c.eval.min_area = *a.min_area;
  c.validate();
  return c;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Building extraction with a multi-stage fully convolutional "
               "network",
               "bldgnet"};
  app.require_subcommand(1);
  app.fallthrough();
  Args a;
  app.add_option("--config", a.config, "INI run configuration")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", a.seed, "Overrides [run] seed");
  app.add_option("--precision", a.precision, "Arithmetic width, 32 or 64")
      ->check(CLI::IsMember({32, 64}));

  auto* dataset = app.add_subcommand("dataset", "Generate synthetic scenes");
  dataset->add_option("--count", a.count, "Number of samples")->required();
  dataset->add_option("--out", a.out, "Output directory");

  auto* train = app.add_subcommand("train", "Train on a dataset directory");
  train->add_option("--dataset", a.dataset, "Dataset directory");
  train->add_option("--out", a.checkpoint, "Checkpoint to write");
  train->add_option("--log", a.log,
                    "Epoch log (default <checkpoint>.log.tsv)");

  auto* infer = app.add_subcommand("infer", "Predict a value field");
  infer->add_option("--checkpoint", a.checkpoint, "Trained checkpoint");
  auto* image_opt = infer->add_option("--image", a.image, "Input PNG");
  auto* dataset_opt =
      infer->add_option("--dataset", a.dataset, "Run on every dataset image");
  image_opt->excludes(dataset_opt);
  infer->add_option("--out", a.out,
                    "Output prefix (--image) or directory (--dataset)");

  auto* eval = app.add_subcommand("eval", "Score predictions");
  eval->add_option("--pred", a.pred, "Directory of <id>.field.fgrid files")
      ->required();
  eval->add_option("--gt", a.gt, "Dataset directory with ground truth");
  eval->add_flag("--polygons", a.polygons,
                 "Score detections against polygons instead of masks");
  eval->add_option("--min-area", a.min_area,
                   "Smallest scored component, pixels");
  eval->add_option("--table", a.table, "Also write the per-image table here");
  eval->add_option("--report", a.report, "Also write the summary here");

  auto* rf = app.add_subcommand("rf", "Receptive-field report");
  rf->add_option("--spec", a.spec, "Network spec file (default: configured)");
  rf->add_option("--input-size", a.input_size, "Square input extent")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    const RunConfig config = resolve_config(a);
    if (*dataset) {
      const fs::path dir = pick(a.out, config.paths.dataset, "output directory");
      const Manifest m = cmd_dataset(config, a.count, dir);
      out << "samples\t" << m.samples.size() << "\nmanifest\t"
          << (dir / kManifestName).string() << '\n';
    } else if (*train) {
      const fs::path data = pick(a.dataset, config.paths.dataset, "dataset");
      const fs::path ckpt =
          pick(a.checkpoint, config.paths.checkpoint, "checkpoint path");
      const fs::path log = !a.log.empty() ? a.log
                           : !config.paths.log.empty()
                               ? config.paths.log
                               : fs::path(ckpt.string() + ".log.tsv");
      const std::vector<EpochLog> history = cmd_train(config, data, ckpt, log);
      out << "epochs\t" << history.size() << '\n';
      if (!history.empty())
        out << "final\t" << format_epoch_line(history.back()) << '\n';
      out << "checkpoint\t" << ckpt.string() << "\nlog\t" << log.string()
          << '\n';
    } else if (*infer) {
      const fs::path ckpt =
          pick(a.checkpoint, config.paths.checkpoint, "checkpoint");
      const fs::path dest = pick(a.out, config.paths.output, "output");
      if (!a.image.empty()) {
        cmd_infer(config, ckpt, a.image, dest);
        out << "field\t" << dest.string() << ".field.fgrid\n";
      } else {
        const fs::path data = pick(a.dataset, config.paths.dataset, "dataset");
        cmd_infer_dataset(config, ckpt, data, dest);
        out << "predictions\t" << dest.string() << '\n';
      }
    } else if (*eval) {
      const fs::path gt = pick(a.gt, config.paths.dataset, "ground truth");
      const std::vector<ImageMetrics> rows = cmd_eval(config, a.pred, gt);
      const std::string table = format_metrics_table(rows);
      const std::string report = format_metrics_report(rows);
      if (!a.table.empty()) write_text(a.table, table);
      if (!a.report.empty()) write_text(a.report, report);
      out << table << '\n' << report;
    } else if (*rf) {
      NetworkSpec spec;
      if (a.spec.empty()) {
        spec = config.network();
      } else {
        RunConfig with_spec = config;
        with_spec.filters.clear();
        with_spec.spec_file = a.spec;
        spec = with_spec.network();
      }
      out << cmd_rf(spec, a.input_size);
    }
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}

}  // namespace bldg::cli
