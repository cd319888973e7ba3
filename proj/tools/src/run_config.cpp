#include "run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "bldgnet/error.hpp"

namespace bldg::cli {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& text) {
  const std::string t = trim(text);
  T value{};
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc{} || end != t.data() + t.size() || t.empty())
    throw ParseError("'" + text + "' is not a valid number");
  return value;
}

bool parse_bool(const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ParseError("'" + text + "' is not a boolean (true/false)");
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(item));
  if (out.empty()) throw ParseError("empty list");
  return out;
}

template <typename T, typename Member>
Setter number(Member member) {
  return [member](RunConfig& c, const std::string& v) {
    std::invoke(member, c) = parse_number<T>(v);
  };
}

const std::map<std::string, std::map<std::string, Setter>>& schema() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"run",
       {{"seed", number<std::uint64_t>([](RunConfig& c) -> auto& { return c.seed; })},
        {"precision", number<int>([](RunConfig& c) -> auto& { return c.precision; })}}},
      {"train",
       {{"learning_rate", number<double>([](RunConfig& c) -> auto& { return c.train.learning_rate; })},
        {"momentum", number<double>([](RunConfig& c) -> auto& { return c.train.momentum; })},
        {"weight_decay", number<double>([](RunConfig& c) -> auto& { return c.train.weight_decay; })},
        {"batch_size", number<int>([](RunConfig& c) -> auto& { return c.train.batch_size; })},
        {"epochs", number<int>([](RunConfig& c) -> auto& { return c.train.epochs; })},
        {"validation_fraction", number<double>([](RunConfig& c) -> auto& { return c.train.validation_fraction; })}}},
      {"scene",
       {{"tile", number<int>([](RunConfig& c) -> auto& { return c.scene.tile; })},
        {"min_buildings", number<int>([](RunConfig& c) -> auto& { return c.scene.min_buildings; })},
        {"max_buildings", number<int>([](RunConfig& c) -> auto& { return c.scene.max_buildings; })},
        {"min_size", number<double>([](RunConfig& c) -> auto& { return c.scene.min_size; })},
        {"max_size", number<double>([](RunConfig& c) -> auto& { return c.scene.max_size; })},
        {"max_rotation_deg", number<double>([](RunConfig& c) -> auto& { return c.scene.max_rotation_deg; })},
        {"gap", number<double>([](RunConfig& c) -> auto& { return c.scene.gap; })},
        {"margin", number<double>([](RunConfig& c) -> auto& { return c.scene.margin; })},
        {"texture_noise", number<double>([](RunConfig& c) -> auto& { return c.scene.texture_noise; })},
        {"shadow_length", number<double>([](RunConfig& c) -> auto& { return c.scene.shadow_length; })},
        {"max_retries", number<int>([](RunConfig& c) -> auto& { return c.scene.max_retries; })}}},
      {"network",
       {{"filters", [](RunConfig& c, const std::string& v) { c.filters = parse_int_list(v); }},
        {"spec_file", [](RunConfig& c, const std::string& v) { c.spec_file = trim(v); }},
        {"classes", number<int>([](RunConfig& c) -> auto& { return c.classes; })}}},
      {"eval",
       {{"min_area", number<int>([](RunConfig& c) -> auto& { return c.eval.min_area; })},
        {"connectivity", number<int>([](RunConfig& c) -> auto& { return c.eval.connectivity; })},
        {"polygons", [](RunConfig& c, const std::string& v) { c.eval.polygons = parse_bool(v); }}}},
      {"paths",
       {{"dataset", [](RunConfig& c, const std::string& v) { c.paths.dataset = trim(v); }},
        {"checkpoint", [](RunConfig& c, const std::string& v) { c.paths.checkpoint = trim(v); }},
        {"log", [](RunConfig& c, const std::string& v) { c.paths.log = trim(v); }},
        {"output", [](RunConfig& c, const std::string& v) { c.paths.output = trim(v); }}}},
  };
  return table;
}

void resolve(std::filesystem::path& p, const std::filesystem::path& base) {
  if (!p.empty() && p.is_relative() && !base.empty()) p = base / p;
}

}  // namespace

NetworkSpec RunConfig::network() const {
  if (!spec_file.empty()) {
    std::ifstream in(spec_file);
    if (!in) throw IoError("cannot open spec file '" + spec_file.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      return parse_network_spec(ss.str());
    } catch (const ParseError& e) {
      throw ParseError(spec_file.string() + ": " + e.what());
    }
  }
  if (!filters.empty()) return scaled_network(filters, classes);
  NetworkSpec spec = paper_network();
  spec.fusion_classes = classes;
  return spec;
}

void RunConfig::validate() const {
  if (precision != 32 && precision != 64)
    throw ValueError("precision must be 32 or 64, got " +
                     std::to_string(precision));
  if (!filters.empty() && !spec_file.empty())
    throw ValueError("[network] filters and spec_file are mutually exclusive");
  if (!filters.empty() && filters.size() != paper_network().stages.size())
    throw ValueError("[network] filters needs " +
                     std::to_string(paper_network().stages.size()) +
                     " counts, got " + std::to_string(filters.size()));
  if (eval.min_area < 0) throw ValueError("[eval] min_area must be >= 0");
  if (eval.connectivity != 4 && eval.connectivity != 8)
    throw ValueError("[eval] connectivity must be 4 or 8");
  train.validate();
  scene.validate();
  if (spec_file.empty()) network().validate();
}

RunConfig parse_run_config(const std::string& text,
                           const std::filesystem::path& base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError("config line " + std::to_string(e.line()) + ": " +
                     e.message());
  }
  RunConfig config;
  for (const auto& [section, keys] : tree) {
    const auto known = schema().find(section);
    if (keys.empty() && !keys.data().empty())
      throw ParseError("config key '" + section + "' is outside a section");
    if (known == schema().end())
      throw ParseError("unknown config section [" + section + "]");
    for (const auto& [key, value] : keys) {
      const auto setter = known->second.find(key);
      if (setter == known->second.end())
        throw ParseError("unknown config key '" + key + "' in [" + section +
                         "]");
      try {
        setter->second(config, value.data());
      } catch (const ParseError& e) {
        throw ParseError("[" + section + "] " + key + ": " + e.what());
      }
    }
  }
  resolve(config.spec_file, base_dir);
  resolve(config.paths.dataset, base_dir);
  resolve(config.paths.checkpoint, base_dir);
  resolve(config.paths.log, base_dir);
  resolve(config.paths.output, base_dir);
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str(), path.parent_path());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace bldg::cli
