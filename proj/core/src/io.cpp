#include "bldgnet/io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"

namespace bldg {

namespace {

constexpr char kFgridMagic[4] = {'F', 'G', 'R', 'D'};

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_fgrid(std::ostream& out, const Tensor<float>& grid) {
  if (grid.rank() != 2 && grid.rank() != 3)
    throw ShapeError("FGRID holds H x W or H x W x C grids, got " +
                     shape_string(grid.shape()));
  out.write(kFgridMagic, 4);
  detail::write_u32(out, kFgridVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(grid.dim(0)));
  detail::write_u32(out, static_cast<std::uint32_t>(grid.dim(1)));
  detail::write_u32(out, static_cast<std::uint32_t>(grid.channels()));
  detail::write_f32_array(out, grid.values());
  if (!out) throw IoError("FGRID write failed");
}

Tensor<float> read_fgrid(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kFgridMagic, 4) != 0)
    throw ParseError("not an FGRID stream (bad magic)");
  const std::uint32_t version = detail::read_u32(in, "FGRID version");
  if (version != kFgridVersion)
    throw ParseError("unsupported FGRID version " + std::to_string(version));
  const std::uint32_t h = detail::read_u32(in, "FGRID height");
  const std::uint32_t w = detail::read_u32(in, "FGRID width");
  const std::uint32_t c = detail::read_u32(in, "FGRID channels");
  const std::uint64_t n = std::uint64_t{h} * w * c;
  if (n > (std::uint64_t{1} << 32)) throw ParseError("FGRID too large");
  std::vector<float> data(static_cast<std::size_t>(n));
  detail::read_f32_array(in, data, "FGRID payload");
  return Tensor<float>({h, w, c}, std::move(data));
}

void save_fgrid(const std::filesystem::path& path, const Tensor<float>& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_fgrid(out, grid);
}

Tensor<float> load_fgrid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return read_fgrid(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_real_map(const std::filesystem::path& path, const RealMap& map) {
  save_fgrid(path, map.cast<float>());
}

RealMap load_real_map(const std::filesystem::path& path) {
  const Tensor<float> g = load_fgrid(path);
  if (g.dim(2) != 1)
    throw ParseError(path.string() + ": expected a single-channel FGRID");
  return Tensor<float>({g.dim(0), g.dim(1)}, g.storage()).cast<double>();
}

void save_mask(const std::filesystem::path& path, const Mask& mask) {
  save_fgrid(path, mask.cast<float>());
}

Mask load_mask(const std::filesystem::path& path) {
  const RealMap m = load_real_map(path);
  Mask out(m.shape());
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] != 0.0 && m[i] != 1.0)
      throw ParseError(path.string() + ": mask value " +
                       std::to_string(m[i]) + " is not 0/1");
    out[i] = static_cast<std::uint8_t>(m[i]);
  }
  return out;
}

void save_png(const std::filesystem::path& path, const Tensor<double>& rgb) {
  if (rgb.rank() != 3 || rgb.dim(2) != 3)
    throw ShapeError("save_png: expected H x W x 3, got " +
                     shape_string(rgb.shape()));
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"),
                                           &std::fclose);
  if (!fp) throw IoError("cannot open '" + path.string() + "' for writing");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  const auto h = static_cast<png_uint_32>(rgb.dim(0));
  const auto w = static_cast<png_uint_32>(rgb.dim(1));
  std::vector<png_byte> pixels(static_cast<std::size_t>(h) * w * 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double v = std::clamp(rgb[i], 0.0, 1.0);
    pixels[i] = static_cast<png_byte>(std::lround(v * 255.0));
  }
  std::vector<png_bytep> rows(h);
  for (png_uint_32 r = 0; r < h; ++r)
    rows[r] = pixels.data() + static_cast<std::size_t>(r) * w * 3;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor<double> load_png(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"),
                                           &std::fclose);
  if (!fp) throw IoError("cannot open '" + path.string() + "'");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw ParseError(path.string() + ": not a PNG file");
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path.string() + ": corrupt PNG");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  // Normalise any input to 8-bit RGB.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(w) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path.string() + ": unsupported PNG layout");
  }
  pixels.resize(static_cast<std::size_t>(h) * w * 3);
  rows.resize(h);
  for (png_uint_32 r = 0; r < h; ++r)
    rows[r] = pixels.data() + static_cast<std::size_t>(r) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor<double> img = Tensor<double>::hwc(h, w, 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) img[i] = pixels[i] / 255.0;
  return img;
}

std::string polygons_to_geojson(const std::vector<Polygon>& polygons) {
  nlohmann::json features = nlohmann::json::array();
  for (const Polygon& p : polygons) {
    nlohmann::json ring = nlohmann::json::array();
    for (const Point& v : p.vertices) ring.push_back({v.x, v.y});
    if (!p.vertices.empty())
      ring.push_back({p.vertices.front().x, p.vertices.front().y});
    features.push_back({{"type", "Feature"},
                        {"properties", nlohmann::json::object()},
                        {"geometry",
                         {{"type", "Polygon"},
                          {"coordinates", nlohmann::json::array({ring})}}}});
  }
  nlohmann::json doc = {{"type", "FeatureCollection"}, {"features", features}};
  return doc.dump(1) + "\n";
}

std::vector<Polygon> polygons_from_geojson(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("GeoJSON: ") + e.what());
  }
  if (doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array())
    throw ParseError("GeoJSON: expected a FeatureCollection");
  std::vector<Polygon> out;
  std::size_t index = 0;
  for (const auto& f : doc["features"]) {
    const std::string where = "GeoJSON feature " + std::to_string(index++);
    if (!f.contains("geometry") || !f["geometry"].is_object())
      throw ParseError(where + ": missing geometry");
    const auto& g = f["geometry"];
    if (g.value("type", "") != "Polygon")
      throw ParseError(where + ": only Polygon geometries are supported");
    const auto& rings = g.at("coordinates");
    if (!rings.is_array() || rings.size() != 1)
      throw ParseError(where + ": exactly one ring expected (no holes)");
    Polygon p;
    for (const auto& c : rings[0]) {
      if (!c.is_array() || c.size() != 2 || !c[0].is_number() ||
          !c[1].is_number())
        throw ParseError(where + ": coordinates must be [x, y] pairs");
      p.vertices.push_back({c[0].get<double>(), c[1].get<double>()});
    }
    if (p.vertices.size() >= 2 && p.vertices.front() == p.vertices.back())
      p.vertices.pop_back();
    try {
      p.validate();
    } catch (const ValueError& e) {
      throw ParseError(where + ": " + e.what());
    }
    out.push_back(std::move(p));
  }
  return out;
}

void save_polygons(const std::filesystem::path& path,
                   const std::vector<Polygon>& polygons) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << polygons_to_geojson(polygons);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<Polygon> load_polygons(const std::filesystem::path& path) {
  try {
    return polygons_from_geojson(read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace bldg
