#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "bldgnet/datapipe.hpp"
#include "bldgnet/tensor.hpp"

namespace bldg {

// FGRID raster: "FGRD", u32 version (1), u32 height, u32 width,
// u32 channels, then height*width*channels little-endian f32, row-major.
inline constexpr std::uint32_t kFgridVersion = 1;

void write_fgrid(std::ostream& out, const Tensor<float>& grid);
Tensor<float> read_fgrid(std::istream& in);  // always H x W x C

void save_fgrid(const std::filesystem::path& path, const Tensor<float>& grid);
Tensor<float> load_fgrid(const std::filesystem::path& path);

// 2-D helpers over FGRID with one channel.
void save_real_map(const std::filesystem::path& path, const RealMap& map);
RealMap load_real_map(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const Mask& mask);
// Rejects values other than 0 and 1.
Mask load_mask(const std::filesystem::path& path);

// 8-bit RGB PNG. Images are H x W x 3 doubles in [0, 1]; values are rounded
// to the nearest 1/255 on write.
void save_png(const std::filesystem::path& path, const Tensor<double>& rgb);
Tensor<double> load_png(const std::filesystem::path& path);

// GeoJSON subset: a FeatureCollection of Polygon features, one outer ring
// each, pixel coordinates, ring explicitly closed.
std::string polygons_to_geojson(const std::vector<Polygon>& polygons);
std::vector<Polygon> polygons_from_geojson(const std::string& text);
void save_polygons(const std::filesystem::path& path,
                   const std::vector<Polygon>& polygons);
std::vector<Polygon> load_polygons(const std::filesystem::path& path);

}  // namespace bldg
