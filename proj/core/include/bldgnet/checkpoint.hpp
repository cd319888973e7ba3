#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "bldgnet/netgraph.hpp"

namespace bldg {

// Binary checkpoint layout (little-endian):
//   "BLDGCKPT"            8-byte magic
//   u32 version           (1)
//   u32 n, n bytes        network spec text (format_network_spec)
//   u32 array count
//   per array: u32 name length, name bytes, u32 rank, u32 extents[rank],
//              f32 values[product(extents)]
inline constexpr char kCheckpointMagic[8] = {'B', 'L', 'D', 'G',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Tensor<float> values;
};

struct Checkpoint {
  NetworkSpec spec;
  std::vector<NamedArray> arrays;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
Checkpoint make_checkpoint(const NetworkSpec& spec, const ParamSet<T>& params);

// Rebuilds a parameter set (zero momentum) and validates every array against
// the stored network spec.
template <typename T>
ParamSet<T> params_from_checkpoint(const Checkpoint& ckpt);

}  // namespace bldg
