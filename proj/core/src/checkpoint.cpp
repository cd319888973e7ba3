#include "bldgnet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "binary_io.hpp"

namespace bldg {

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_u32(out, kCheckpointVersion);
  const std::string text = format_network_spec(ckpt.spec);
  detail::write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  detail::write_u32(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    detail::write_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    detail::write_u32(out, static_cast<std::uint32_t>(a.values.rank()));
    for (std::size_t d : a.values.shape())
      detail::write_u32(out, static_cast<std::uint32_t>(d));
    detail::write_f32_array(out, a.values.values());
  }
  if (!out) throw IoError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw ParseError("checkpoint: bad magic");
  const std::uint32_t version = detail::read_u32(in, "checkpoint version");
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported version " +
                     std::to_string(version));
  Checkpoint ckpt;
  const std::uint32_t text_len = detail::read_u32(in, "checkpoint spec length");
  ckpt.spec = parse_network_spec(detail::read_string(in, text_len, "spec"));
  const std::uint32_t count = detail::read_u32(in, "checkpoint array count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    const std::uint32_t name_len = detail::read_u32(in, "array name length");
    a.name = detail::read_string(in, name_len, "array name");
    const std::uint32_t rank = detail::read_u32(in, "array rank");
    if (rank > 8) throw ParseError("checkpoint: array '" + a.name +
                                   "' has implausible rank " +
                                   std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = detail::read_u32(in, "array extent");
    std::vector<float> data(shape_volume(shape));
    detail::read_f32_array(in, data, a.name.c_str());
    a.values = Tensor<float>(std::move(shape), std::move(data));
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  try {
    return read_checkpoint(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

template <typename T>
Checkpoint make_checkpoint(const NetworkSpec& spec, const ParamSet<T>& params) {
  Checkpoint ckpt{spec, {}};
  const auto names = params.array_names();
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    ckpt.arrays.push_back(
        {names[2 * i], params.layers[i].filters.template cast<float>()});
    ckpt.arrays.push_back(
        {names[2 * i + 1], params.layers[i].bias.template cast<float>()});
  }
  return ckpt;
}

template <typename T>
ParamSet<T> params_from_checkpoint(const Checkpoint& ckpt) {
  // Shapes come from a freshly initialised set so every array is checked.
  ParamSet<T> params = init_params<T>(ckpt.spec, 0);
  const auto names = params.array_names();
  if (ckpt.arrays.size() != names.size()) {
    throw ParseError("checkpoint holds " + std::to_string(ckpt.arrays.size()) +
                     " arrays, spec needs " + std::to_string(names.size()));
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    const NamedArray& a = ckpt.arrays[i];
    Tensor<T>& dst = i % 2 == 0 ? params.layers[i / 2].filters
                                : params.layers[i / 2].bias;
    if (a.name != names[i]) {
      throw ParseError("checkpoint array " + std::to_string(i) + " is '" +
                       a.name + "', expected '" + names[i] + "'");
    }
    if (a.values.shape() != dst.shape()) {
      throw ParseError("checkpoint array '" + a.name + "' has shape " +
                       shape_string(a.values.shape()) + ", expected " +
                       shape_string(dst.shape()));
    }
    dst = a.values.template cast<T>();
  }
  return params;
}

template Checkpoint make_checkpoint(const NetworkSpec&, const ParamSet<float>&);
template Checkpoint make_checkpoint(const NetworkSpec&,
                                    const ParamSet<double>&);
template ParamSet<float> params_from_checkpoint<float>(const Checkpoint&);
template ParamSet<double> params_from_checkpoint<double>(const Checkpoint&);

}  // namespace bldg
