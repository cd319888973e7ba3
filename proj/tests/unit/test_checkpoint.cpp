#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "bldgnet/checkpoint.hpp"

using namespace bldg;

namespace {

std::string serialize(const Checkpoint& c) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, c);
  return out.str();
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  NetworkSpec spec;
  spec.stages = {{4, 3, 2, true}, {6, 5, 1, false}, {4, 3, 1, true}};
  spec.fusion_classes = 16;
  const ParamSet<float> p = init_params<float>(spec, 41);
  const Checkpoint c = make_checkpoint(spec, p);
  const std::string bytes = serialize(c);
  CHECK(bytes.compare(0, 8, std::string(kCheckpointMagic, 8)) == 0);

  std::istringstream in(bytes, std::ios::binary);
  const Checkpoint back = read_checkpoint(in);
  CHECK(back.spec == spec);
  REQUIRE(back.arrays.size() == c.arrays.size());
  for (std::size_t i = 0; i < c.arrays.size(); ++i) {
    CHECK(back.arrays[i].name == c.arrays[i].name);
    CHECK(back.arrays[i].values == c.arrays[i].values);
  }
  CHECK(serialize(back) == bytes);
  const ParamSet<float> q = params_from_checkpoint<float>(back);
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    CHECK(q.layers[l].filters == p.layers[l].filters);
    CHECK(q.layers[l].bias == p.layers[l].bias);
  }

  const auto path = std::filesystem::temp_directory_path() / "bldgnet_ckpt_test.bin";
  save_checkpoint(path, c);
  CHECK(serialize(load_checkpoint(path)) == bytes);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint rejects damaged input") {
  NetworkSpec spec;
  spec.stages = {{2, 3, 2, true}};
  spec.fusion_classes = 4;
  const std::string bytes = serialize(make_checkpoint(spec, init_params<double>(spec, 1)));

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream a(bad_magic);
  CHECK_THROWS_AS(read_checkpoint(a), ParseError);

  std::istringstream b(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(b), ParseError);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), IoError);
}
