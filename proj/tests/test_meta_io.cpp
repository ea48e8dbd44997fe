#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "ncf/engine.hpp"
#include "ncf/errors.hpp"
#include "ncf/meta_io.hpp"

using namespace ncf;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "ncf_io_tests";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

void write_file(const fs::path& p, const std::string& header, const std::vector<float>& payload) {
  std::ofstream out(p, std::ios::binary);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
}

Volume random_volume(std::array<int, 3> shape, uint64_t seed) {
  Volume v = make_volume(shape);
  std::mt19937_64 rng(seed);
  // float-representable values keep MET_FLOAT round trips bit-exact
  for (auto& x : v.data) x = real(float(rng() >> 40) * 0x1.0p-10f);
  return v;
}

}  // namespace

TEST_CASE("load_volume reads a hand-built 2x2x2 MET_FLOAT file") {
  const fs::path p = temp_dir() / "tiny.mha";
  std::vector<float> payload(8);
  for (int i = 0; i < 8; ++i) payload[static_cast<size_t>(i)] = float(i);
  write_file(p,
             "ObjectType = Image\nNDims = 3\nDimSize = 2 2 2\n"
             "ElementSpacing = 1.5 2 2.5\nElementType = MET_FLOAT\nElementDataFile = LOCAL\n",
             payload);
  const Volume v = load_volume(p);
  CHECK(v.shape == std::array<int, 3>{2, 2, 2});
  CHECK(v.spacing[0] == 1.5);
  CHECK(v.spacing[2] == 2.5);
  CHECK(v.unit == IntensityUnit::HU);
  for (int i = 0; i < 8; ++i) CHECK(v.data[static_cast<size_t>(i)] == real(i));
}

TEST_CASE("load_volume reports payload size mismatch") {
  const fs::path p = temp_dir() / "short.mha";
  write_file(p,
             "ObjectType = Image\nNDims = 3\nDimSize = 3 3 3\n"
             "ElementType = MET_FLOAT\nElementDataFile = LOCAL\n",
             std::vector<float>(26));
  CHECK_THROWS_WITH_AS(load_volume(p), doctest::Contains("size mismatch"), io_error);
}

TEST_CASE("load_volume names the offending header line") {
  const fs::path p = temp_dir() / "bad.mha";
  write_file(p,
             "ObjectType = Image\nNDims = 3\nDimSize = 1 1 1\n"
             "ElementByteOrderMSB = True\nElementType = MET_FLOAT\nElementDataFile = LOCAL\n",
             std::vector<float>(1));
  CHECK_THROWS_WITH_AS(load_volume(p), doctest::Contains("ElementByteOrderMSB = True"), io_error);

  write_file(p,
             "ObjectType = Image\nNDims = 3\nDimSize = 1 1 1\n"
             "ElementType = MET_UCHAR\nElementDataFile = LOCAL\n",
             std::vector<float>(1));
  CHECK_THROWS_WITH_AS(load_volume(p), doctest::Contains("MET_UCHAR"), io_error);

  write_file(p, "ObjectType = Polydata\nElementDataFile = LOCAL\n", {});
  CHECK_THROWS_AS(load_volume(p), io_error);
}

TEST_CASE("MET_SHORT files widen to HU reals") {
  const fs::path p = temp_dir() / "short_t.mha";
  std::vector<int16_t> payload = {-1000, 0, 40, 1500, -32768, 32767};
  std::ofstream out(p, std::ios::binary);
  out << "ObjectType = Image\nNDims = 3\nDimSize = 6 1 1\n"
         "ElementType = MET_SHORT\nElementDataFile = LOCAL\n";
  out.write(reinterpret_cast<const char*>(payload.data()), 12);
  out.close();
  const Volume v = load_volume(p);
  CHECK(v.unit == IntensityUnit::HU);
  CHECK(v.data[0] == -1000.0);
  CHECK(v.data[3] == 1500.0);
  CHECK(v.data[4] == -32768.0);
}

TEST_CASE("save/load round trip is bit-exact for MET_FLOAT, both layouts") {
  const Volume v = random_volume({5, 4, 3}, 99);
  for (const char* name : {"rt.mha", "rt.mhd"}) {
    const fs::path p = temp_dir() / name;
    save_volume(v, p);
    const Volume r = load_volume(p);
    CHECK(r.shape == v.shape);
    CHECK(r.spacing == v.spacing);
    for (size_t i = 0; i < v.data.size(); ++i) CHECK(r.data[i] == v.data[i]);
  }
}

TEST_CASE("saving twice produces a byte-identical payload") {
  const Volume v = random_volume({4, 4, 4}, 7);
  const fs::path p1 = temp_dir() / "a.mha";
  const fs::path p2 = temp_dir() / "b.mha";
  save_volume(v, p1);
  save_volume(load_volume(p1), p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}

TEST_CASE("normalized volumes persist their tag") {
  Volume v = random_volume({3, 3, 3}, 5);
  for (auto& x : v.data) x = std::min(real(1), std::max(real(0), x / 2000));
  v.unit = IntensityUnit::Normalized;
  const fs::path p = temp_dir() / "norm.mha";
  save_volume(v, p);
  std::ifstream in(p, std::ios::binary);
  std::string head(256, '\0');
  in.read(head.data(), 256);
  CHECK(head.find("NCF_NORMALIZED=1") != std::string::npos);
  CHECK(load_volume(p).unit == IntensityUnit::Normalized);
}

TEST_CASE("field export/import round trips units, spacing, and payload bits") {
  std::mt19937_64 rng(123);
  VectorField f = make_field({4, 3, 5}, FieldUnit::VoxelDisplacement);
  f.spacing = {1.75, 1.25, 1.75};
  for (auto& x : f.data.data) x = real(rng() >> 11) * real(0x1.0p-53) * 8 - 4;
  const fs::path p = temp_dir() / "field.mha";
  engine::export_field(f, p);
  const VectorField r = engine::import_field(p);
  CHECK(r.unit == FieldUnit::VoxelDisplacement);
  CHECK(r.spacing == f.spacing);
  CHECK(r.data.shape == f.data.shape);
  for (size_t i = 0; i < f.data.data.size(); ++i) CHECK(r.data.data[i] == f.data.data[i]);

  f.unit = FieldUnit::NormalizedOffset;
  engine::export_field(f, p);
  CHECK(engine::import_field(p).unit == FieldUnit::NormalizedOffset);
}

TEST_CASE("import_field rejects wrong channel counts and missing tags") {
  const fs::path p = temp_dir() / "scalar_field.mha";
  write_file(p,
             "ObjectType = Image\nNDims = 3\nDimSize = 2 2 2\n"
             "Comment = NCF_FIELD_UNIT=voxel NCF_FIELD_CHANNELS=1\n"
             "ElementType = MET_FLOAT\nElementDataFile = LOCAL\n",
             std::vector<float>(8));
  CHECK_THROWS_WITH_AS(engine::import_field(p), doctest::Contains("1 channel"), io_error);

  write_file(p,
             "ObjectType = Image\nNDims = 3\nDimSize = 2 2 6\n"
             "ElementType = MET_FLOAT\nElementDataFile = LOCAL\n",
             std::vector<float>(24));
  CHECK_THROWS_WITH_AS(engine::import_field(p), doctest::Contains("NCF_FIELD_UNIT"), io_error);
}

TEST_CASE("reader ignores benign extra keys and rejects compression") {
  const fs::path p = temp_dir() / "extra.mha";
  write_file(p,
             "ObjectType = Image\nNDims = 3\nTransformMatrix = 1 0 0 0 1 0 0 0 1\n"
             "Offset = 0 0 0\nDimSize = 2 1 1\nElementType = MET_FLOAT\n"
             "ElementDataFile = LOCAL\n",
             std::vector<float>(2));
  CHECK_NOTHROW(load_volume(p));

  write_file(p,
             "ObjectType = Image\nNDims = 3\nCompressedData = True\nDimSize = 2 1 1\n"
             "ElementType = MET_FLOAT\nElementDataFile = LOCAL\n",
             std::vector<float>(2));
  CHECK_THROWS_WITH_AS(load_volume(p), doctest::Contains("CompressedData"), io_error);
}
