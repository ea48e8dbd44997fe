#include <doctest.h>

#include <random>

#include "ncf/volume.hpp"

using namespace ncf;

TEST_CASE("make_grid endpoints and size-1 axes") {
  const Grid g = make_grid({2, 2, 2});
  const int64_t n = 8;
  for (int64_t i = 0; i < n; ++i) {
    CHECK(std::abs(g.coords[i]) == 1.0);
    CHECK(std::abs(g.coords[n + i]) == 1.0);
    CHECK(std::abs(g.coords[2 * n + i]) == 1.0);
  }

  const Grid line = make_grid({3, 1, 1});
  CHECK(line.coords[0] == -1.0);
  CHECK(line.coords[1] == 0.0);
  CHECK(line.coords[2] == 1.0);
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(line.coords[3 + i] == 0.0);  // y
    CHECK(line.coords[6 + i] == 0.0);  // z
  }
}

TEST_CASE("make_grid matches the closed form everywhere on (5,4,3)") {
  const std::array<int, 3> shape{5, 4, 3};
  const Grid g = make_grid(shape);
  const int64_t n = spatial_numel(5, 4, 3);
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 5; ++x) {
        const int64_t i = idx3(x, y, z, 5, 4);
        const int idx[3] = {x, y, z};
        for (int a = 0; a < 3; ++a) {
          const double expect = -1.0 + 2.0 * idx[a] / (shape[static_cast<size_t>(a)] - 1);
          CHECK(g.coords[a * n + i] == doctest::Approx(expect).epsilon(1e-14));
        }
      }
}

TEST_CASE("grid coordinates convert back to exact indices on dyadic sizes") {
  // step 2/(S-1) is exactly representable for S = 2^j + 1 (and S = 2)
  for (int s : {2, 3, 5, 9, 17, 33, 65}) {
    const Grid g = make_grid({s, 1, 1});
    for (int k = 0; k < s; ++k) CHECK(norm_to_voxel(g.coords[k], s) == real(k));
  }
}

TEST_CASE("make_grid rejects non-positive axes") {
  CHECK_THROWS_AS(make_grid({0, 4, 4}), std::invalid_argument);
}

TEST_CASE("normalize_intensity endpoints, midpoint, clamping") {
  Volume v = make_volume({4, 1, 1});
  v.data = {-1000.0, 0.0, 1000.0, 1500.0};
  const Volume out = normalize_intensity(v, -1000.0, 1000.0);
  CHECK(out.unit == IntensityUnit::Normalized);
  CHECK(out.data[0] == 0.0);
  CHECK(out.data[1] == 0.5);
  CHECK(out.data[2] == 1.0);
  CHECK(out.data[3] == 1.0);  // clamped

  CHECK_THROWS_AS(normalize_intensity(v, 10.0, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(normalize_intensity(v, 10.0, -10.0), std::invalid_argument);
}

TEST_CASE("normalize_intensity is monotone and idempotent on normalized data") {
  std::mt19937_64 rng(11);
  Volume v = make_volume({6, 5, 4});
  for (auto& x : v.data) x = real(rng() >> 11) * real(0x1.0p-53) * 3000 - 1500;
  const Volume a = normalize_intensity(v, -1000.0, 1000.0);
  for (size_t i = 0; i + 1 < v.data.size(); ++i)
    if (v.data[i] <= v.data[i + 1]) CHECK(a.data[i] <= a.data[i + 1]);
  const Volume b = normalize_intensity(a, 0.0, 1.0);
  for (size_t i = 0; i < a.data.size(); ++i) CHECK(b.data[i] == a.data[i]);
}

TEST_CASE("field unit conversion uses the per-axis half extent") {
  VectorField f = make_field({5, 3, 1}, FieldUnit::NormalizedOffset);
  f.data.fill(1.0);
  const VectorField v = convert_field(f, FieldUnit::VoxelDisplacement);
  const int64_t n = spatial_numel(5, 3, 1);
  CHECK(v.data[0] == 2.0);          // (5-1)/2
  CHECK(v.data[n] == 1.0);          // (3-1)/2
  CHECK(v.data[2 * n] == 0.0);      // size-1 axis
  const VectorField back = convert_field(v, FieldUnit::NormalizedOffset);
  CHECK(back.data[0] == 1.0);
  CHECK(back.data[n] == 1.0);
  CHECK(back.data[2 * n] == 0.0);  // size-1 axis collapses to zero
}
