#include <doctest.h>

#include <random>

#include "ncf/engine.hpp"
#include "ncf/losses.hpp"
#include "ncf/metrics.hpp"
#include "test_util.hpp"

using namespace ncf;
using namespace ncf::test;
namespace X = ncf::metrics;

namespace {

Volume binary_volume(std::array<int, 3> shape, const std::vector<int64_t>& ones) {
  Volume v = make_volume(shape, IntensityUnit::Label);
  for (int64_t i : ones) v.data[static_cast<size_t>(i)] = 1.0;
  return v;
}

}  // namespace

TEST_CASE("dice basics, symmetry, and the empty convention") {
  const auto a = binary_volume({4, 4, 4}, {1, 2, 3, 9});
  const auto b = binary_volume({4, 4, 4}, {2, 3, 10, 11});
  CHECK(X::dice(a, a) == 1.0);
  CHECK(X::dice(a, b) == doctest::Approx(2.0 * 2 / 8));
  CHECK(X::dice(a, b) == X::dice(b, a));
  CHECK(X::dice(binary_volume({2, 2, 2}, {}), binary_volume({2, 2, 2}, {})) == 1.0);
  CHECK(X::dice(binary_volume({2, 2, 2}, {0}), binary_volume({2, 2, 2}, {1})) == 0.0);

  Volume graded = make_volume({2, 2, 2});
  graded.data[0] = 0.5;
  CHECK_THROWS_AS(X::dice(graded, a), std::invalid_argument);
}

TEST_CASE("dice on 100/100 masks with 60 shared voxels") {
  std::vector<int64_t> av, bv;
  for (int64_t i = 0; i < 100; ++i) av.push_back(i);
  for (int64_t i = 40; i < 140; ++i) bv.push_back(i);
  CHECK(X::dice(binary_volume({10, 10, 10}, av), binary_volume({10, 10, 10}, bv)) ==
        doctest::Approx(0.6));
}

TEST_CASE("endpoint error: exact cases and the scalar-loop oracle") {
  std::mt19937_64 rng(3);
  VectorField gt = make_field({5, 4, 3}, FieldUnit::VoxelDisplacement);
  for (auto& v : gt.data.data) v = urand(rng, -2, 2);
  CHECK(X::endpoint_error(gt, gt).mean == 0.0);
  CHECK(X::endpoint_error(gt, gt).max == 0.0);

  VectorField shifted = gt;
  const int64_t n = spatial_numel(5, 4, 3);
  for (int64_t i = 0; i < n; ++i) shifted.data[i] += 1.0;  // +1 along x
  const auto e = X::endpoint_error(shifted, gt);
  CHECK(e.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e.max == doctest::Approx(1.0).epsilon(1e-12));

  VectorField pred = make_field({5, 4, 3}, FieldUnit::VoxelDisplacement);
  for (auto& v : pred.data.data) v = urand(rng, -2, 2);
  real acc = 0, mx = 0;
  for (int64_t i = 0; i < n; ++i) {
    real s = 0;
    for (int a = 0; a < 3; ++a) {
      const real d = pred.data[a * n + i] - gt.data[a * n + i];
      s += d * d;
    }
    acc += std::sqrt(s);
    mx = std::max(mx, std::sqrt(s));
  }
  const auto r = X::endpoint_error(pred, gt);
  CHECK(r.mean == doctest::Approx(acc / real(n)).epsilon(1e-12));
  CHECK(r.max == doctest::Approx(mx).epsilon(1e-12));

  VectorField wrong_unit = gt;
  wrong_unit.unit = FieldUnit::NormalizedOffset;
  CHECK_THROWS_AS(X::endpoint_error(pred, wrong_unit), std::invalid_argument);
}

TEST_CASE("endpoint error restricted to a mask and the triangle inequality") {
  std::mt19937_64 rng(4);
  VectorField a = make_field({4, 4, 4}, FieldUnit::VoxelDisplacement);
  VectorField b = a, c = a;
  for (auto& v : a.data.data) v = urand(rng, -1, 1);
  for (auto& v : b.data.data) v = urand(rng, -1, 1);
  for (auto& v : c.data.data) v = urand(rng, -1, 1);
  const auto mask = binary_volume({4, 4, 4}, {0, 5, 17, 33, 60});
  const real ac = X::endpoint_error(a, c, &mask).mean;
  const real ab = X::endpoint_error(a, b, &mask).mean;
  const real bc = X::endpoint_error(b, c, &mask).mean;
  CHECK(ac <= ab + bc + 1e-12);
  CHECK(X::endpoint_error(a, b, &mask).mean == doctest::Approx(X::endpoint_error(b, a, &mask).mean));
}

TEST_CASE("jacobian folding: identity, translation, reflection") {
  VectorField zero = make_field({5, 5, 5}, FieldUnit::VoxelDisplacement);
  CHECK(X::jacobian_folding(zero) == 0.0);

  VectorField shift = zero;
  for (int64_t i = 0; i < spatial_numel(5, 5, 5); ++i) shift.data[i] = 1.7;
  CHECK(X::jacobian_folding(shift) == 0.0);

  // u_x = -2x flips orientation everywhere
  VectorField reflect = zero;
  for (int z = 0; z < 5; ++z)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) reflect.data[idx3(x, y, z, 5, 5)] = real(-2 * x);
  CHECK(X::jacobian_folding(reflect) == 1.0);

  VectorField thin = make_field({5, 5, 2}, FieldUnit::VoxelDisplacement);
  CHECK_THROWS_AS(X::jacobian_folding(thin), std::invalid_argument);
}

TEST_CASE("jacobian folding is invariant to uniform translations") {
  std::mt19937_64 rng(44);
  VectorField f = make_field({6, 6, 6}, FieldUnit::VoxelDisplacement);
  for (auto& v : f.data.data) v = urand(rng, -1.5, 1.5);
  const real base = X::jacobian_folding(f);
  VectorField shifted = f;
  const int64_t n = spatial_numel(6, 6, 6);
  for (int64_t i = 0; i < n; ++i) {
    shifted.data[i] += 3.25;
    shifted.data[n + i] -= 1.5;
    shifted.data[2 * n + i] += 0.75;
  }
  CHECK(X::jacobian_folding(shifted) == base);
}

TEST_CASE("tre: cancellation and scaled residuals") {
  VectorField field = make_field({6, 6, 6}, FieldUnit::VoxelDisplacement);
  X::Landmarks lm;
  lm.pairs.push_back({2, 3, 4, 2, 3, 4});
  CHECK(X::tre(lm, field, {2, 1, 1}) == 0.0);

  const int64_t n = spatial_numel(6, 6, 6);
  for (int64_t i = 0; i < n; ++i) field.data[i] = 1.0;  // +1 voxel along x

  X::Landmarks matched;
  matched.pairs.push_back({2, 3, 4, 3, 3, 4});
  CHECK(X::tre(matched, field, {2, 1, 1}) == doctest::Approx(0.0));

  X::Landmarks identical;
  identical.pairs.push_back({2, 3, 4, 2, 3, 4});
  CHECK(X::tre(identical, field, {2, 1, 1}) == doctest::Approx(2.0));

  X::Landmarks outside;
  outside.pairs.push_back({7, 0, 0, 0, 0, 0});
  CHECK_THROWS_AS(X::tre(outside, field, {1, 1, 1}), std::invalid_argument);
}

TEST_CASE("landmark files round trip") {
  X::Landmarks lm;
  lm.pairs.push_back({1.5, 2.25, 3.0, 1.75, 2.0, 3.5});
  lm.pairs.push_back({0, 0, 0, 1, 1, 1});
  const auto path = std::filesystem::temp_directory_path() / "ncf_lm_test.txt";
  X::save_landmarks(lm, path);
  const auto back = X::load_landmarks(path);
  REQUIRE(back.pairs.size() == 2);
  for (size_t i = 0; i < 2; ++i)
    for (int a = 0; a < 6; ++a) CHECK(back.pairs[i][static_cast<size_t>(a)] == lm.pairs[i][static_cast<size_t>(a)]);
}

TEST_CASE("synthetic case: zero displacement degenerates to equal pairs") {
  const auto c = X::gen_synthetic_case({16, 16, 16}, 5, 0.0);
  CHECK(c.fixed.data == c.moving.data);
  CHECK(c.fixed_mask.data == c.moving_mask.data);
  for (real v : c.gt_field.data.data) CHECK(v == 0.0);
}

TEST_CASE("synthetic case: deterministic per seed") {
  const auto a = X::gen_synthetic_case({18, 16, 20}, 11, 2.0);
  const auto b = X::gen_synthetic_case({18, 16, 20}, 11, 2.0);
  CHECK(a.fixed.data == b.fixed.data);
  CHECK(a.moving.data == b.moving.data);
  CHECK(a.gt_field.data.data == b.gt_field.data.data);

  const auto c = X::gen_synthetic_case({18, 16, 20}, 12, 2.0);
  CHECK(a.fixed.data != c.fixed.data);
}

TEST_CASE("synthetic case invariants at a registration-scale displacement") {
  const auto c = X::gen_synthetic_case({32, 32, 32}, 3, 4.0);
  CHECK(X::jacobian_folding(c.gt_field) == 0.0);
  CHECK(X::dice(c.fixed_mask, c.moving_mask) < 0.9);

  // peak displacement magnitude realizes max_disp
  const int64_t n = c.fixed.numel();
  real peak = 0;
  for (int64_t i = 0; i < n; ++i) {
    real s = 0;
    for (int a = 0; a < 3; ++a) s += c.gt_field.data[a * n + i] * c.gt_field.data[a * n + i];
    peak = std::max(peak, std::sqrt(s));
  }
  CHECK(peak == doctest::Approx(4.0).epsilon(1e-6));

  // warping moving through the ground truth recovers fixed up to interpolation
  const Volume warped = engine::warp_image(c.moving, c.gt_field, engine::Interp::Linear);
  CHECK(losses::photometric_loss(c.fixed.as_tensor(), warped.as_tensor()) < 1e-3);

  // masks transport the same way
  const Volume wmask = engine::warp_image(c.moving_mask, c.gt_field, engine::Interp::Nearest);
  CHECK(X::dice(c.fixed_mask, wmask) > 0.95);
}

TEST_CASE("synthetic landmarks satisfy the ground-truth correspondence") {
  const auto c = X::gen_synthetic_case({20, 20, 20}, 9, 2.0);
  const auto lm = X::sample_landmarks(c, 12);
  REQUIRE(lm.pairs.size() == 12);
  CHECK(X::tre(lm, c.gt_field, {1, 1, 1}) < 1e-9);
  for (const auto& p : lm.pairs)
    for (int a = 0; a < 6; ++a) {
      CHECK(p[static_cast<size_t>(a)] >= 0.0);
      CHECK(p[static_cast<size_t>(a)] <= 19.0);
    }
}

TEST_CASE("synthetic case rejects infeasible displacement requests") {
  CHECK_THROWS_AS(X::gen_synthetic_case({16, 16, 16}, 1, 50.0), std::invalid_argument);
  CHECK_THROWS_AS(X::gen_synthetic_case({8, 16, 16}, 1, 1.0), std::invalid_argument);
}
