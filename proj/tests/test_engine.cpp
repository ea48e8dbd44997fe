#include <doctest.h>

#include <filesystem>
#include <algorithm>
#include <fstream>
#include <random>

#include "ncf/engine.hpp"
#include "ncf/errors.hpp"
#include "ncf/metrics.hpp"
#include "test_util.hpp"

using namespace ncf;
using namespace ncf::test;
namespace E = ncf::engine;
namespace fs = std::filesystem;

namespace {

Volume random_normalized(std::array<int, 3> shape, uint64_t seed) {
  Volume v = make_volume(shape, IntensityUnit::Normalized);
  std::mt19937_64 rng(seed);
  for (auto& x : v.data) x = urand(rng);
  return v;
}

E::RunConfig quick_config(int iterations) {
  E::RunConfig cfg;
  cfg.iterations = iterations;
  cfg.ssim_window = 5;
  cfg.log_every = 0;
  return cfg;
}

}  // namespace

TEST_CASE("warp_image: zero field is the identity, bitwise") {
  const Volume v = random_normalized({6, 5, 4}, 2);
  const VectorField zero = make_field({6, 5, 4}, FieldUnit::VoxelDisplacement);
  const Volume out = E::warp_image(v, zero, E::Interp::Linear);
  CHECK(out.data == v.data);
}

TEST_CASE("warp_image: integer x-shift with clamped border") {
  const Volume v = random_normalized({5, 3, 3}, 3);
  VectorField shift = make_field({5, 3, 3}, FieldUnit::VoxelDisplacement);
  const int64_t n = spatial_numel(5, 3, 3);
  for (int64_t i = 0; i < n; ++i) shift.data[i] = 1.0;
  const Volume out = E::warp_image(v, shift, E::Interp::Linear);
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 4; ++x)
        CHECK(out.at(x, y, z) == v.at(x + 1, y, z));
      CHECK(out.at(4, y, z) == v.at(4, y, z));  // clamped column
    }
}

TEST_CASE("warp_image: nearest keeps label sets and rounds ties down") {
  Volume mask = make_volume({4, 4, 4}, IntensityUnit::Label);
  std::mt19937_64 rng(4);
  for (auto& x : mask.data) x = rng() % 2 ? 1.0 : 0.0;
  VectorField f = make_field({4, 4, 4}, FieldUnit::VoxelDisplacement);
  for (auto& x : f.data.data) x = urand(rng, -1.2, 1.2);
  const Volume out = E::warp_image(mask, f, E::Interp::Nearest);
  for (real v : out.data) CHECK((v == 0.0 || v == 1.0));

  // tie at +0.5: rounds toward the lower index
  Volume line = make_volume({3, 1, 1});
  line.data = {10, 20, 30};
  VectorField half = make_field({3, 1, 1}, FieldUnit::VoxelDisplacement);
  half.data[0] = half.data[1] = half.data[2] = 0.5;
  const Volume r = E::warp_image(line, half, E::Interp::Nearest);
  CHECK(r.data[0] == 10.0);
  CHECK(r.data[1] == 20.0);
  CHECK(r.data[2] == 30.0);
}

TEST_CASE("warp_image validates units and shapes") {
  const Volume v = random_normalized({4, 4, 4}, 5);
  VectorField f = make_field({4, 4, 4}, FieldUnit::NormalizedOffset);
  CHECK_THROWS_AS(E::warp_image(v, f, E::Interp::Linear), std::invalid_argument);
  VectorField small = make_field({3, 4, 4}, FieldUnit::VoxelDisplacement);
  CHECK_THROWS_AS(E::warp_image(v, small, E::Interp::Linear), std::invalid_argument);
}

TEST_CASE("exported fields re-imported produce the identical warped volume") {
  std::mt19937_64 rng(6);
  const Volume v = random_normalized({7, 6, 5}, 7);
  VectorField f = make_field({7, 6, 5}, FieldUnit::VoxelDisplacement);
  for (auto& x : f.data.data) x = urand(rng, -2, 2);
  const fs::path p = fs::temp_directory_path() / "ncf_engine_field.mha";
  E::export_field(f, p);
  const VectorField r = E::import_field(p);
  const Volume w1 = E::warp_image(v, f, E::Interp::Linear);
  const Volume w2 = E::warp_image(v, r, E::Interp::Linear);
  CHECK(w1.data == w2.data);
}

TEST_CASE("run config: defaults, unknown keys, validation") {
  const fs::path p = fs::temp_directory_path() / "ncf_cfg_test.json";
  {
    std::ofstream out(p);
    out << R"({"iterations": 25, "lr": 0.5, "gamma": 0.2, "bogus": 1})";
  }
  const auto loaded = E::load_run_config(p);
  CHECK(loaded.config.iterations == 25);
  CHECK(loaded.config.weights.gamma == 0.2);
  CHECK(loaded.config.lr0 == 1e-3);  // untouched default
  REQUIRE(loaded.unknown_keys.size() == 2);
  CHECK(std::count(loaded.unknown_keys.begin(), loaded.unknown_keys.end(), "lr") == 1);
  CHECK(std::count(loaded.unknown_keys.begin(), loaded.unknown_keys.end(), "bogus") == 1);

  {
    std::ofstream out(p);
    out << R"({"iterations": 0})";
  }
  CHECK_THROWS_AS(E::load_run_config(p), std::invalid_argument);
  {
    std::ofstream out(p);
    out << R"({"ssim_window": 4})";
  }
  CHECK_THROWS_AS(E::load_run_config(p), std::invalid_argument);
  {
    std::ofstream out(p);
    out << "not json";
  }
  CHECK_THROWS_AS(E::load_run_config(p), io_error);
}

TEST_CASE("register_pair: identity input stays at the exact zero fixed point") {
  const auto c = metrics::gen_synthetic_case({16, 16, 16}, 21, 0.0);
  const auto res = E::register_pair(c.fixed, c.fixed, quick_config(8));
  REQUIRE(res.loss_history.size() == 8);
  CHECK(res.loss_history.front().total == 0.0);
  CHECK(res.loss_history.back().total == 0.0);
  for (real v : res.offset.data.data) CHECK(v == 0.0);
  CHECK(res.warped.data == c.fixed.data);
}

TEST_CASE("register_pair: loss decreases on a deformed pair") {
  const auto c = metrics::gen_synthetic_case({16, 16, 16}, 22, 1.5);
  const auto res = E::register_pair(c.fixed, c.moving, quick_config(60));
  REQUIRE(res.loss_history.size() == 60);
  CHECK(res.loss_history.back().total < res.loss_history.front().total);
  CHECK(res.loss_history.back().total < 0.5 * res.loss_history.front().total);
  CHECK(res.final_lr < 1e-4);
  CHECK(res.wall_time > 0.0);
}

TEST_CASE("register_pair: deterministic reruns are bit-identical") {
  const auto c = metrics::gen_synthetic_case({16, 16, 16}, 23, 1.0);
  E::RunConfig cfg = quick_config(12);
  cfg.deterministic = true;
  cfg.seed = 5;
  const auto a = E::register_pair(c.fixed, c.moving, cfg);
  const auto b = E::register_pair(c.fixed, c.moving, cfg);
  CHECK(a.offset.data.data == b.offset.data.data);
  CHECK(a.warped.data == b.warped.data);
  REQUIRE(a.loss_history.size() == b.loss_history.size());
  for (size_t i = 0; i < a.loss_history.size(); ++i) {
    CHECK(a.loss_history[i].total == b.loss_history[i].total);
    CHECK(a.loss_history[i].photometric == b.loss_history[i].photometric);
    CHECK(a.loss_history[i].ssim == b.loss_history[i].ssim);
    CHECK(a.loss_history[i].occupancy == b.loss_history[i].occupancy);
  }
}

TEST_CASE("register_pair: single iteration bookkeeping") {
  const auto c = metrics::gen_synthetic_case({16, 16, 16}, 24, 1.0);
  const auto res = E::register_pair(c.fixed, c.moving, quick_config(1));
  CHECK(res.loss_history.size() == 1);
  CHECK(res.final_lr == 1e-3);
}

TEST_CASE("register_pair rejects mismatched shapes and oversized windows") {
  const Volume a = random_normalized({8, 8, 8}, 1);
  const Volume b = random_normalized({8, 8, 9}, 1);
  CHECK_THROWS_AS(E::register_pair(a, b, quick_config(1)), std::invalid_argument);

  E::RunConfig cfg = quick_config(1);
  cfg.ssim_window = 9;
  const Volume c = random_normalized({8, 8, 8}, 2);
  CHECK_THROWS_AS(E::register_pair(a, c, cfg), std::invalid_argument);
}

TEST_CASE("loss CSV has one row per iteration with the schedule") {
  const auto c = metrics::gen_synthetic_case({16, 16, 16}, 25, 1.0);
  const E::RunConfig cfg = quick_config(5);
  const auto res = E::register_pair(c.fixed, c.moving, cfg);
  const fs::path p = fs::temp_directory_path() / "ncf_loss_test.csv";
  E::write_loss_csv(p, res.loss_history, cfg);
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,lr,total,photometric,ssim,occupancy");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 5);
}

TEST_CASE("normalization policy: HU window for HU, fixed min-max otherwise") {
  Volume hu = make_volume({4, 1, 1});
  hu.data = {-1000, 0, 1000, 2000};
  hu.unit = IntensityUnit::HU;
  const auto [f1, m1] = E::normalize_pair(hu, hu, quick_config(1));
  CHECK(f1.data[0] == 0.0);
  CHECK(f1.data[1] == 0.5);
  CHECK(f1.data[3] == 1.0);

  Volume pre = make_volume({4, 1, 1}, IntensityUnit::Normalized);
  pre.data = {0.2, 0.4, 0.6, 0.8};
  const auto [f2, m2] = E::normalize_pair(pre, pre, quick_config(1));
  CHECK(f2.data[0] == 0.0);   // min-max of the fixed image
  CHECK(f2.data[3] == 1.0);
}
