#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ncf/engine.hpp"
#include "ncf/errors.hpp"
#include "ncf/meta_io.hpp"
#include "ncf/metrics.hpp"
#include "ncf/model.hpp"
#include "ncf/threads.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

int resolve_threads(int flag_value, bool deterministic) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("NCF_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return deterministic ? 1 : 0;  // 0 = all cores
}

ncf::engine::RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return {};
  auto loaded = ncf::engine::load_run_config(path);
  if (!loaded.unknown_keys.empty()) {
    std::cerr << "warning: unknown config keys:";
    for (const auto& k : loaded.unknown_keys) std::cerr << " " << k;
    std::cerr << "\n";
  }
  return loaded.config;
}

uint64_t fnv1a64(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string volume_checksum(const ncf::Volume& v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64,
                fnv1a64(v.data.data(), v.data.size() * sizeof(ncf::real)));
  return buf;
}

double mean_offset_magnitude(const ncf::VectorField& f) {
  const auto sp = f.spatial_shape();
  const int64_t n = ncf::spatial_numel(sp[0], sp[1], sp[2]);
  const ncf::real* x = f.data.data.data();
  const ncf::real* y = x + n;
  const ncf::real* z = y + n;
  double sum = 0;
  for (int64_t i = 0; i < n; ++i)
    sum += std::sqrt(x[i] * x[i] + y[i] * y[i] + z[i] * z[i]);
  return n > 0 ? sum / double(n) : 0.0;
}

int cmd_register(const std::string& fixed_path, const std::string& moving_path,
                 const std::string& config_path, const std::string& out_field,
                 const std::string& out_warped, int threads_flag) {
  const ncf::engine::RunConfig cfg = load_config_or_default(config_path);
  ncf::set_num_threads(resolve_threads(threads_flag, cfg.deterministic));

  const ncf::Volume fixed = ncf::load_volume(fixed_path);
  const ncf::Volume moving = ncf::load_volume(moving_path);

  auto progress = [&](int step, ncf::real lr, const ncf::losses::LossBreakdown& b) {
    std::fprintf(stderr, "step %d/%d lr=%.3e total=%.6f photo=%.6f ssim=%.6f occ=%.6f\n",
                 step, cfg.iterations, lr, b.total, b.photometric, b.ssim, b.occupancy);
  };
  const ncf::engine::RegistrationResult res =
      ncf::engine::register_pair(fixed, moving, cfg, progress);

  ncf::engine::export_field(res.offset, out_field);
  ncf::engine::write_loss_csv(fs::path(out_field).replace_extension(".loss.csv"),
                              res.loss_history, cfg);
  ncf::save_volume(res.warped, out_warped);

  ncf::model::ModelConfig mc;
  mc.hidden_width = cfg.hidden_width;
  mc.sm_channels = cfg.sm_channels;

  json summary;
  summary["initial_total"] = res.loss_history.front().total;
  summary["final_total"] = res.loss_history.back().total;
  summary["final_photometric"] = res.loss_history.back().photometric;
  summary["final_ssim"] = res.loss_history.back().ssim;
  summary["final_occupancy"] = res.loss_history.back().occupancy;
  summary["mean_abs_offset_voxels"] = mean_offset_magnitude(res.offset);
  summary["param_count"] = ncf::model::count_params(mc);
  summary["iterations"] = cfg.iterations;
  summary["final_lr"] = res.final_lr;
  summary["wall_time_s"] = res.wall_time;
  std::cout << summary.dump() << std::endl;
  return kExitOk;
}

int cmd_warp(const std::string& field_path, const std::string& in_path,
             const std::string& interp, const std::string& out_path, int threads_flag) {
  ncf::set_num_threads(resolve_threads(threads_flag, false));
  ncf::VectorField field = ncf::engine::import_field(field_path);
  field = ncf::convert_field(field, ncf::FieldUnit::VoxelDisplacement);
  const ncf::Volume moving = ncf::load_volume(in_path);
  const auto mode =
      interp == "nearest" ? ncf::engine::Interp::Nearest : ncf::engine::Interp::Linear;
  const ncf::Volume out = ncf::engine::warp_image(moving, field, mode);
  ncf::save_volume(out, out_path);
  json j;
  j["out"] = out_path;
  j["interp"] = interp;
  std::cout << j.dump() << std::endl;
  return kExitOk;
}

int cmd_synth(const std::vector<int>& size_arg, uint64_t seed, double max_disp,
              const std::string& out_dir, int threads_flag) {
  ncf::set_num_threads(resolve_threads(threads_flag, false));
  std::array<int, 3> size{};
  if (size_arg.size() == 1) size = {size_arg[0], size_arg[0], size_arg[0]};
  else if (size_arg.size() == 3) size = {size_arg[0], size_arg[1], size_arg[2]};
  else throw std::invalid_argument("--size takes one or three integers");

  const ncf::metrics::SyntheticCase c = ncf::metrics::gen_synthetic_case(size, seed, max_disp);
  const ncf::metrics::Landmarks lm = ncf::metrics::sample_landmarks(c, 20);
  const double folding = ncf::metrics::jacobian_folding(c.gt_field);
  const double pre_dice = ncf::metrics::dice(c.fixed_mask, c.moving_mask);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  ncf::save_volume(c.fixed, dir / "fixed.mha");
  ncf::save_volume(c.moving, dir / "moving.mha");
  ncf::save_volume(c.fixed_mask, dir / "fixed_mask.mha");
  ncf::save_volume(c.moving_mask, dir / "moving_mask.mha");
  ncf::engine::export_field(c.gt_field, dir / "gt_field.mha");
  ncf::metrics::save_landmarks(lm, dir / "landmarks.txt");

  json manifest;
  manifest["seed"] = seed;
  manifest["max_disp"] = max_disp;
  manifest["size"] = {size[0], size[1], size[2]};
  manifest["files"] = {{"fixed", "fixed.mha"},
                       {"moving", "moving.mha"},
                       {"fixed_mask", "fixed_mask.mha"},
                       {"moving_mask", "moving_mask.mha"},
                       {"gt_field", "gt_field.mha"},
                       {"landmarks", "landmarks.txt"}};
  manifest["pre_dice"] = pre_dice;
  manifest["gt_folding"] = folding;
  manifest["checksum_fixed"] = volume_checksum(c.fixed);
  manifest["checksum_moving"] = volume_checksum(c.moving);
  {
    std::ofstream mf(dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
    if (!mf) throw ncf::io_error("cannot write manifest in " + out_dir);
  }

  json j;
  j["out_dir"] = out_dir;
  j["gt_folding"] = folding;
  j["pre_dice"] = pre_dice;
  std::cout << j.dump() << std::endl;
  return kExitOk;
}

int cmd_eval(const std::string& fixed_mask, const std::string& warped_mask,
             const std::string& pred_field, const std::string& gt_field,
             const std::string& landmarks, int threads_flag) {
  ncf::set_num_threads(resolve_threads(threads_flag, false));
  json j;
  bool any = false;

  if (!fixed_mask.empty() || !warped_mask.empty()) {
    if (fixed_mask.empty() || warped_mask.empty())
      throw std::invalid_argument("--fixed-mask and --warped-mask must be given together");
    j["dice"] = ncf::metrics::dice(ncf::load_volume(fixed_mask), ncf::load_volume(warped_mask));
    any = true;
  }

  std::optional<ncf::VectorField> pred;
  if (!pred_field.empty()) {
    pred = ncf::convert_field(ncf::engine::import_field(pred_field),
                              ncf::FieldUnit::VoxelDisplacement);
    j["folding"] = ncf::metrics::jacobian_folding(*pred);
    any = true;
  }
  if (!gt_field.empty()) {
    if (!pred) throw std::invalid_argument("--gt-field requires --pred-field");
    const auto gt = ncf::convert_field(ncf::engine::import_field(gt_field),
                                       ncf::FieldUnit::VoxelDisplacement);
    const auto e = ncf::metrics::endpoint_error(*pred, gt);
    j["endpoint_mean"] = e.mean;
    j["endpoint_max"] = e.max;
    any = true;
  }
  if (!landmarks.empty()) {
    if (!pred) throw std::invalid_argument("--landmarks requires --pred-field");
    const auto lm = ncf::metrics::load_landmarks(landmarks);
    j["tre_mm"] = ncf::metrics::tre(lm, *pred, {pred->spacing[0], pred->spacing[1], pred->spacing[2]});
    any = true;
  }

  if (!any) throw std::invalid_argument("eval: no inputs supplied");
  std::cout << j.dump() << std::endl;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-pair deformable 3D registration via an optimized neural correspondence field"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: all cores)");

  auto* reg = app.add_subcommand("register", "optimize a field for one fixed/moving pair");
  std::string fixed_path, moving_path, config_path, out_field, out_warped;
  reg->add_option("--fixed", fixed_path, "fixed image (MetaImage)")->required();
  reg->add_option("--moving", moving_path, "moving image (MetaImage)")->required();
  reg->add_option("--config", config_path, "JSON run configuration");
  reg->add_option("--out-field", out_field, "output displacement field")->required();
  reg->add_option("--out-warped", out_warped, "output warped moving image")->required();

  auto* warp = app.add_subcommand("warp", "apply a displacement field to an image");
  std::string w_field, w_in, w_interp = "linear", w_out;
  warp->add_option("--field", w_field, "displacement field")->required();
  warp->add_option("--in", w_in, "input image")->required();
  warp->add_option("--interp", w_interp, "linear|nearest")
      ->check(CLI::IsMember({"linear", "nearest"}));
  warp->add_option("--out", w_out, "output image")->required();

  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark case");
  std::vector<int> s_size{48};
  uint64_t s_seed = 0;
  double s_max_disp = 4.0;
  std::string s_out_dir;
  synth->add_option("--size", s_size, "cube edge or three extents")->expected(1, 3);
  synth->add_option("--seed", s_seed, "generator seed");
  synth->add_option("--max-disp", s_max_disp, "peak displacement in voxels");
  synth->add_option("--out-dir", s_out_dir, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "compute registration metrics");
  std::string e_fixed_mask, e_warped_mask, e_pred, e_gt, e_landmarks;
  eval->add_option("--fixed-mask", e_fixed_mask, "fixed-space mask");
  eval->add_option("--warped-mask", e_warped_mask, "warped moving mask");
  eval->add_option("--pred-field", e_pred, "predicted displacement field");
  eval->add_option("--gt-field", e_gt, "ground-truth displacement field");
  eval->add_option("--landmarks", e_landmarks, "landmark pair file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (reg->parsed())
      return cmd_register(fixed_path, moving_path, config_path, out_field, out_warped, threads);
    if (warp->parsed()) return cmd_warp(w_field, w_in, w_interp, w_out, threads);
    if (synth->parsed()) return cmd_synth(s_size, s_seed, s_max_disp, s_out_dir, threads);
    if (eval->parsed())
      return cmd_eval(e_fixed_mask, e_warped_mask, e_pred, e_gt, e_landmarks, threads);
  } catch (const ncf::numerical_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
