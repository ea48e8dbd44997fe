#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ncf/losses.hpp"
#include "ncf/volume.hpp"

namespace ncf::engine {

struct RunConfig {
  int iterations = 500;
  real lr0 = 1e-3;
  real lr1 = 1e-6;
  losses::LossWeights weights;
  int hidden_width = 128;
  int sm_channels = 16;
  real activation_slope = 0.01;
  uint64_t seed = 0;
  std::array<double, 2> hu_window{-1000.0, 1000.0};
  int ssim_window = 7;
  bool deterministic = false;
  int log_every = 100;
};

// Throws std::invalid_argument when a field violates its contract.
void validate(const RunConfig& cfg);

struct LoadedRunConfig {
  RunConfig config;
  std::vector<std::string> unknown_keys;
};

// Parses a JSON config with exactly the RunConfig keys. Unknown keys are
// collected for the caller to warn about and otherwise ignored.
LoadedRunConfig load_run_config(const std::filesystem::path& path);

struct RegistrationResult {
  VectorField offset;  // voxel displacement over the fixed grid
  Volume warped;       // moving image resampled through the final field
  std::vector<losses::LossBreakdown> loss_history;  // one entry per iteration
  real final_lr = 0;
  double wall_time = 0;
};

using ProgressFn =
    std::function<void(int step, real lr, const losses::LossBreakdown& loss)>;

// Optimizes a fresh model on one image pair: every iteration runs the full
// grid through the network, warps the moving image at the correspondence
// field, and applies one Adam step on the cosine schedule.
RegistrationResult register_pair(const Volume& fixed, const Volume& moving,
                                 const RunConfig& cfg, const ProgressFn& progress = {});

enum class Interp { Linear, Nearest };

// Resamples moving at (voxel + displacement); nearest mode preserves label
// values exactly and is required for masks.
Volume warp_image(const Volume& moving, const VectorField& offset, Interp interp);

// Lossless (double precision) 3-channel field file with unit and channel
// tags; the three components are stacked along z.
void export_field(const VectorField& f, const std::filesystem::path& path);
VectorField import_field(const std::filesystem::path& path);

// Per-iteration CSV: step, lr, total, photometric, ssim, occupancy.
void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<losses::LossBreakdown>& history, const RunConfig& cfg);

// The intensity policy used before optimization: HU-windowed when the fixed
// image is in HU, otherwise the min-max of the fixed image, applied to both.
std::pair<Volume, Volume> normalize_pair(const Volume& fixed, const Volume& moving,
                                         const RunConfig& cfg);

}  // namespace ncf::engine
