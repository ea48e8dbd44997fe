#pragma once

#include <array>

#include "ncf/kernels.hpp"
#include "ncf/tensor.hpp"

namespace ncf::losses {

struct LossWeights {
  real alpha = 1;
  real beta = 1;
  real gamma = 0.1;
};

struct LossBreakdown {
  real photometric = 0;
  real ssim = 0;
  real occupancy = 0;
  real total = 0;
};

// Mean squared intensity difference.
real photometric_loss(const Tensor& fixed, const Tensor& warped);

// 1 - mean(ssim_map); in [0, 2], 0 for identical images.
real ssim_loss(const Tensor& fixed, const Tensor& warped, const kernels::SsimParams& p);

// Splats phi onto the moving grid and sums the per-axis RMS of the
// first-order differences of the resulting occupancy tensor.
real occupancy_loss(const Tensor& phi, std::array<int, 3> moving_shape);

LossBreakdown total_loss(const Tensor& fixed, const Tensor& warped, const Tensor& phi,
                         std::array<int, 3> moving_shape, const LossWeights& w,
                         const kernels::SsimParams& sp);

// Weighted loss with gradients, with buffers reused across iterations.
// backward() fills g_warped (photometric + SSIM route) and g_phi (occupancy
// route); the caller chains g_warped through its sampler and adds the result
// onto g_phi.
struct LossPipeline {
  LossWeights weights;
  kernels::SsimParams ssim_params;

  LossBreakdown value;
  Tensor ssim_map;   // per-voxel SSIM of the last forward()
  Tensor occupancy;  // occupancy tensor B of the last forward()

  Tensor g_warped;
  Tensor g_phi;

  LossBreakdown forward(const Tensor& fixed, const Tensor& warped, const Tensor& phi,
                        std::array<int, 3> moving_shape);
  void backward(const Tensor& fixed, const Tensor& warped, const Tensor& phi);

 private:
  Tensor gmap_, gB_;
  std::array<real, 3> axis_rmsd_{};
};

}  // namespace ncf::losses
