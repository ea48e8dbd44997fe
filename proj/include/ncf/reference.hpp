#pragma once

#include <array>

#include "ncf/kernels.hpp"
#include "ncf/tensor.hpp"

// Straight-line serial implementations of the forward kernels. They are the
// comparison baseline for the unit tests and the benchmark target and are
// deliberately written as direct loops, independent of the OpenMP kernels.
namespace ncf::reference {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor trilinear_sample(const Tensor& vol, const Tensor& coords);
Tensor trilinear_splat(const Tensor& coords, std::array<int, 3> target);
Tensor ssim_map(const Tensor& a, const Tensor& b, const kernels::SsimParams& p);

}  // namespace ncf::reference
