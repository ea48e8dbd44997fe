#pragma once

#include <array>
#include <cmath>
#include <string>

#include "ncf/tensor.hpp"

// Forward and exact reverse-mode kernels for the registration pipeline.
// All kernels are OpenMP-parallel; reductions use a fixed order so results
// are reproducible for a fixed thread count (see ncf/threads.hpp).
namespace ncf::kernels {

// y[n,o] = sum_i x[n,i] * w[o,i] + b[o]
void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y);
// Any of gx/gw/gb may be null; non-null outputs are overwritten.
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                     Tensor* gx, Tensor* gw, Tensor* gb);

// x >= 0 -> x, x < 0 -> slope * x. The derivative at exactly 0 is 1.
void leaky_relu_forward(const Tensor& x, real slope, Tensor& y);
void leaky_relu_backward(const Tensor& x, const Tensor& gy, real slope, Tensor& gx);

// 3x3x3 cross-correlation with replicate padding; x is (Cin, W, H, D),
// w is (Cout, Cin, 3, 3, 3) with taps z-major / x-fastest, y is (Cout, W, H, D).
void conv3d_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y);
void conv3d_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                     Tensor* gx, Tensor* gw, Tensor* gb);

// Samples vol (W,H,D) at normalized coordinates coords (3, W', H', D').
// Coordinates are clamped to the volume extent before interpolation.
void trilinear_sample_forward(const Tensor& vol, const Tensor& coords, Tensor& out);
// gcoords uses the clamped chain rule: zero where the coordinate fell outside
// the extent. At interior lattice points the coordinate derivative is the
// symmetric (central) one, so it matches the central-difference image
// gradient there.
void trilinear_sample_backward(const Tensor& vol, const Tensor& coords, const Tensor& gout,
                               Tensor* gvol, Tensor* gcoords);

// Deposits one unit of mass per sampling point onto the 8 surrounding voxels
// of a zero-initialized (W,H,D) tensor. Total mass equals the point count.
void trilinear_splat_forward(const Tensor& coords, std::array<int, 3> target, Tensor& out);
void trilinear_splat_backward(const Tensor& coords, const Tensor& gout, Tensor& gcoords);

struct SsimParams {
  int window = 7;
  real sigma = 1.5;
  real c1 = 1e-4;  // (0.01 * L)^2, L = 1 after normalization
  real c2 = 9e-4;  // (0.03 * L)^2
};

// Per-voxel SSIM of two equally shaped normalized volumes, computed with a
// separable 3D Gaussian window and replicate padding.
void ssim_map_forward(const Tensor& a, const Tensor& b, const SsimParams& p, Tensor& map);
void ssim_map_backward(const Tensor& a, const Tensor& b, const SsimParams& p,
                       const Tensor& gmap, Tensor* ga, Tensor* gb);

struct AdamState {
  std::vector<real> m, v;
  int64_t t = 0;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;
};

// Standard Adam with bias correction. `name` labels the parameter in the
// non-finite-gradient diagnostic.
void adam_step(Tensor& param, const std::vector<real>& grad, AdamState& state, real lr,
               const std::string& name);

real cosine_lr(int64_t step, int64_t total, real lr0, real lr1);

// Voxel-space trilinear gather at position (px, py, pz), clamped to the
// extent. Shared by the samplers and by field warping/evaluation.
inline real trilinear_at(const real* vol, int w, int h, int d, real px, real py, real pz) {
  auto prep = [](real p, int size, int& lo, int& hi, real& f) {
    if (!(p >= real(0))) p = real(0);  // also catches NaN
    const real top = real(size - 1);
    if (p > top) p = top;
    real fl = std::floor(p);
    lo = static_cast<int>(fl);
    hi = lo + 1 < size ? lo + 1 : size - 1;
    f = p - fl;
  };
  int x0, x1, y0, y1, z0, z1;
  real fx, fy, fz;
  prep(px, w, x0, x1, fx);
  prep(py, h, y0, y1, fy);
  prep(pz, d, z0, z1, fz);
  auto at = [&](int x, int y, int z) { return vol[idx3(x, y, z, w, h)]; };
  const real c00 = at(x0, y0, z0) * (1 - fx) + at(x1, y0, z0) * fx;
  const real c10 = at(x0, y1, z0) * (1 - fx) + at(x1, y1, z0) * fx;
  const real c01 = at(x0, y0, z1) * (1 - fx) + at(x1, y0, z1) * fx;
  const real c11 = at(x0, y1, z1) * (1 - fx) + at(x1, y1, z1) * fx;
  const real c0 = c00 * (1 - fy) + c10 * fy;
  const real c1 = c01 * (1 - fy) + c11 * fy;
  return c0 * (1 - fz) + c1 * fz;
}

// Nearest-voxel index for a clamped position; ties round toward the lower
// index.
inline int nearest_index(real p, int size) {
  if (!(p >= real(0))) p = real(0);
  const real top = real(size - 1);
  if (p > top) p = top;
  int i = static_cast<int>(std::ceil(p - real(0.5)));
  if (i < 0) i = 0;
  if (i > size - 1) i = size - 1;
  return i;
}

}  // namespace ncf::kernels
