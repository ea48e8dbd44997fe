#include "ncf/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ncf::losses {
namespace {

void check_pair(const Tensor& fixed, const Tensor& warped) {
  if (fixed.ndim() != 3 || !fixed.same_shape(warped))
    throw std::invalid_argument("loss: fixed and warped must be equally shaped (W, H, D)");
}

struct AxisDiffStats {
  real ssd = 0;
  int64_t count = 0;
};

// Sum of squared first-order differences of B along one axis.
AxisDiffStats axis_diff(const Tensor& B, int axis) {
  const int w = B.dim(0), h = B.dim(1), d = B.dim(2);
  const int ext[3] = {w, h, d};
  if (ext[axis] < 2) return {};
  const int64_t stride = axis == 0 ? 1 : (axis == 1 ? w : static_cast<int64_t>(w) * h);
  const real* p = B.data.data();
  AxisDiffStats s;
  const int cw = axis == 0 ? w - 1 : w;
  const int ch = axis == 1 ? h - 1 : h;
  const int cd = axis == 2 ? d - 1 : d;
  const int64_t n = spatial_numel(cw, ch, cd);
  s.count = n;
  s.ssd = chunked_sum(n, [&](int64_t i) {
    const int x = static_cast<int>(i % cw);
    const int y = static_cast<int>((i / cw) % ch);
    const int z = static_cast<int>(i / (static_cast<int64_t>(cw) * ch));
    const int64_t at = idx3(x, y, z, w, h);
    const real dd = p[at + stride] - p[at];
    return dd * dd;
  });
  return s;
}

}  // namespace

real photometric_loss(const Tensor& fixed, const Tensor& warped) {
  check_pair(fixed, warped);
  const int64_t n = fixed.numel();
  const real* f = fixed.data.data();
  const real* w = warped.data.data();
  return chunked_sum(n, [&](int64_t i) {
    const real d = f[i] - w[i];
    return d * d;
  }) / real(n);
}

real ssim_loss(const Tensor& fixed, const Tensor& warped, const kernels::SsimParams& p) {
  check_pair(fixed, warped);
  Tensor map;
  kernels::ssim_map_forward(fixed, warped, p, map);
  const real* m = map.data.data();
  const int64_t n = map.numel();
  return real(1) - chunked_sum(n, [&](int64_t i) { return m[i]; }) / real(n);
}

real occupancy_loss(const Tensor& phi, std::array<int, 3> moving_shape) {
  Tensor B;
  kernels::trilinear_splat_forward(phi, moving_shape, B);
  real loss = 0;
  for (int a = 0; a < 3; ++a) {
    const AxisDiffStats s = axis_diff(B, a);
    if (s.count > 0) loss += std::sqrt(s.ssd / real(s.count));
  }
  return loss;
}

LossBreakdown total_loss(const Tensor& fixed, const Tensor& warped, const Tensor& phi,
                         std::array<int, 3> moving_shape, const LossWeights& w,
                         const kernels::SsimParams& sp) {
  LossBreakdown b;
  b.photometric = photometric_loss(fixed, warped);
  b.ssim = ssim_loss(fixed, warped, sp);
  b.occupancy = occupancy_loss(phi, moving_shape);
  b.total = w.alpha * b.photometric + w.beta * b.ssim + w.gamma * b.occupancy;
  return b;
}

LossBreakdown LossPipeline::forward(const Tensor& fixed, const Tensor& warped,
                                    const Tensor& phi, std::array<int, 3> moving_shape) {
  check_pair(fixed, warped);
  const int64_t n = fixed.numel();
  const real* f = fixed.data.data();
  const real* w = warped.data.data();

  value.photometric = chunked_sum(n, [&](int64_t i) {
    const real d = f[i] - w[i];
    return d * d;
  }) / real(n);

  kernels::ssim_map_forward(fixed, warped, ssim_params, ssim_map);
  const real* m = ssim_map.data.data();
  value.ssim = real(1) - chunked_sum(n, [&](int64_t i) { return m[i]; }) / real(n);

  kernels::trilinear_splat_forward(phi, moving_shape, occupancy);
  value.occupancy = 0;
  for (int a = 0; a < 3; ++a) {
    const AxisDiffStats s = axis_diff(occupancy, a);
    axis_rmsd_[static_cast<size_t>(a)] = s.count > 0 ? std::sqrt(s.ssd / real(s.count)) : real(0);
    value.occupancy += axis_rmsd_[static_cast<size_t>(a)];
  }

  value.total = weights.alpha * value.photometric + weights.beta * value.ssim +
                weights.gamma * value.occupancy;
  return value;
}

void LossPipeline::backward(const Tensor& fixed, const Tensor& warped, const Tensor& phi) {
  const int64_t n = fixed.numel();
  const real* f = fixed.data.data();
  const real* w = warped.data.data();

  // photometric route into g_warped
  ensure_shape(g_warped, fixed.shape);
  const real pscale = weights.alpha * 2 / real(n);
  real* gw = g_warped.data.data();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) gw[i] = pscale * (w[i] - f[i]);

  // SSIM route: d(1 - mean(map))/d(map) = -1/n
  if (weights.beta != real(0)) {
    ensure_shape(gmap_, fixed.shape);
    gmap_.fill(-weights.beta / real(n));
    Tensor gb;
    kernels::ssim_map_backward(fixed, warped, ssim_params, gmap_, nullptr, &gb);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) gw[i] += gb[i];
  }

  // occupancy route into g_phi through the splat
  const int bw = occupancy.dim(0), bh = occupancy.dim(1), bd = occupancy.dim(2);
  ensure_shape(gB_, occupancy.shape);
  gB_.fill(real(0));
  if (weights.gamma != real(0)) {
    const real* B = occupancy.data.data();
    real* gB = gB_.data.data();
    const int ext[3] = {bw, bh, bd};
    for (int a = 0; a < 3; ++a) {
      const real rmsd = axis_rmsd_[static_cast<size_t>(a)];
      if (ext[a] < 2 || rmsd <= real(0)) continue;  // flat occupancy: subgradient 0
      const int cw = a == 0 ? bw - 1 : bw;
      const int ch = a == 1 ? bh - 1 : bh;
      const int cd = a == 2 ? bd - 1 : bd;
      const int64_t stride = a == 0 ? 1 : (a == 1 ? bw : static_cast<int64_t>(bw) * bh);
      const real coef = weights.gamma / (real(spatial_numel(cw, ch, cd)) * rmsd);
      // adjacent pairs overlap along the axis, so slabs are parallelized on an
      // axis the pairs do not cross
      if (a == 2) {
#pragma omp parallel for schedule(static)
        for (int y = 0; y < ch; ++y)
          for (int z = 0; z < cd; ++z)
            for (int x = 0; x < cw; ++x) {
              const int64_t at = idx3(x, y, z, bw, bh);
              const real g = coef * (B[at + stride] - B[at]);
              gB[at + stride] += g;
              gB[at] -= g;
            }
      } else {
#pragma omp parallel for schedule(static)
        for (int z = 0; z < cd; ++z)
          for (int y = 0; y < ch; ++y)
            for (int x = 0; x < cw; ++x) {
              const int64_t at = idx3(x, y, z, bw, bh);
              const real g = coef * (B[at + stride] - B[at]);
              gB[at + stride] += g;
              gB[at] -= g;
            }
      }
    }
  }
  kernels::trilinear_splat_backward(phi, gB_, g_phi);
}

}  // namespace ncf::losses
