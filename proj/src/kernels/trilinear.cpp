#include <omp.h>

#include <stdexcept>
#include <vector>

#include "ncf/volume.hpp"
#include "ncf/kernels.hpp"

namespace ncf::kernels {
namespace {

struct AxisStencil {
  int lo = 0, hi = 0;   // interpolation corners (clamped)
  real f = 0;           // fractional part
  bool pass = false;    // coordinate within the extent: gradient passes
  // derivative taps along this axis: d/di = d0 * v[t0] + d1 * v[t1]
  int t0 = 0, t1 = 0;
  real d0 = 0, d1 = 0;
};

// Converts one normalized coordinate to a voxel-space stencil. Positions
// within a few scaled ulps of a lattice point are snapped onto it: the
// normalized encoding of an integer index can be off by ~(S/2)*2^-52 voxels,
// and snapping keeps lattice-aligned grids exact (identity sampling, unit
// occupancy). At interior lattice points the derivative taps are the
// symmetric pair, matching the central image difference there; elsewhere
// they fall out of the usual piecewise-linear weights.
inline AxisStencil axis_stencil(real c, int size) {
  AxisStencil s;
  const real top = real(size - 1);
  real p = norm_to_voxel(c, size);
  const real snap_tol = top * real(0x1.0p-48);
  const real r = std::nearbyint(p);
  if (std::abs(p - r) <= snap_tol && r >= real(0) && r <= top) p = r;
  s.pass = p >= real(0) && p <= top;
  if (!(p >= real(0))) p = real(0);  // also catches NaN
  if (p > top) p = top;
  const real fl = std::floor(p);
  s.lo = static_cast<int>(fl);
  s.hi = s.lo + 1 < size ? s.lo + 1 : size - 1;
  s.f = p - fl;
  if (!s.pass) return s;
  if (s.f == real(0) && s.lo > 0 && s.lo < size - 1) {
    s.t0 = s.lo - 1;
    s.t1 = s.lo + 1;
    s.d0 = real(-0.5);
    s.d1 = real(0.5);
  } else {
    s.t0 = s.lo;
    s.t1 = s.hi;
    s.d0 = real(-1);
    s.d1 = real(1);
  }
  return s;
}

void check_coords(const Tensor& coords) {
  if (coords.ndim() != 4 || coords.dim(0) != 3)
    throw std::invalid_argument("coords must be shaped (3, W', H', D')");
}

void check_vol(const Tensor& vol) {
  if (vol.ndim() != 3) throw std::invalid_argument("volume must be shaped (W, H, D)");
}

// Scatters the 8 trilinear weights of every point, scaled by mass(p), onto a
// zero-initialized target. Points are split into per-thread ranges and each
// thread accumulates into its own buffer; buffers are then reduced in thread
// order, so results are reproducible for a fixed thread count.
template <class MassFn>
void scatter_points(const Tensor& coords, std::array<int, 3> shape, MassFn mass,
                    Tensor& out) {
  const int w = shape[0], h = shape[1], d = shape[2];
  const int64_t nvol = spatial_numel(w, h, d);
  const int64_t npts = coords.numel() / 3;
  const real* cx = coords.data.data();
  const real* cy = cx + npts;
  const real* cz = cy + npts;

  const int threads = omp_get_max_threads();
  std::vector<std::vector<real>> partial(static_cast<size_t>(threads));

#pragma omp parallel num_threads(threads)
  {
    const int t = omp_get_thread_num();
    auto& buf = partial[static_cast<size_t>(t)];
    buf.assign(static_cast<size_t>(nvol), real(0));
    const int64_t begin = npts * t / threads;
    const int64_t end = npts * (t + 1) / threads;
    for (int64_t p = begin; p < end; ++p) {
      const AxisStencil sx = axis_stencil(cx[p], w);
      const AxisStencil sy = axis_stencil(cy[p], h);
      const AxisStencil sz = axis_stencil(cz[p], d);
      const real m = mass(p);
      const real wx[2] = {(real(1) - sx.f) * m, sx.f * m};
      const real wy[2] = {real(1) - sy.f, sy.f};
      const real wz[2] = {real(1) - sz.f, sz.f};
      const int ix[2] = {sx.lo, sx.hi};
      const int iy[2] = {sy.lo, sy.hi};
      const int iz[2] = {sz.lo, sz.hi};
      for (int k = 0; k < 2; ++k)
        for (int j = 0; j < 2; ++j)
          for (int i = 0; i < 2; ++i)
            buf[static_cast<size_t>(idx3(ix[i], iy[j], iz[k], w, h))] +=
                wx[i] * wy[j] * wz[k];
    }
  }

  ensure_shape(out, {w, h, d});
  real* op = out.data.data();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < nvol; ++i) {
    real acc = 0;
    for (int t = 0; t < threads; ++t) acc += partial[static_cast<size_t>(t)][static_cast<size_t>(i)];
    op[i] = acc;
  }
}

// Per-point gradient of the trilinear weights against a voxel field:
// gcoord_a(p) = scale(p) * sum over corners of field * dweights/dcoord_a.
void coord_grad_points(const Tensor& coords, const Tensor& field, const real* scale,
                       Tensor& gcoords) {
  const int w = field.dim(0), h = field.dim(1), d = field.dim(2);
  const int64_t npts = coords.numel() / 3;
  ensure_shape(gcoords, coords.shape);
  const real* cx = coords.data.data();
  const real* cy = cx + npts;
  const real* cz = cy + npts;
  real* gx = gcoords.data.data();
  real* gy = gx + npts;
  real* gz = gy + npts;
  const real* f = field.data.data();
  const real mx = axis_half_extent(w), my = axis_half_extent(h), mz = axis_half_extent(d);

#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < npts; ++p) {
    const AxisStencil sx = axis_stencil(cx[p], w);
    const AxisStencil sy = axis_stencil(cy[p], h);
    const AxisStencil sz = axis_stencil(cz[p], d);
    const real wx[2] = {real(1) - sx.f, sx.f};
    const real wy[2] = {real(1) - sy.f, sy.f};
    const real wz[2] = {real(1) - sz.f, sz.f};
    const int ix[2] = {sx.lo, sx.hi};
    const int iy[2] = {sy.lo, sy.hi};
    const int iz[2] = {sz.lo, sz.hi};
    const real s = scale ? scale[p] : real(1);

    real ax = 0, ay = 0, az = 0;
    if (sx.pass) {
      for (int k = 0; k < 2; ++k)
        for (int j = 0; j < 2; ++j)
          ax += wy[j] * wz[k] *
                (sx.d0 * f[idx3(sx.t0, iy[j], iz[k], w, h)] +
                 sx.d1 * f[idx3(sx.t1, iy[j], iz[k], w, h)]);
    }
    if (sy.pass) {
      for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i)
          ay += wx[i] * wz[k] *
                (sy.d0 * f[idx3(ix[i], sy.t0, iz[k], w, h)] +
                 sy.d1 * f[idx3(ix[i], sy.t1, iz[k], w, h)]);
    }
    if (sz.pass) {
      for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i)
          az += wx[i] * wy[j] *
                (sz.d0 * f[idx3(ix[i], iy[j], sz.t0, w, h)] +
                 sz.d1 * f[idx3(ix[i], iy[j], sz.t1, w, h)]);
    }
    gx[p] = s * ax * mx;
    gy[p] = s * ay * my;
    gz[p] = s * az * mz;
  }
}

}  // namespace

void trilinear_sample_forward(const Tensor& vol, const Tensor& coords, Tensor& out) {
  check_vol(vol);
  check_coords(coords);
  const int w = vol.dim(0), h = vol.dim(1), d = vol.dim(2);
  const int64_t npts = coords.numel() / 3;
  ensure_shape(out, {coords.dim(1), coords.dim(2), coords.dim(3)});
  const real* cx = coords.data.data();
  const real* cy = cx + npts;
  const real* cz = cy + npts;
  const real* v = vol.data.data();
  real* op = out.data.data();

#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < npts; ++p) {
    const AxisStencil sx = axis_stencil(cx[p], w);
    const AxisStencil sy = axis_stencil(cy[p], h);
    const AxisStencil sz = axis_stencil(cz[p], d);
    const real wx[2] = {real(1) - sx.f, sx.f};
    const real wy[2] = {real(1) - sy.f, sy.f};
    const real wz[2] = {real(1) - sz.f, sz.f};
    const int ix[2] = {sx.lo, sx.hi};
    const int iy[2] = {sy.lo, sy.hi};
    const int iz[2] = {sz.lo, sz.hi};
    real acc = 0;
    for (int k = 0; k < 2; ++k)
      for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i)
          acc += wx[i] * wy[j] * wz[k] * v[idx3(ix[i], iy[j], iz[k], w, h)];
    op[p] = acc;
  }
}

void trilinear_sample_backward(const Tensor& vol, const Tensor& coords, const Tensor& gout,
                               Tensor* gvol, Tensor* gcoords) {
  check_vol(vol);
  check_coords(coords);
  if (gout.numel() != coords.numel() / 3)
    throw std::invalid_argument("trilinear_sample_backward: gout shape mismatch");
  if (gvol) {
    const real* g = gout.data.data();
    scatter_points(coords, {vol.dim(0), vol.dim(1), vol.dim(2)},
                   [g](int64_t p) { return g[p]; }, *gvol);
  }
  if (gcoords) coord_grad_points(coords, vol, gout.data.data(), *gcoords);
}

void trilinear_splat_forward(const Tensor& coords, std::array<int, 3> target, Tensor& out) {
  check_coords(coords);
  scatter_points(coords, target, [](int64_t) { return real(1); }, out);
}

void trilinear_splat_backward(const Tensor& coords, const Tensor& gout, Tensor& gcoords) {
  check_coords(coords);
  check_vol(gout);
  coord_grad_points(coords, gout, nullptr, gcoords);
}

}  // namespace ncf::kernels
