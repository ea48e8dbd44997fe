#include "ncf/volume.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ncf {

Volume make_volume(std::array<int, 3> shape, IntensityUnit unit) {
  for (int s : shape)
    if (s < 1) throw std::invalid_argument("volume axis sizes must be >= 1");
  Volume v;
  v.shape = shape;
  v.unit = unit;
  v.data.assign(static_cast<size_t>(spatial_numel(shape[0], shape[1], shape[2])), real(0));
  return v;
}

VectorField make_field(std::array<int, 3> shape, FieldUnit unit) {
  VectorField f;
  f.data = Tensor({3, shape[0], shape[1], shape[2]});
  f.unit = unit;
  return f;
}

namespace {

real axis_coord(int k, int size) {
  if (size == 1) return real(0);
  if (k == 0) return real(-1);
  if (k == size - 1) return real(1);
  return real(2 * k - (size - 1)) / real(size - 1);
}

}  // namespace

Grid make_grid(std::array<int, 3> shape) {
  for (int s : shape)
    if (s < 1) throw std::invalid_argument("grid axis sizes must be >= 1");
  const int w = shape[0], h = shape[1], d = shape[2];
  Grid g;
  g.shape = shape;
  g.coords = Tensor({3, w, h, d});
  const int64_t n = spatial_numel(w, h, d);

  std::array<std::vector<real>, 3> axis;
  for (int a = 0; a < 3; ++a) {
    axis[a].resize(static_cast<size_t>(shape[a]));
    for (int k = 0; k < shape[a]; ++k) axis[a][static_cast<size_t>(k)] = axis_coord(k, shape[a]);
  }

  real* cx = g.coords.data.data();
  real* cy = cx + n;
  real* cz = cy + n;
#pragma omp parallel for schedule(static)
  for (int z = 0; z < d; ++z) {
    for (int y = 0; y < h; ++y) {
      int64_t i = idx3(0, y, z, w, h);
      for (int x = 0; x < w; ++x, ++i) {
        cx[i] = axis[0][static_cast<size_t>(x)];
        cy[i] = axis[1][static_cast<size_t>(y)];
        cz[i] = axis[2][static_cast<size_t>(z)];
      }
    }
  }
  return g;
}

Volume normalize_intensity(const Volume& v, double lo, double hi) {
  if (!(lo < hi))
    throw std::invalid_argument("degenerate intensity window: lo=" + std::to_string(lo) +
                                " hi=" + std::to_string(hi));
  Volume out = v;
  const real scale = real(1) / (real(hi) - real(lo));
  const real rlo = real(lo);
  const int64_t n = v.numel();
  real* p = out.data.data();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    real t = (p[i] - rlo) * scale;
    p[i] = t < real(0) ? real(0) : (t > real(1) ? real(1) : t);
  }
  out.unit = IntensityUnit::Normalized;
  return out;
}

VectorField convert_field(const VectorField& f, FieldUnit target) {
  if (f.unit == target) return f;
  VectorField out = f;
  out.unit = target;
  const auto sp = f.spatial_shape();
  const int64_t n = spatial_numel(sp[0], sp[1], sp[2]);
  for (int a = 0; a < 3; ++a) {
    const real m = axis_half_extent(sp[a]);
    real* p = out.data.data.data() + a * n;
    if (target == FieldUnit::VoxelDisplacement) {
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) p[i] *= m;
    } else {
      const real inv = m == real(0) ? real(0) : real(1) / m;
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) p[i] *= inv;
    }
  }
  return out;
}

}  // namespace ncf
