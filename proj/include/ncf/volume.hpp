#pragma once

#include <array>
#include <cstdint>

#include "ncf/tensor.hpp"

namespace ncf {

enum class IntensityUnit { HU, Normalized, Label };

// Dense 3D scalar image, x-fastest storage. Shape is (W, H, D), spacing in mm.
struct Volume {
  std::vector<real> data;
  std::array<int, 3> shape{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  IntensityUnit unit = IntensityUnit::HU;

  int64_t numel() const { return spatial_numel(shape[0], shape[1], shape[2]); }

  real& at(int x, int y, int z) {
    return data[static_cast<size_t>(idx3(x, y, z, shape[0], shape[1]))];
  }
  real at(int x, int y, int z) const {
    return data[static_cast<size_t>(idx3(x, y, z, shape[0], shape[1]))];
  }

  Tensor as_tensor() const {
    Tensor t({shape[0], shape[1], shape[2]});
    t.data = data;
    return t;
  }
};

Volume make_volume(std::array<int, 3> shape, IntensityUnit unit = IntensityUnit::HU);

enum class FieldUnit { NormalizedOffset, VoxelDisplacement };

// Per-voxel 3-vector field stored as a (3, W, H, D) tensor, x component first.
struct VectorField {
  Tensor data;
  FieldUnit unit = FieldUnit::NormalizedOffset;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  std::array<int, 3> spatial_shape() const {
    return {data.dim(1), data.dim(2), data.dim(3)};
  }
};

VectorField make_field(std::array<int, 3> shape, FieldUnit unit);

// Normalized coordinate mesh over voxel centers, shaped (3, W, H, D).
// Coordinates run from -1 to +1 along each axis (0 for axes of size 1) and
// are chosen so that norm_to_voxel() maps them back to exact integer indices.
struct Grid {
  Tensor coords;
  std::array<int, 3> shape{0, 0, 0};
};

Grid make_grid(std::array<int, 3> shape);

// Half-extent of an axis in voxel units; the normalized<->voxel scale factor.
inline real axis_half_extent(int size) { return real(0.5) * (size - 1); }

inline real norm_to_voxel(real c, int size) {
  return (c + real(1)) * axis_half_extent(size);
}

inline real voxel_to_norm(real i, int size) {
  const real m = axis_half_extent(size);
  return m == real(0) ? real(0) : i / m - real(1);
}

// Window-normalizes intensities: clamp((x - lo) / (hi - lo), 0, 1).
Volume normalize_intensity(const Volume& v, double lo, double hi);

// Converts between normalized-offset and voxel-displacement units in place.
VectorField convert_field(const VectorField& f, FieldUnit target);

}  // namespace ncf
