#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "ncf/volume.hpp"

namespace ncf::metrics {

// Dice overlap of two binary masks; 1 when both are empty.
real dice(const Volume& a, const Volume& b);

struct EndpointError {
  real mean = 0;
  real max = 0;
};

// Per-voxel Euclidean error between two voxel-displacement fields, averaged
// and maxed over the mask (values > 0.5) or the whole volume.
EndpointError endpoint_error(const VectorField& pred, const VectorField& gt,
                             const Volume* mask = nullptr);

// Fraction of interior voxels whose deformation Jacobian determinant is <= 0
// (central differences of x + u(x)).
real jacobian_folding(const VectorField& offset);

// (fixed point, moving point) pairs in voxel coordinates.
struct Landmarks {
  std::vector<std::array<real, 6>> pairs;  // fx fy fz mx my mz
};

Landmarks load_landmarks(const std::filesystem::path& path);
void save_landmarks(const Landmarks& lm, const std::filesystem::path& path);

// Mean distance in mm between warped fixed landmarks and moving landmarks.
real tre(const Landmarks& lm, const VectorField& offset, std::array<double, 3> spacing);

// Deterministic phantom pair with an analytic fold-free ground-truth field.
struct SyntheticCase {
  Volume fixed, moving;
  Volume fixed_mask, moving_mask;  // binary labels
  VectorField gt_field;            // voxel displacement, fixed grid
  uint64_t seed = 0;
};

// The moving image samples an analytic blob phantom and the fixed image
// samples it at x + u(x), so warping moving through gt_field recovers fixed
// up to interpolation error. max_disp is realized as the peak displacement
// magnitude; amplitudes stay under the fold-free bound or the call throws.
SyntheticCase gen_synthetic_case(std::array<int, 3> size, uint64_t seed, double max_disp);

// Landmarks consistent with a case's ground-truth field.
Landmarks sample_landmarks(const SyntheticCase& c, int count);

}  // namespace ncf::metrics
