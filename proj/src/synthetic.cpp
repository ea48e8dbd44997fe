#include <cmath>
#include <random>
#include <stdexcept>

#include "ncf/kernels.hpp"
#include "ncf/metrics.hpp"

namespace ncf::metrics {
namespace {

constexpr int kRbfCount = 4;
// Peak slope of a Gaussian RBF is ||a|| * exp(-1/2) / sigma; amplitudes below
// 0.4 * sigma keep the summed displacement-gradient norm under 1, which rules
// out folding.
constexpr real kFoldSafeAmp = 0.4;

real unit_real(std::mt19937_64& rng) { return real(rng() >> 11) * real(0x1.0p-53); }

real uniform(std::mt19937_64& rng, real lo, real hi) {
  return lo + (hi - lo) * unit_real(rng);
}

std::array<real, 3> random_unit_vec(std::mt19937_64& rng) {
  // rejection sample inside the ball
  for (;;) {
    const real x = uniform(rng, -1, 1);
    const real y = uniform(rng, -1, 1);
    const real z = uniform(rng, -1, 1);
    const real r2 = x * x + y * y + z * z;
    if (r2 > real(1e-4) && r2 <= real(1)) {
      const real r = std::sqrt(r2);
      return {x / r, y / r, z / r};
    }
  }
}

struct IntensityBump {
  std::array<real, 3> c;
  std::array<real, 3> sigma;
  real amp;
};

struct Ellipsoid {
  std::array<real, 3> c;
  std::array<real, 3> r;
  real edge;  // logistic edge width in normalized radius units
};

struct RbfBump {
  std::array<real, 3> c;
  real sigma;
  std::array<real, 3> a;
};

struct Phantom {
  std::vector<IntensityBump> bumps;
  Ellipsoid ell;
  std::array<real, 3> ramp;

  real intensity(real x, real y, real z) const {
    real v = ramp[0] * x + ramp[1] * y + ramp[2] * z;
    for (const auto& b : bumps) {
      const real dx = (x - b.c[0]) / b.sigma[0];
      const real dy = (y - b.c[1]) / b.sigma[1];
      const real dz = (z - b.c[2]) / b.sigma[2];
      v += b.amp * std::exp(real(-0.5) * (dx * dx + dy * dy + dz * dz));
    }
    // soft-edged ellipsoid so the mask boundary is visible to the photometric
    // and SSIM terms
    v += real(0.8) / (real(1) + std::exp((radius(x, y, z) - real(1)) / ell.edge));
    return v;
  }

  real radius(real x, real y, real z) const {
    const real dx = (x - ell.c[0]) / ell.r[0];
    const real dy = (y - ell.c[1]) / ell.r[1];
    const real dz = (z - ell.c[2]) / ell.r[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
  }

  bool inside(real x, real y, real z) const { return radius(x, y, z) <= real(1); }
};

struct RbfField {
  std::vector<RbfBump> bumps;

  std::array<real, 3> eval(real x, real y, real z) const {
    std::array<real, 3> u{0, 0, 0};
    for (const auto& b : bumps) {
      const real dx = x - b.c[0], dy = y - b.c[1], dz = z - b.c[2];
      const real e = std::exp(-(dx * dx + dy * dy + dz * dz) / (2 * b.sigma * b.sigma));
      u[0] += b.a[0] * e;
      u[1] += b.a[1] * e;
      u[2] += b.a[2] * e;
    }
    return u;
  }
};

Phantom draw_phantom(std::mt19937_64& rng, const std::array<int, 3>& size) {
  Phantom p;
  const int nb = 3 + static_cast<int>(rng() % 4);  // 3..6 bumps
  for (int i = 0; i < nb; ++i) {
    IntensityBump b;
    for (int a = 0; a < 3; ++a) {
      b.c[static_cast<size_t>(a)] = uniform(rng, real(0.20), real(0.80)) * real(size[a] - 1);
      b.sigma[static_cast<size_t>(a)] = uniform(rng, real(0.10), real(0.22)) * real(size[a]);
    }
    b.amp = uniform(rng, real(0.4), real(1.0));
    p.bumps.push_back(b);
  }
  for (int a = 0; a < 3; ++a) {
    p.ell.c[static_cast<size_t>(a)] =
        (real(0.5) + uniform(rng, real(-0.03), real(0.03))) * real(size[a] - 1);
    p.ell.r[static_cast<size_t>(a)] = uniform(rng, real(0.26), real(0.34)) * real(size[a]);
  }
  const real rmin = std::min({p.ell.r[0], p.ell.r[1], p.ell.r[2]});
  p.ell.edge = real(1.5) / rmin;  // ~1.5 voxels of transition
  for (int a = 0; a < 3; ++a)
    p.ramp[static_cast<size_t>(a)] = uniform(rng, real(-0.15), real(0.15)) / real(size[a]);
  return p;
}

RbfField draw_field(std::mt19937_64& rng, const std::array<int, 3>& size, real max_disp) {
  RbfField f;
  if (max_disp <= real(0)) return f;
  const real smin = real(std::min({size[0], size[1], size[2]}));
  for (int k = 0; k < kRbfCount; ++k) {
    RbfBump b;
    for (int a = 0; a < 3; ++a)
      b.c[static_cast<size_t>(a)] = uniform(rng, real(0.25), real(0.75)) * real(size[a] - 1);
    b.sigma = uniform(rng, real(0.18), real(0.30)) * smin;
    const auto dir = random_unit_vec(rng);
    const real amp = uniform(rng, real(0.5), real(1.0));
    for (int a = 0; a < 3; ++a) b.a[static_cast<size_t>(a)] = dir[static_cast<size_t>(a)] * amp;
    f.bumps.push_back(b);
  }
  return f;
}

// Scales the raw field so its peak magnitude over the grid equals max_disp.
// Returns false when the fold-free amplitude bound would be violated.
bool rescale_field(RbfField& f, const std::array<int, 3>& size, real max_disp) {
  if (f.bumps.empty()) return true;
  real peak = 0;
  for (int z = 0; z < size[2]; ++z)
    for (int y = 0; y < size[1]; ++y)
      for (int x = 0; x < size[0]; ++x) {
        const auto u = f.eval(real(x), real(y), real(z));
        peak = std::max(peak, std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]));
      }
  if (peak <= real(0)) return false;
  const real s = max_disp / peak;
  for (auto& b : f.bumps) {
    real norm = 0;
    for (real v : b.a) norm += v * v;
    norm = std::sqrt(norm) * s;
    if (norm > kFoldSafeAmp * b.sigma) return false;
    for (real& v : b.a) v *= s;
  }
  return true;
}

}  // namespace

SyntheticCase gen_synthetic_case(std::array<int, 3> size, uint64_t seed, double max_disp) {
  for (int s : size)
    if (s < 16) throw std::invalid_argument("gen_synthetic_case: size must be >= 16 per axis");
  if (max_disp < 0) throw std::invalid_argument("gen_synthetic_case: max_disp must be >= 0");

  std::mt19937_64 rng(seed);
  const int w = size[0], h = size[1], d = size[2];
  const int64_t n = spatial_numel(w, h, d);

  // Enough displacement has to land on the mask boundary to push the
  // pre-registration Dice down; redraw (deterministically) until it does.
  const real dice_target =
      max_disp > 0 ? std::max(real(0.5), real(1) - real(0.025) * real(max_disp)) : real(2);
  const int max_attempts = 24;

  SyntheticCase out;
  out.seed = seed;
  for (int attempt = 0;; ++attempt) {
    const Phantom phantom = draw_phantom(rng, size);
    RbfField field = draw_field(rng, size, real(max_disp));
    if (!rescale_field(field, size, real(max_disp))) {
      if (attempt + 1 >= max_attempts)
        throw std::invalid_argument(
            "gen_synthetic_case: requested max_disp is infeasible under the fold-free bound");
      continue;
    }

    out.fixed = make_volume(size, IntensityUnit::Normalized);
    out.moving = make_volume(size, IntensityUnit::Normalized);
    out.fixed_mask = make_volume(size, IntensityUnit::Label);
    out.moving_mask = make_volume(size, IntensityUnit::Label);
    out.gt_field = make_field(size, FieldUnit::VoxelDisplacement);

    real* gx = out.gt_field.data.data.data();
    real* gy = gx + n;
    real* gz = gy + n;
#pragma omp parallel for schedule(static)
    for (int z = 0; z < d; ++z)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int64_t i = idx3(x, y, z, w, h);
          const auto u = field.eval(real(x), real(y), real(z));
          gx[i] = u[0];
          gy[i] = u[1];
          gz[i] = u[2];
          const real mx = real(x) + u[0], my = real(y) + u[1], mz = real(z) + u[2];
          out.moving.data[static_cast<size_t>(i)] = phantom.intensity(real(x), real(y), real(z));
          out.fixed.data[static_cast<size_t>(i)] = phantom.intensity(mx, my, mz);
          out.moving_mask.data[static_cast<size_t>(i)] = phantom.inside(real(x), real(y), real(z));
          out.fixed_mask.data[static_cast<size_t>(i)] = phantom.inside(mx, my, mz);
        }

    // joint affine rescale of both images to [0, 1]
    real lo = out.fixed.data[0], hi = lo;
    for (const Volume* v : {&out.fixed, &out.moving})
      for (real val : v->data) {
        lo = std::min(lo, val);
        hi = std::max(hi, val);
      }
    const real scale = hi > lo ? real(1) / (hi - lo) : real(1);
    for (Volume* v : {&out.fixed, &out.moving})
      for (real& val : v->data) val = (val - lo) * scale;

    if (max_disp > 0 && jacobian_folding(out.gt_field) != real(0))
      throw std::logic_error("gen_synthetic_case: fold-free bound failed");

    if (max_disp == 0 || dice(out.fixed_mask, out.moving_mask) < dice_target) break;
    if (attempt + 1 >= max_attempts)
      throw std::invalid_argument(
          "gen_synthetic_case: could not realize the requested max_disp on the mask");
  }
  return out;
}

Landmarks sample_landmarks(const SyntheticCase& c, int count) {
  std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ull);
  const auto sp = c.gt_field.spatial_shape();
  const int64_t n = spatial_numel(sp[0], sp[1], sp[2]);
  const real* u[3] = {c.gt_field.data.data.data(), c.gt_field.data.data.data() + n,
                      c.gt_field.data.data.data() + 2 * n};
  Landmarks lm;
  while (static_cast<int>(lm.pairs.size()) < count) {
    std::array<real, 6> p{};
    for (int a = 0; a < 3; ++a)
      p[static_cast<size_t>(a)] = uniform(rng, real(2), real(sp[a] - 3));
    bool ok = true;
    for (int a = 0; a < 3; ++a) {
      p[static_cast<size_t>(a + 3)] =
          p[static_cast<size_t>(a)] +
          kernels::trilinear_at(u[a], sp[0], sp[1], sp[2], p[0], p[1], p[2]);
      if (!(p[static_cast<size_t>(a + 3)] >= 0 && p[static_cast<size_t>(a + 3)] <= real(sp[a] - 1)))
        ok = false;
    }
    if (ok) lm.pairs.push_back(p);
  }
  return lm;
}

}  // namespace ncf::metrics
