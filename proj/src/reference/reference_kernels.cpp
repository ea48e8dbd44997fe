#include <cmath>
#include <vector>

#include "ncf/reference.hpp"
#include "ncf/volume.hpp"

namespace ncf::reference {
namespace {

int clampi(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

real clampr(real v, real lo, real hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
  Tensor y({n, out});
  for (int r = 0; r < n; ++r)
    for (int o = 0; o < out; ++o) {
      real acc = b[o];
      for (int i = 0; i < in; ++i)
        acc += x[static_cast<int64_t>(r) * in + i] * w[static_cast<int64_t>(o) * in + i];
      y[static_cast<int64_t>(r) * out + o] = acc;
    }
  return y;
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int cin = x.dim(0), vw = x.dim(1), vh = x.dim(2), vd = x.dim(3);
  const int cout = w.dim(0);
  const int64_t nvol = spatial_numel(vw, vh, vd);
  Tensor y({cout, vw, vh, vd});
  for (int co = 0; co < cout; ++co)
    for (int z = 0; z < vd; ++z)
      for (int yy = 0; yy < vh; ++yy)
        for (int xx = 0; xx < vw; ++xx) {
          real acc = b[co];
          for (int ci = 0; ci < cin; ++ci)
            for (int kz = -1; kz <= 1; ++kz)
              for (int ky = -1; ky <= 1; ++ky)
                for (int kx = -1; kx <= 1; ++kx) {
                  const real wv =
                      w[((static_cast<int64_t>(co) * cin + ci) * 27) +
                        ((kz + 1) * 3 + (ky + 1)) * 3 + (kx + 1)];
                  acc += wv * x[ci * nvol + idx3(clampi(xx + kx, vw), clampi(yy + ky, vh),
                                                 clampi(z + kz, vd), vw, vh)];
                }
          y[co * nvol + idx3(xx, yy, z, vw, vh)] = acc;
        }
  return y;
}

Tensor trilinear_sample(const Tensor& vol, const Tensor& coords) {
  const int w = vol.dim(0), h = vol.dim(1), d = vol.dim(2);
  const int64_t npts = coords.numel() / 3;
  Tensor out({coords.dim(1), coords.dim(2), coords.dim(3)});
  for (int64_t p = 0; p < npts; ++p) {
    const real px = clampr(norm_to_voxel(coords[p], w), 0, real(w - 1));
    const real py = clampr(norm_to_voxel(coords[npts + p], h), 0, real(h - 1));
    const real pz = clampr(norm_to_voxel(coords[2 * npts + p], d), 0, real(d - 1));
    const int x0 = static_cast<int>(std::floor(px));
    const int y0 = static_cast<int>(std::floor(py));
    const int z0 = static_cast<int>(std::floor(pz));
    real acc = 0;
    for (int dz = 0; dz <= 1; ++dz)
      for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
          const real wx = dx ? px - x0 : 1 - (px - x0);
          const real wy = dy ? py - y0 : 1 - (py - y0);
          const real wz = dz ? pz - z0 : 1 - (pz - z0);
          acc += wx * wy * wz *
                 vol[idx3(clampi(x0 + dx, w), clampi(y0 + dy, h), clampi(z0 + dz, d), w, h)];
        }
    out[p] = acc;
  }
  return out;
}

Tensor trilinear_splat(const Tensor& coords, std::array<int, 3> target) {
  const int w = target[0], h = target[1], d = target[2];
  const int64_t npts = coords.numel() / 3;
  Tensor out({w, h, d});
  for (int64_t p = 0; p < npts; ++p) {
    const real px = clampr(norm_to_voxel(coords[p], w), 0, real(w - 1));
    const real py = clampr(norm_to_voxel(coords[npts + p], h), 0, real(h - 1));
    const real pz = clampr(norm_to_voxel(coords[2 * npts + p], d), 0, real(d - 1));
    const int x0 = static_cast<int>(std::floor(px));
    const int y0 = static_cast<int>(std::floor(py));
    const int z0 = static_cast<int>(std::floor(pz));
    for (int dz = 0; dz <= 1; ++dz)
      for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
          const real wx = dx ? px - x0 : 1 - (px - x0);
          const real wy = dy ? py - y0 : 1 - (py - y0);
          const real wz = dz ? pz - z0 : 1 - (pz - z0);
          out[idx3(clampi(x0 + dx, w), clampi(y0 + dy, h), clampi(z0 + dz, d), w, h)] +=
              wx * wy * wz;
        }
  }
  return out;
}

Tensor ssim_map(const Tensor& a, const Tensor& b, const kernels::SsimParams& p) {
  const int w = a.dim(0), h = a.dim(1), d = a.dim(2);
  const int r = p.window / 2;

  // full (non-separable) 3D Gaussian window
  std::vector<real> win(static_cast<size_t>(p.window) * p.window * p.window);
  real sum = 0;
  for (int kz = -r; kz <= r; ++kz)
    for (int ky = -r; ky <= r; ++ky)
      for (int kx = -r; kx <= r; ++kx) {
        const real e = std::exp(-(real(kx * kx) + real(ky * ky) + real(kz * kz)) /
                                (2 * p.sigma * p.sigma));
        win[static_cast<size_t>(((kz + r) * p.window + (ky + r)) * p.window + (kx + r))] = e;
        sum += e;
      }
  for (real& v : win) v /= sum;

  Tensor map({w, h, d});
  for (int z = 0; z < d; ++z)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        real ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
        for (int kz = -r; kz <= r; ++kz)
          for (int ky = -r; ky <= r; ++ky)
            for (int kx = -r; kx <= r; ++kx) {
              const real wt =
                  win[static_cast<size_t>(((kz + r) * p.window + (ky + r)) * p.window + (kx + r))];
              const real va =
                  a[idx3(clampi(x + kx, w), clampi(y + ky, h), clampi(z + kz, d), w, h)];
              const real vb =
                  b[idx3(clampi(x + kx, w), clampi(y + ky, h), clampi(z + kz, d), w, h)];
              ma += wt * va;
              mb += wt * vb;
              aa += wt * va * va;
              bb += wt * vb * vb;
              ab += wt * va * vb;
            }
        const real var_a = aa - ma * ma;
        const real var_b = bb - mb * mb;
        const real cov = ab - ma * mb;
        map[idx3(x, y, z, w, h)] = ((2 * ma * mb + p.c1) * (2 * cov + p.c2)) /
                                   ((ma * ma + mb * mb + p.c1) * (var_a + var_b + p.c2));
      }
  return map;
}

}  // namespace ncf::reference
