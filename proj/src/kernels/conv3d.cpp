#include <stdexcept>
#include <vector>

#include "ncf/kernels.hpp"

namespace ncf::kernels {
namespace {

void check_conv_shapes(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 4) throw std::invalid_argument("conv3d: x must be (Cin, W, H, D)");
  if (w.ndim() != 5 || w.dim(2) != 3 || w.dim(3) != 3 || w.dim(4) != 3)
    throw std::invalid_argument("conv3d: w must be (Cout, Cin, 3, 3, 3)");
  if (b.ndim() != 1 || b.dim(0) != w.dim(0))
    throw std::invalid_argument("conv3d: b must be (Cout)");
  if (w.dim(1) != x.dim(0))
    throw std::invalid_argument("conv3d: input channel count mismatch");
}

// Replicate-pads every channel by one voxel on each side.
std::vector<real> pad_replicate(const Tensor& x) {
  const int c = x.dim(0), w = x.dim(1), h = x.dim(2), d = x.dim(3);
  const int pw = w + 2, ph = h + 2, pd = d + 2;
  std::vector<real> out(static_cast<size_t>(c) * pw * ph * pd);
  const int64_t nsrc = spatial_numel(w, h, d);
  const int64_t ndst = spatial_numel(pw, ph, pd);
  auto clamp = [](int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); };
#pragma omp parallel for collapse(2) schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    for (int z = 0; z < pd; ++z) {
      const real* src = x.data.data() + ci * nsrc;
      real* dst = out.data() + ci * ndst;
      const int sz = clamp(z - 1, d);
      for (int y = 0; y < ph; ++y) {
        const int sy = clamp(y - 1, h);
        for (int x0 = 0; x0 < pw; ++x0)
          dst[idx3(x0, y, z, pw, ph)] = src[idx3(clamp(x0 - 1, w), sy, sz, w, h)];
      }
    }
  }
  return out;
}

}  // namespace

void conv3d_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
  check_conv_shapes(x, w, b);
  const int cin = x.dim(0), vw = x.dim(1), vh = x.dim(2), vd = x.dim(3);
  const int cout = w.dim(0);
  const int pw = vw + 2, ph = vh + 2;
  const std::vector<real> xp = pad_replicate(x);
  const int64_t npad = spatial_numel(pw, ph, vd + 2);
  const int64_t nvol = spatial_numel(vw, vh, vd);

  ensure_shape(y, {cout, vw, vh, vd});
#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < cout; ++co) {
    for (int z = 0; z < vd; ++z) {
      real* dst = y.data.data() + co * nvol;
      for (int yy = 0; yy < vh; ++yy) {
        for (int xx = 0; xx < vw; ++xx) {
          real acc = b.data[static_cast<size_t>(co)];
          for (int ci = 0; ci < cin; ++ci) {
            const real* src = xp.data() + ci * npad;
            const real* wk = w.data.data() + (static_cast<int64_t>(co) * cin + ci) * 27;
            for (int kz = 0; kz < 3; ++kz)
              for (int ky = 0; ky < 3; ++ky) {
                const real* row = src + idx3(xx, yy + ky, z + kz, pw, ph);
                const real* wr = wk + (kz * 3 + ky) * 3;
                acc += wr[0] * row[0] + wr[1] * row[1] + wr[2] * row[2];
              }
          }
          dst[idx3(xx, yy, z, vw, vh)] = acc;
        }
      }
    }
  }
}

void conv3d_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx,
                     Tensor* gw, Tensor* gb) {
  const int cin = x.dim(0), vw = x.dim(1), vh = x.dim(2), vd = x.dim(3);
  const int cout = w.dim(0);
  if (gy.ndim() != 4 || gy.dim(0) != cout || gy.dim(1) != vw || gy.dim(2) != vh ||
      gy.dim(3) != vd)
    throw std::invalid_argument("conv3d_backward: gy shape mismatch");
  const int pw = vw + 2, ph = vh + 2, pd = vd + 2;
  const int64_t npad = spatial_numel(pw, ph, pd);
  const int64_t nvol = spatial_numel(vw, vh, vd);

  if (gx) {
    // Adjoint of pad-then-correlate: full correlation with flipped taps into
    // the padded grid, then fold the padded border back onto the edge voxels.
    std::vector<real> gpad(static_cast<size_t>(cin) * npad, real(0));
#pragma omp parallel for collapse(2) schedule(static)
    for (int ci = 0; ci < cin; ++ci) {
      for (int uz = 0; uz < pd; ++uz) {
        real* dst = gpad.data() + ci * npad;
        for (int uy = 0; uy < ph; ++uy) {
          for (int ux = 0; ux < pw; ++ux) {
            real acc = 0;
            for (int co = 0; co < cout; ++co) {
              const real* g = gy.data.data() + co * nvol;
              const real* wk = w.data.data() + (static_cast<int64_t>(co) * cin + ci) * 27;
              for (int kz = 0; kz < 3; ++kz) {
                const int vz = uz - kz;
                if (vz < 0 || vz >= vd) continue;
                for (int ky = 0; ky < 3; ++ky) {
                  const int vy = uy - ky;
                  if (vy < 0 || vy >= vh) continue;
                  for (int kx = 0; kx < 3; ++kx) {
                    const int vx = ux - kx;
                    if (vx < 0 || vx >= vw) continue;
                    acc += wk[(kz * 3 + ky) * 3 + kx] * g[idx3(vx, vy, vz, vw, vh)];
                  }
                }
              }
            }
            dst[idx3(ux, uy, uz, pw, ph)] = acc;
          }
        }
      }
    }

    ensure_shape(*gx, {cin, vw, vh, vd});
    gx->fill(real(0));  // the fold below accumulates
    auto clamp = [](int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); };
    auto fold_slab = [&](int ci, int uz) {
      const real* src = gpad.data() + ci * npad;
      real* dst = gx->data.data() + ci * nvol;
      const int tz = clamp(uz - 1, vd);
      for (int uy = 0; uy < ph; ++uy) {
        const int ty = clamp(uy - 1, vh);
        for (int ux = 0; ux < pw; ++ux)
          dst[idx3(clamp(ux - 1, vw), ty, tz, vw, vh)] += src[idx3(ux, uy, uz, pw, ph)];
      }
    };
    // Interior slabs write disjoint z-slices; border slabs share targets with
    // them and run serially afterwards.
#pragma omp parallel for collapse(2) schedule(static)
    for (int ci = 0; ci < cin; ++ci)
      for (int uz = 1; uz <= vd; ++uz) fold_slab(ci, uz);
    for (int ci = 0; ci < cin; ++ci) {
      fold_slab(ci, 0);
      fold_slab(ci, pd - 1);
    }
  }

  if (gw) {
    const std::vector<real> xp = pad_replicate(x);
    ensure_shape(*gw, w.shape);
    const int64_t entries = static_cast<int64_t>(cout) * cin * 27;
#pragma omp parallel for schedule(static)
    for (int64_t e = 0; e < entries; ++e) {
      const int co = static_cast<int>(e / (cin * 27));
      const int ci = static_cast<int>((e / 27) % cin);
      const int k = static_cast<int>(e % 27);
      const int kz = k / 9, ky = (k / 3) % 3, kx = k % 3;
      const real* g = gy.data.data() + co * nvol;
      const real* src = xp.data() + ci * npad;
      real acc = 0;
      for (int z = 0; z < vd; ++z)
        for (int yy = 0; yy < vh; ++yy) {
          const real* grow = g + idx3(0, yy, z, vw, vh);
          const real* srow = src + idx3(kx, yy + ky, z + kz, pw, ph);
          for (int xx = 0; xx < vw; ++xx) acc += grow[xx] * srow[xx];
        }
      gw->data[static_cast<size_t>(e)] = acc;
    }
  }

  if (gb) {
    ensure_shape(*gb, {cout});
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
      const real* g = gy.data.data() + co * nvol;
      real acc = 0;
      for (int64_t i = 0; i < nvol; ++i) acc += g[i];
      gb->data[static_cast<size_t>(co)] = acc;
    }
  }
}

}  // namespace ncf::kernels
