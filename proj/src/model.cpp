#include "ncf/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace ncf::model {

using kernels::conv3d_backward;
using kernels::conv3d_forward;
using kernels::leaky_relu_backward;
using kernels::leaky_relu_forward;
using kernels::linear_backward;
using kernels::linear_forward;

int64_t count_params(const ModelConfig& cfg) {
  const int64_t h = cfg.hidden_width, c = cfg.sm_channels;
  const int64_t ccm = (3 * h + h) + 3 * (h * h + h) + (3 * h + 3);
  const int64_t sm = (3 * c * 27 + c) + (c * 3 * 27 + 3);
  return ccm + sm;
}

std::vector<ParamRef> ModelParams::enumerate_params() {
  std::vector<ParamRef> out;
  for (size_t l = 0; l < ccm.layers.size(); ++l) {
    auto& lay = ccm.layers[l];
    out.push_back({&lay.w, &lay.gw, "ccm.l" + std::to_string(l + 1) + ".weight"});
    out.push_back({&lay.b, &lay.gb, "ccm.l" + std::to_string(l + 1) + ".bias"});
  }
  for (size_t l = 0; l < sm.layers.size(); ++l) {
    auto& lay = sm.layers[l];
    out.push_back({&lay.w, &lay.gw, "sm.conv" + std::to_string(l + 1) + ".weight"});
    out.push_back({&lay.b, &lay.gb, "sm.conv" + std::to_string(l + 1) + ".bias"});
  }
  return out;
}

void ModelParams::zero_grad() {
  for (auto& p : enumerate_params()) p.grad->fill(real(0));
}

namespace {

// Uniform draw in [-bound, bound) from the top 53 bits of the generator, so
// the value stream does not depend on the standard library's distribution
// implementation.
real uniform_sym(std::mt19937_64& rng, real bound) {
  const real u = real(rng() >> 11) * real(0x1.0p-53);
  return (2 * u - 1) * bound;
}

void fill_uniform(Tensor& t, std::mt19937_64& rng, real bound) {
  for (real& v : t.data) v = uniform_sym(rng, bound);
}

}  // namespace

ModelParams init_params(ModelConfig cfg, uint64_t seed) {
  if (cfg.hidden_width < 1 || cfg.sm_channels < 1)
    throw std::invalid_argument("init_params: hidden_width and sm_channels must be >= 1");
  cfg.seed = seed;
  const int h = cfg.hidden_width, c = cfg.sm_channels;

  ModelParams p;
  p.config = cfg;
  const int dims[6] = {3, h, h, h, h, 3};
  for (int l = 0; l < 5; ++l) {
    auto& lay = p.ccm.layers[static_cast<size_t>(l)];
    lay.w = Tensor({dims[l + 1], dims[l]});
    lay.b = Tensor({dims[l + 1]});
    lay.gw = Tensor(lay.w.shape);
    lay.gb = Tensor(lay.b.shape);
  }
  p.sm.layers[0].w = Tensor({c, 3, 3, 3, 3});
  p.sm.layers[0].b = Tensor({c});
  p.sm.layers[1].w = Tensor({3, c, 3, 3, 3});
  p.sm.layers[1].b = Tensor({3});
  for (auto& lay : p.sm.layers) {
    lay.gw = Tensor(lay.w.shape);
    lay.gb = Tensor(lay.b.shape);
  }

  std::mt19937_64 rng(seed);
  for (int l = 0; l < 4; ++l) {  // final CCM layer stays zero
    auto& lay = p.ccm.layers[static_cast<size_t>(l)];
    const real bound = real(1) / std::sqrt(real(dims[l]));
    fill_uniform(lay.w, rng, bound);
    fill_uniform(lay.b, rng, bound);
  }
  {
    auto& lay = p.sm.layers[0];  // conv2 stays zero
    const real bound = real(1) / std::sqrt(real(3 * 27));
    fill_uniform(lay.w, rng, bound);
    fill_uniform(lay.b, rng, bound);
  }

  p.adam.resize(14);
  return p;
}

Tensor ccm_forward(const CCMParams& p, const Tensor& pts, real slope) {
  if (pts.ndim() != 2 || pts.dim(1) != 3)
    throw std::invalid_argument("ccm_forward: pts must be (N, 3)");
  Tensor cur = pts, next;
  for (int l = 0; l < 5; ++l) {
    linear_forward(cur, p.layers[static_cast<size_t>(l)].w, p.layers[static_cast<size_t>(l)].b, next);
    if (l < 4) leaky_relu_forward(next, slope, cur);
    else cur = next;
  }
  return cur;
}

Tensor sm_forward(const SMParams& p, const Tensor& coarse, real slope) {
  if (coarse.ndim() != 4 || coarse.dim(0) != 3)
    throw std::invalid_argument("sm_forward: coarse must be (3, W, H, D)");
  Tensor pre1, act1, branch;
  conv3d_forward(coarse, p.layers[0].w, p.layers[0].b, pre1);
  leaky_relu_forward(pre1, slope, act1);
  conv3d_forward(act1, p.layers[1].w, p.layers[1].b, branch);
  Tensor out(coarse.shape);
  const int64_t n = coarse.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = coarse[i] + branch[i];
  return out;
}

void rows_to_channels(const Tensor& rows, const std::array<int, 3>& shape, Tensor& chans) {
  const int64_t n = rows.dim(0);
  const int c = rows.dim(1);
  if (n != spatial_numel(shape[0], shape[1], shape[2]))
    throw std::invalid_argument("rows_to_channels: point count does not match shape");
  ensure_shape(chans, {c, shape[0], shape[1], shape[2]});
  const real* src = rows.data.data();
  real* dst = chans.data.data();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i)
    for (int a = 0; a < c; ++a) dst[a * n + i] = src[i * c + a];
}

void channels_to_rows(const Tensor& chans, Tensor& rows) {
  const int c = chans.dim(0);
  const int64_t n = chans.numel() / c;
  ensure_shape(rows, {static_cast<int>(n), c});
  const real* src = chans.data.data();
  real* dst = rows.data.data();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i)
    for (int a = 0; a < c; ++a) dst[i * c + a] = src[a * n + i];
}

void NcfPipeline::forward(const ModelParams& p, const Grid& grid) {
  const real slope = p.config.activation_slope;
  channels_to_rows(grid.coords, pts);

  // CCM: keep the post-activations; leaky_relu preserves sign, so they also
  // carry what the backward pass needs.
  Tensor* cur = &pts;
  for (int l = 0; l < 4; ++l) {
    linear_forward(*cur, p.ccm.layers[static_cast<size_t>(l)].w, p.ccm.layers[static_cast<size_t>(l)].b, lin);
    leaky_relu_forward(lin, slope, act[static_cast<size_t>(l)]);
    cur = &act[static_cast<size_t>(l)];
  }
  linear_forward(*cur, p.ccm.layers[4].w, p.ccm.layers[4].b, coarse_rows);
  rows_to_channels(coarse_rows, grid.shape, coarse);

  conv3d_forward(coarse, p.sm.layers[0].w, p.sm.layers[0].b, pre1);
  leaky_relu_forward(pre1, slope, act1);
  conv3d_forward(act1, p.sm.layers[1].w, p.sm.layers[1].b, branch);

  ensure_shape(offset, coarse.shape);
  ensure_shape(phi, coarse.shape);
  const int64_t n = coarse.numel();
  const real* gp = grid.coords.data.data();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    offset[i] = coarse[i] + branch[i];
    phi[i] = gp[i] + offset[i];
  }
}

void NcfPipeline::backward(ModelParams& p, const Tensor& gphi) {
  const real slope = p.config.activation_slope;
  // d(phi)/d(offset) = 1; the residual SM adds the branch gradient on top.
  conv3d_backward(act1, p.sm.layers[1].w, gphi, &g_act1, &p.sm.layers[1].gw,
                  &p.sm.layers[1].gb);
  leaky_relu_backward(pre1, g_act1, slope, g_pre1);
  conv3d_backward(coarse, p.sm.layers[0].w, g_pre1, &g_coarse, &p.sm.layers[0].gw,
                  &p.sm.layers[0].gb);
  const int64_t n = g_coarse.numel();
  const real* gp = gphi.data.data();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) g_coarse[i] += gp[i];

  channels_to_rows(g_coarse, g_coarse_rows);

  Tensor* gy = &g_coarse_rows;
  for (int l = 4; l >= 0; --l) {
    auto& lay = p.ccm.layers[static_cast<size_t>(l)];
    const Tensor& input = l == 0 ? pts : act[static_cast<size_t>(l - 1)];
    Tensor* gx = l == 0 ? nullptr : (gy == &gy_a ? &gy_b : &gy_a);
    linear_backward(input, lay.w, *gy, gx, &lay.gw, &lay.gb);
    if (l > 0) {
      // act carries the sign of the pre-activation; the elementwise kernel is
      // safe to apply in place
      leaky_relu_backward(act[static_cast<size_t>(l - 1)], *gx, slope, *gx);
      gy = gx;
    }
  }
}

std::pair<VectorField, VectorField> ncf_forward(const ModelParams& p, const Grid& grid) {
  NcfPipeline pipe;
  pipe.forward(p, grid);
  VectorField offset, phi;
  offset.data = pipe.offset;
  offset.unit = FieldUnit::NormalizedOffset;
  phi.data = pipe.phi;
  phi.unit = FieldUnit::NormalizedOffset;
  return {std::move(offset), std::move(phi)};
}

}  // namespace ncf::model
