#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ncf/kernels.hpp"
#include "ncf/tensor.hpp"
#include "ncf/volume.hpp"

namespace ncf::model {

struct ModelConfig {
  int hidden_width = 128;
  int sm_channels = 16;
  real activation_slope = 0.01;
  uint64_t seed = 0;
};

struct LinearLayer {
  Tensor w, b;    // (out, in), (out)
  Tensor gw, gb;  // gradients, same shapes
};

struct ConvLayer {
  Tensor w, b;  // (Cout, Cin, 3, 3, 3), (Cout)
  Tensor gw, gb;
};

// Coordinate MLP: 3 -> h -> h -> h -> h -> 3, leaky-relu between layers.
struct CCMParams {
  std::array<LinearLayer, 5> layers;
};

// Residual smoothing CNN: offset = coarse + conv2(leaky_relu(conv1(coarse))).
struct SMParams {
  std::array<ConvLayer, 2> layers;
};

struct ParamRef {
  Tensor* value;
  Tensor* grad;
  std::string name;
};

struct ModelParams {
  ModelConfig config;
  CCMParams ccm;
  SMParams sm;
  std::vector<kernels::AdamState> adam;  // parallel to enumerate_params order

  std::vector<ParamRef> enumerate_params();
  void zero_grad();
};

// Exact learnable-parameter count for a configuration.
int64_t count_params(const ModelConfig& cfg);

// Hidden layers draw from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the last layer
// of both modules is zero-initialized so the initial offset field vanishes.
// Deterministic per seed.
ModelParams init_params(ModelConfig cfg, uint64_t seed);

// Stand-alone forwards (tests and small-scale use).
Tensor ccm_forward(const CCMParams& p, const Tensor& pts, real slope);
Tensor sm_forward(const SMParams& p, const Tensor& coarse, real slope);
std::pair<VectorField, VectorField> ncf_forward(const ModelParams& p, const Grid& grid);

// Fixed-topology pipeline with reusable buffers for the optimization loop.
struct NcfPipeline {
  // forward state
  Tensor pts;                 // (N, 3) flattened grid rows
  std::array<Tensor, 4> act;  // hidden post-activations (N, h)
  Tensor coarse_rows;         // (N, 3)
  Tensor coarse;              // (3, W, H, D)
  Tensor pre1, act1, branch;  // SM intermediates (c|3, W, H, D)
  Tensor offset;              // (3, W, H, D) normalized offsets
  Tensor phi;                 // (3, W, H, D) grid + offset

  // scratch
  Tensor lin;
  Tensor gy_a, gy_b;
  Tensor g_act1, g_pre1, g_coarse, g_coarse_rows;

  // Computes offset and phi for the given grid.
  void forward(const ModelParams& p, const Grid& grid);
  // Accumulates parameter gradients for d(loss)/d(phi) = gphi. Must follow a
  // forward() call with the same params and grid.
  void backward(ModelParams& p, const Tensor& gphi);
};

void rows_to_channels(const Tensor& rows, const std::array<int, 3>& shape, Tensor& chans);
void channels_to_rows(const Tensor& chans, Tensor& rows);

}  // namespace ncf::model
