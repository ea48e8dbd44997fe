#include <stdexcept>

#include "ncf/kernels.hpp"

namespace ncf::kernels {

void leaky_relu_forward(const Tensor& x, real slope, Tensor& y) {
  if (!(slope >= real(0) && slope < real(1)))
    throw std::invalid_argument("leaky_relu: slope must be in [0,1)");
  ensure_shape(y, x.shape);
  const int64_t n = x.numel();
  const real* xp = x.data.data();
  real* yp = y.data.data();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) yp[i] = xp[i] >= real(0) ? xp[i] : slope * xp[i];
}

void leaky_relu_backward(const Tensor& x, const Tensor& gy, real slope, Tensor& gx) {
  if (!x.same_shape(gy)) throw std::invalid_argument("leaky_relu_backward: shape mismatch");
  ensure_shape(gx, x.shape);
  const int64_t n = x.numel();
  const real* xp = x.data.data();
  const real* gp = gy.data.data();
  real* op = gx.data.data();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) op[i] = xp[i] >= real(0) ? gp[i] : slope * gp[i];
}

}  // namespace ncf::kernels
