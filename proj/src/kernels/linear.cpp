#include <cblas.h>

#include <stdexcept>

#include "ncf/kernels.hpp"

namespace ncf::kernels {
namespace {

void check_linear_shapes(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1)
    throw std::invalid_argument("linear: x must be (N,in), w (out,in), b (out)");
  if (x.dim(1) != w.dim(1) || w.dim(0) != b.dim(0))
    throw std::invalid_argument("linear: shape mismatch between x, w, b");
}

}  // namespace

void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
  check_linear_shapes(x, w, b);
  const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
  ensure_shape(y, {n, out});
  if (n == 0) return;
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, n, out, in, 1.0, x.data.data(), in,
              w.data.data(), in, 0.0, y.data.data(), out);
  real* yp = y.data.data();
  const real* bp = b.data.data();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < n; ++r) {
    real* row = yp + static_cast<int64_t>(r) * out;
    for (int o = 0; o < out; ++o) row[o] += bp[o];
  }
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx,
                     Tensor* gw, Tensor* gb) {
  const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (gy.ndim() != 2 || gy.dim(0) != n || gy.dim(1) != out)
    throw std::invalid_argument("linear_backward: gy must be (N,out)");

  if (gx) {
    ensure_shape(*gx, {n, in});
    if (n > 0)
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, n, in, out, 1.0, gy.data.data(),
                  out, w.data.data(), in, 0.0, gx->data.data(), in);
  }
  if (gw) {
    ensure_shape(*gw, {out, in});
    if (n > 0)
      cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, out, in, n, 1.0, gy.data.data(),
                  out, x.data.data(), in, 0.0, gw->data.data(), in);
  }
  if (gb) {
    ensure_shape(*gb, {out});
    real* gbp = gb->data.data();
    const real* gyp = gy.data.data();
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out; ++o) {
      real acc = 0;
      for (int r = 0; r < n; ++r) acc += gyp[static_cast<int64_t>(r) * out + o];
      gbp[o] = acc;
    }
  }
}

}  // namespace ncf::kernels
