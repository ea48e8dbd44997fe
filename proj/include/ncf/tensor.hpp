#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

namespace ncf {

using real = double;

// Dense tensor of reals with an optional gradient buffer of the same shape.
//
// Layout convention used throughout: spatial volumes are stored x-fastest,
// i.e. index(x, y, z) = (z * H + y) * W + x for shape (W, H, D). Channelled
// tensors put the channel outermost: index(c, x, y, z) = c * W*H*D + index3.
// Matrices (N, K) are row-major with K fastest.
struct Tensor {
  std::vector<real> data;
  std::vector<int> shape;
  std::vector<real> grad;  // empty unless alloc_grad() was called

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), real(0));
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  real& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  real operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  void alloc_grad() { grad.assign(data.size(), real(0)); }
  void zero_grad() { grad.assign(grad.size(), real(0)); }
  bool has_grad() const { return !grad.empty(); }

  void fill(real v) { data.assign(data.size(), v); }
};

// Reshapes without zero-filling when the element count already matches;
// kernels that fully overwrite their output use this to reuse buffers.
inline void ensure_shape(Tensor& t, std::vector<int> shape) {
  const int64_t n = Tensor::numel_of(shape);
  if (t.numel() != n) t.data.assign(static_cast<size_t>(n), real(0));
  t.shape = std::move(shape);
}

inline int64_t spatial_numel(int w, int h, int d) {
  return static_cast<int64_t>(w) * h * d;
}

inline int64_t idx3(int x, int y, int z, int w, int h) {
  return (static_cast<int64_t>(z) * h + y) * w + x;
}

// Sum of f(0..n-1) over fixed-size chunks, chunk partials added in index
// order. The result is bitwise independent of the thread count.
template <class F>
real chunked_sum(int64_t n, F&& f) {
  constexpr int64_t kChunk = 8192;
  const int64_t nchunks = (n + kChunk - 1) / kChunk;
  std::vector<real> partial(static_cast<size_t>(nchunks), real(0));
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < nchunks; ++c) {
    const int64_t end = std::min(n, (c + 1) * kChunk);
    real acc = 0;
    for (int64_t i = c * kChunk; i < end; ++i) acc += f(i);
    partial[static_cast<size_t>(c)] = acc;
  }
  real total = 0;
  for (real v : partial) total += v;
  return total;
}

}  // namespace ncf
