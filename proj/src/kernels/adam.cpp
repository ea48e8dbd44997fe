#include <cmath>
#include <stdexcept>

#include "ncf/errors.hpp"
#include "ncf/kernels.hpp"

namespace ncf::kernels {

void adam_step(Tensor& param, const std::vector<real>& grad, AdamState& state, real lr,
               const std::string& name) {
  const size_t n = param.data.size();
  if (grad.size() != n) throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
  if (!(lr > real(0))) throw std::invalid_argument("adam_step: lr must be positive");
  if (state.m.empty()) state.m.assign(n, real(0));
  if (state.v.empty()) state.v.assign(n, real(0));
  if (state.m.size() != n || state.v.size() != n)
    throw std::invalid_argument("adam_step: state shape mismatch for " + name);

  for (size_t i = 0; i < n; ++i)
    if (!std::isfinite(grad[i]))
      throw numerical_error("non-finite gradient in parameter " + name);

  state.t += 1;
  const real bc1 = real(1) - std::pow(state.beta1, real(state.t));
  const real bc2 = real(1) - std::pow(state.beta2, real(state.t));
  real* p = param.data.data();
  real* m = state.m.data();
  real* v = state.v.data();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
    const real g = grad[static_cast<size_t>(i)];
    m[i] = state.beta1 * m[i] + (real(1) - state.beta1) * g;
    v[i] = state.beta2 * v[i] + (real(1) - state.beta2) * g * g;
    const real mhat = m[i] / bc1;
    const real vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

real cosine_lr(int64_t step, int64_t total, real lr0, real lr1) {
  if (total < 1) throw std::invalid_argument("cosine_lr: total must be >= 1");
  if (step < 0 || step > total) throw std::invalid_argument("cosine_lr: step out of range");
  if (step == 0) return lr0;
  if (step == total) return lr1;
  const real c = std::cos(real(M_PI) * real(step) / real(total));
  return lr1 + real(0.5) * (lr0 - lr1) * (real(1) + c);
}

}  // namespace ncf::kernels
