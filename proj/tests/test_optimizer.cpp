#include <doctest.h>

#include <cmath>
#include <vector>

#include "ncf/errors.hpp"
#include "ncf/kernels.hpp"

using namespace ncf;
namespace K = ncf::kernels;

TEST_CASE("cosine_lr endpoints and midpoint") {
  CHECK(K::cosine_lr(0, 200, 1e-3, 1e-6) == 1e-3);
  CHECK(K::cosine_lr(200, 200, 1e-3, 1e-6) == 1e-6);
  CHECK(K::cosine_lr(100, 200, 1e-3, 1e-6) == doctest::Approx((1e-3 + 1e-6) / 2).epsilon(1e-12));
  CHECK(K::cosine_lr(1, 200, 1e-3, 1e-6) < 1e-3);
  CHECK_THROWS_AS(K::cosine_lr(5, 4, 1e-3, 1e-6), std::invalid_argument);
}

TEST_CASE("adam: first step moves by about lr, zero gradient is a fixed point") {
  Tensor p({3});
  p.data = {1.0, -2.0, 0.5};
  K::AdamState st;
  K::adam_step(p, {0.3, -0.7, 4.0}, st, 0.01, "p");
  CHECK(std::abs(std::abs(p[0] - 1.0) - 0.01) < 1e-6);
  CHECK(std::abs(std::abs(p[1] + 2.0) - 0.01) < 1e-6);
  CHECK(p[0] < 1.0);   // moves against the gradient
  CHECK(p[1] > -2.0);
  CHECK(st.t == 1);

  Tensor q({2});
  q.data = {3.0, -4.0};
  K::AdamState st2;
  for (int i = 0; i < 5; ++i) K::adam_step(q, {0.0, 0.0}, st2, 0.1, "q");
  CHECK(q[0] == 3.0);
  CHECK(q[1] == -4.0);
  CHECK(st2.t == 5);
}

TEST_CASE("adam: 10 steps on x^2 match an independent scalar trace") {
  // reference trace computed by a self-contained Adam recurrence
  double m = 0, v = 0, xr = 1.0;
  std::vector<double> expect;
  for (int t = 1; t <= 10; ++t) {
    const double g = 2 * xr;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    xr -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    expect.push_back(xr);
  }

  Tensor x({1});
  x.data = {1.0};
  K::AdamState st;
  real prev = 1.0;
  for (int t = 0; t < 10; ++t) {
    K::adam_step(x, {2 * x[0]}, st, 0.1, "x");
    CHECK(std::abs(x[0] - expect[static_cast<size_t>(t)]) < 1e-10);
    CHECK(std::abs(x[0]) < std::abs(prev));
    prev = x[0];
  }
}

TEST_CASE("adam rejects non-finite gradients with the parameter name") {
  Tensor p({2});
  K::AdamState st;
  CHECK_THROWS_WITH_AS(K::adam_step(p, {1.0, std::nan("")}, st, 0.1, "ccm.l2.weight"),
                       doctest::Contains("ccm.l2.weight"), numerical_error);
}
