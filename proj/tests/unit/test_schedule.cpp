#include <doctest.h>

#include <cmath>
#include <sstream>

#include "bridgestain/error.hpp"
#include "bridgestain/schedule.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace bridgestain;

using testutil::conditioning_oracle;
using Oracle = testutil::ConditioningOracle;

TEST_CASE("schedule endpoints and symmetry") {
  const BridgeSchedule s = build_schedule(1000);
  CHECK(s.m[500] == 0.5);
  CHECK(s.delta[500] == 0.5);
  CHECK(s.delta[0] == 0.0);
  CHECK(s.delta[1000] == 0.0);
  CHECK(s.m[0] == 0.0);
  CHECK(s.m[1000] == 1.0);
  CHECK(s.delta_tilde[1] == 0.0);
  for (int t = 1; t <= 1000; ++t) {
    CHECK(s.m[t] > s.m[t - 1]);
    CHECK(std::abs(s.delta[t] - s.delta[1000 - t]) <= 1e-15);
    CHECK(s.delta_tilde[t] >= 0.0);
    if (t < 1000) CHECK(s.delta_step[t] >= 0.0);
  }
  double peak = 0;
  for (double d : s.delta) peak = std::max(peak, d);
  CHECK(peak == 0.5);
  CHECK(s.delta_tilde[1000] == s.delta[999]);
  CHECK_THROWS_AS(build_schedule(1), Error);
}

TEST_CASE("coefficients match the Gaussian conditioning oracle") {
  const int T = 10;
  const BridgeSchedule s = build_schedule(T);
  for (int t = 2; t <= T - 1; ++t) {
    const Oracle o = conditioning_oracle(T, t);
    CHECK(std::abs(s.c_x[t] - o.c_x) < 1e-10);
    CHECK(std::abs(s.c_y[t] - o.c_y) < 1e-10);
    CHECK(std::abs(s.c_eps[t] - o.c_eps) < 1e-10);
    CHECK(std::abs(s.delta_tilde[t] - o.var) < 1e-10);
  }
  CHECK(s.c_x[1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(s.c_y[1]) < 1e-15);
  CHECK(s.c_eps[1] == doctest::Approx(1.0).epsilon(1e-14));
  const double m = double(T - 1) / T;
  CHECK(std::abs(s.c_x[T] - (1 - m)) < 1e-10);
  CHECK(std::abs(s.c_eps[T] - (1 - m)) < 1e-10);
  CHECK(std::abs(s.c_y[T] - m) < 1e-10);
  CHECK(std::abs(s.delta_tilde[T] - 2 * m * (1 - m)) < 1e-10);
}

TEST_CASE("one-step forward kernel composes to the marginal") {
  const int T = 10;
  const BridgeSchedule s = build_schedule(T);
  const double x0 = 0.3, y = -1.2;
  for (int t = 1; t <= T - 1; ++t) {
    const double a = (1 - s.m[t]) / (1 - s.m[t - 1]);
    const double b = s.m[t] - s.m[t - 1] * a;
    const double mean_prev = (1 - s.m[t - 1]) * x0 + s.m[t - 1] * y;
    CHECK(std::abs(a * mean_prev + b * y - ((1 - s.m[t]) * x0 + s.m[t] * y)) < 1e-10);
    CHECK(std::abs(a * a * s.delta[t - 1] + s.delta_step[t] - s.delta[t]) < 1e-10);
  }
}

TEST_CASE("forward sample endpoints and target identity") {
  const BridgeSchedule s = build_schedule(100);
  const ImageTensor x0 = testutil::random_normal(4, 4, 3, 1);
  const ImageTensor y = testutil::random_normal(4, 4, 3, 2);
  RngStream rng(5);
  CHECK(forward_sample(s, x0, y, 0, rng).x_t == x0);
  CHECK(max_abs_diff(forward_sample(s, x0, y, 100, rng).x_t, y) == 0.0);
  const ImageTensor eps = testutil::random_normal(4, 4, 3, 3);
  const ImageTensor zero = training_target(s, x0, y, 0, eps);
  CHECK(std::all_of(zero.data().begin(), zero.data().end(), [](double v) { return v == 0.0; }));
  CHECK(max_abs_diff(training_target(s, x0, y, 100, eps), y - x0) < 1e-15);
  for (int t : {1, 37, 99}) {
    RngStream r(t);
    const auto d = forward_sample(s, x0, y, t, r);
    CHECK(max_abs_diff(training_target(s, x0, y, t, d.eps), d.x_t - x0) < 1e-12);
  }
  CHECK_THROWS_AS(forward_sample(s, x0, ImageTensor(4, 4, 1), 3, rng), Error);
}

TEST_CASE("forward marginal variance at the midpoint") {
  const BridgeSchedule s = build_schedule(1000);
  const ImageTensor z(1, 1, 1, Semantics::normalized_latent);
  RngStream rng(99);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const double v = forward_sample(s, z, z, 500, rng).x_t.data()[0];
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  CHECK(std::abs(sq / n - mean * mean - 0.5) < 0.02);
}

TEST_CASE("posterior mean identities") {
  const int T = 10;
  const BridgeSchedule s = build_schedule(T);
  const ImageTensor x0 = testutil::random_normal(3, 3, 3, 7);
  const ImageTensor y = testutil::random_normal(3, 3, 3, 8);
  RngStream rng(1);
  const ImageTensor x1 = forward_sample(s, x0, y, 1, rng).x_t;
  CHECK(max_abs_diff(posterior_mean(s, x1, y, 1, x1 - x0), x0) < 1e-12);
  CHECK(max_abs_diff(x0_from_eps(x1, x1 - x0), posterior_mean(s, x1, y, 1, x1 - x0)) < 1e-10);
  const ImageTensor zero(3, 3, 3, Semantics::normalized_latent, {-1e300, 1e300});
  const ImageTensor x5 = forward_sample(s, x0, y, 5, rng).x_t;
  CHECK(max_abs_diff(posterior_mean(s, x5, y, 5, zero), s.c_x[5] * x5 + s.c_y[5] * y) < 1e-15);
  CHECK(max_abs_diff(x0_from_eps(x5, zero), x5) == 0.0);
  CHECK_THROWS_AS(posterior_mean(s, x5, y, 0, zero), Error);
  CHECK_THROWS_AS(posterior_mean(s, x5, y, T, zero), Error);

  const double xs0 = 0.4, ys = -0.7, xt = 0.1;
  for (int t = 2; t <= T - 1; ++t) {
    const Oracle o = conditioning_oracle(T, t);
    const ImageTensor X(1, 1, 1, {xt}, Semantics::normalized_latent, {-9, 9});
    const ImageTensor Y(1, 1, 1, {ys}, Semantics::normalized_latent, {-9, 9});
    const ImageTensor E(1, 1, 1, {xt - xs0}, Semantics::normalized_latent, {-9, 9});
    const double oracle_mean = o.c_x * xt + o.c_y * ys - o.c_eps * (xt - xs0);
    CHECK(std::abs(posterior_mean(s, X, Y, t, E).data()[0] - oracle_mean) < 1e-10);
  }
}

TEST_CASE("schedule csv header") {
  std::ostringstream os;
  write_schedule_csv(os, build_schedule(4));
  CHECK(os.str().rfind("t,m_t,delta_t,delta_step_t,delta_tilde_t,c_x,c_y,c_eps\r\n", 0) == 0);
}
