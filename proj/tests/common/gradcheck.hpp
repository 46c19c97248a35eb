#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "bridgestain/rng.hpp"
#include "bridgestain/schedule.hpp"
#include "bridgestain/training.hpp"

namespace testutil {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Compares the analytic loss gradient of every parameter entry of a tiny
// double-precision model against central differences with step h.
inline GradCheck gradient_check(double h = 1e-5) {
  using namespace bridgestain;
  nn::UNetConfig u;
  u.levels = 2;
  u.base_width = 4;
  u.attention_heads = 2;
  u.time_embed_dim = 8;
  u.norm_groups = 2;
  nn::ConditionerConfig c;
  c.in_channels = 4;
  c.hidden = 4;
  c.factor = 2;
  nn::DiffusionModel<double> model(u, c);
  model.init(3);
  const BridgeSchedule s = build_schedule(1000);
  std::vector<ImageTensor> x0, y0, eps;
  RngStream rng(17);
  auto fill = [&](int h_, int w_, int ch) {
    ImageTensor t(h_, w_, ch, Semantics::normalized_latent, {-1e300, 1e300});
    for (double& v : t.data()) v = rng.normal();
    return t;
  };
  for (int b = 0; b < 2; ++b) {
    x0.push_back(fill(8, 8, 3));
    y0.push_back(fill(4, 4, 4));
    eps.push_back(fill(8, 8, 3));
  }
  const std::vector<int> ts{3, 640};
  const TrainingConfig cfg;
  auto params = model.all_params();
  for (auto* p : params) p->grad.setZero();
  loss_and_gradients(model, s, x0, y0, ts, eps, cfg);
  std::vector<nn::Matrix<double>> analytic;
  for (auto* p : params) analytic.push_back(p->grad);
  auto loss = [&] {
    for (auto* p : params) p->grad.setZero();
    return loss_and_gradients(model, s, x0, y0, ts, eps, cfg);
  };
  GradCheck r;
  for (std::size_t q = 0; q < params.size(); ++q) {
    auto& v = params[q]->value;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      const double keep = v(k);
      v(k) = keep + h;
      const double up = loss();
      v(k) = keep - h;
      const double down = loss();
      v(k) = keep;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[q](k);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      r.max_rel_error = std::max(r.max_rel_error, std::abs(a - numeric) / denom);
      ++r.checked;
    }
  }
  return r;
}

}  // namespace testutil
