#pragma once

#include <iosfwd>
#include <vector>

#include "bridgestain/image.hpp"

namespace bridgestain {

class RngStream;

/// Precomputed Brownian-bridge schedule for T steps.
///
/// Arrays are indexed by t in [0, T]. The bridge marginal is
///   x_t ~ N((1 - m_t) x_0 + m_t y, delta_t I),  m_t = t/T,  delta_t = 2 m_t (1 - m_t).
/// For 1 <= t <= T-1 the reverse posterior q(x_{t-1} | x_t, x_0, y) with
/// x_0 = x_t - eps has mean c_x x_t + c_y y - c_eps eps and variance delta_tilde.
///
/// Entry t = T is the pinned terminal step: x_T = y carries no information
/// about x_0 beyond eps, so x_{T-1} is drawn from the bridge marginal at T-1
/// around x0_hat = x_T - eps. Its coefficients are stored in the same slots
/// (c_x = c_eps = 1 - m_{T-1}, c_y = m_{T-1}, delta_tilde = delta_{T-1}),
/// which lets the sampler treat every step uniformly.
struct BridgeSchedule {
  int T = 0;
  std::vector<double> m;
  std::vector<double> delta;
  std::vector<double> delta_step;   // delta_{t|t-1}; zero at t = 0 and unused at t = T
  std::vector<double> delta_tilde;
  std::vector<double> c_x;
  std::vector<double> c_y;
  std::vector<double> c_eps;

  bool is_pinned_terminal(int t) const noexcept { return t == T; }
};

BridgeSchedule build_schedule(int T);

/// x_t = x_0 + m_t (y - x_0) + sqrt(delta_t) eps with eps drawn from rng.
struct ForwardDraw {
  ImageTensor x_t;
  ImageTensor eps;
};
ForwardDraw forward_sample(const BridgeSchedule& s, const ImageTensor& x0, const ImageTensor& y,
                           int t, RngStream& rng);
/// Same as forward_sample with a caller-supplied eps.
ImageTensor forward_with_noise(const BridgeSchedule& s, const ImageTensor& x0,
                               const ImageTensor& y, int t, const ImageTensor& eps);

/// m_t (y - x_0) + sqrt(delta_t) eps, i.e. x_t - x_0.
ImageTensor training_target(const BridgeSchedule& s, const ImageTensor& x0, const ImageTensor& y,
                            int t, const ImageTensor& eps);

/// c_x x_t + c_y y - c_eps eps_hat for 1 <= t <= T-1.
ImageTensor posterior_mean(const BridgeSchedule& s, const ImageTensor& x_t, const ImageTensor& y,
                           int t, const ImageTensor& eps_hat);

ImageTensor x0_from_eps(const ImageTensor& x_t, const ImageTensor& eps_hat);

/// CSV with columns t,m_t,delta_t,delta_step_t,delta_tilde_t,c_x,c_y,c_eps.
void write_schedule_csv(std::ostream& os, const BridgeSchedule& s);

}  // namespace bridgestain
