#include "bridgestain/schedule.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "bridgestain/error.hpp"
#include "bridgestain/rng.hpp"

namespace bridgestain {

BridgeSchedule build_schedule(int T) {
  require(T >= 2, ErrorCode::invalid_config, "schedule needs T >= 2, got " + std::to_string(T));
  BridgeSchedule s;
  s.T = T;
  const std::size_t n = static_cast<std::size_t>(T) + 1;
  s.m.assign(n, 0.0);
  s.delta.assign(n, 0.0);
  s.delta_step.assign(n, 0.0);
  s.delta_tilde.assign(n, 0.0);
  s.c_x.assign(n, 0.0);
  s.c_y.assign(n, 0.0);
  s.c_eps.assign(n, 0.0);

  const double TT = static_cast<double>(T) * T;
  for (int t = 0; t <= T; ++t) {
    s.m[t] = static_cast<double>(t) / T;
    // t (T - t) is an exact integer, so delta_t == delta_{T-t} bit for bit.
    s.delta[t] = 2.0 * (static_cast<double>(t) * (T - t)) / TT;
  }

  for (int t = 1; t < T; ++t) {
    const double m_prev = s.m[t - 1], m_t = s.m[t];
    const double d_prev = s.delta[t - 1], d_t = s.delta[t];
    const double a = (1.0 - m_t) / (1.0 - m_prev);
    // delta_t - delta_{t-1} a^2, rearranged so it cannot go negative by cancellation.
    const double d_step = 2.0 * (1.0 - m_t) * (m_t - m_prev) / (1.0 - m_prev);
    s.delta_step[t] = d_step;
    s.delta_tilde[t] = d_step * d_prev / d_t;
    s.c_x[t] = (d_prev / d_t) * a + (d_step / d_t) * (1.0 - m_prev);
    s.c_y[t] = m_prev - m_t * a * (d_prev / d_t);
    s.c_eps[t] = (1.0 - m_prev) * (d_step / d_t);
  }

  const double m_last = s.m[T - 1];
  s.delta_step[T] = 0.0;
  s.delta_tilde[T] = s.delta[T - 1];
  s.c_x[T] = 1.0 - m_last;
  s.c_y[T] = m_last;
  s.c_eps[T] = 1.0 - m_last;
  return s;
}

ImageTensor forward_with_noise(const BridgeSchedule& s, const ImageTensor& x0,
                               const ImageTensor& y, int t, const ImageTensor& eps) {
  require_same_shape(x0, y, "forward_sample");
  require_same_shape(x0, eps, "forward_sample");
  require(t >= 0 && t <= s.T, ErrorCode::invalid_step, "forward step out of range");
  ImageTensor x_t = x0;
  const double m = s.m[t], sd = std::sqrt(s.delta[t]);
  auto o = x_t.data();
  auto xd = x0.data();
  auto yd = y.data();
  auto ed = eps.data();
  if (t == s.T) {
    // m_T = 1, delta_T = 0: land exactly on y rather than x0 + (y - x0).
    std::copy(yd.begin(), yd.end(), o.begin());
  } else {
    for (std::size_t k = 0; k < o.size(); ++k) o[k] = xd[k] + m * (yd[k] - xd[k]) + sd * ed[k];
  }
  x_t.set_semantics(y.semantics());
  x_t.set_range(y.range());
  return x_t;
}

ForwardDraw forward_sample(const BridgeSchedule& s, const ImageTensor& x0, const ImageTensor& y,
                           int t, RngStream& rng) {
  require_same_shape(x0, y, "forward_sample");
  ImageTensor eps(x0.height(), x0.width(), x0.channels(), Semantics::normalized_latent,
                  ValueRange{-INFINITY, INFINITY});
  for (double& v : eps.data()) v = rng.normal();
  ImageTensor x_t = forward_with_noise(s, x0, y, t, eps);
  return {std::move(x_t), std::move(eps)};
}

ImageTensor training_target(const BridgeSchedule& s, const ImageTensor& x0, const ImageTensor& y,
                            int t, const ImageTensor& eps) {
  require_same_shape(x0, y, "training_target");
  require_same_shape(x0, eps, "training_target");
  require(t >= 0 && t <= s.T, ErrorCode::invalid_step, "training step out of range");
  ImageTensor out(x0.height(), x0.width(), x0.channels(), Semantics::normalized_latent,
                  ValueRange{-INFINITY, INFINITY});
  const double m = s.m[t], sd = std::sqrt(s.delta[t]);
  auto o = out.data();
  auto xd = x0.data();
  auto yd = y.data();
  auto ed = eps.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = m * (yd[k] - xd[k]) + sd * ed[k];
  return out;
}

ImageTensor posterior_mean(const BridgeSchedule& s, const ImageTensor& x_t, const ImageTensor& y,
                           int t, const ImageTensor& eps_hat) {
  require(t >= 1 && t <= s.T - 1, ErrorCode::invalid_step,
          "posterior_mean defined for 1 <= t <= T-1, got t=" + std::to_string(t));
  require_same_shape(x_t, y, "posterior_mean");
  require_same_shape(x_t, eps_hat, "posterior_mean");
  ImageTensor out = x_t;
  const double cx = s.c_x[t], cy = s.c_y[t], ce = s.c_eps[t];
  auto o = out.data();
  auto xd = x_t.data();
  auto yd = y.data();
  auto ed = eps_hat.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = cx * xd[k] + cy * yd[k] - ce * ed[k];
  return out;
}

ImageTensor x0_from_eps(const ImageTensor& x_t, const ImageTensor& eps_hat) {
  require_same_shape(x_t, eps_hat, "x0_from_eps");
  return x_t - eps_hat;
}

void write_schedule_csv(std::ostream& os, const BridgeSchedule& s) {
  os << "t,m_t,delta_t,delta_step_t,delta_tilde_t,c_x,c_y,c_eps\r\n";
  os << std::setprecision(17);
  for (int t = 0; t <= s.T; ++t) {
    os << t << ',' << s.m[t] << ',' << s.delta[t] << ',' << s.delta_step[t] << ','
       << s.delta_tilde[t] << ',' << s.c_x[t] << ',' << s.c_y[t] << ',' << s.c_eps[t] << "\r\n";
  }
}

}  // namespace bridgestain
