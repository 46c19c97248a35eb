#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "bridgestain/image.hpp"

namespace testutil {

// Posterior of x_{t-1} given x_t for a scalar bridge with fixed (x0, y),
// from the joint Gaussian with Cov(x_s, x_t) = 2 m_s (1 - m_t), s <= t.
// Returned as coefficients on (x_t, y, eps) after substituting x0 = x_t - eps.
struct ConditioningOracle {
  double c_x, c_y, c_eps, var;
};

inline ConditioningOracle conditioning_oracle(int T, int t) {
  const double ms = double(t - 1) / T, mt = double(t) / T;
  const double var_s = 2 * ms * (1 - ms), var_t = 2 * mt * (1 - mt);
  const double cov = 2 * ms * (1 - mt);
  const double a = cov / var_t;
  const double b = ms - a * mt;
  const double c = (1 - ms) - a * (1 - mt);
  return {a + c, b, c, var_s - cov * cov / var_t};
}

// Per-window SSIM with an explicit 2-D Gaussian window (11x11, sigma 1.5),
// unit dynamic range, averaged over valid windows and channels.
inline double brute_ssim(const bridgestain::ImageTensor& a, const bridgestain::ImageTensor& b) {
  const int n = 11;
  const double s = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::vector<double> w(n * n);
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double di = i - 5, dj = j - 5;
      w[i * n + j] = std::exp(-(di * di + dj * dj) / (2 * s * s));
      sum += w[i * n + j];
    }
  }
  for (double& v : w) v /= sum;
  double total = 0;
  for (int c = 0; c < a.channels(); ++c) {
    double acc = 0;
    int count = 0;
    for (int i0 = 0; i0 + n <= a.height(); ++i0) {
      for (int j0 = 0; j0 + n <= a.width(); ++j0) {
        double ma = 0, mb = 0;
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            ma += w[i * n + j] * a.at(i0 + i, j0 + j, c);
            mb += w[i * n + j] * b.at(i0 + i, j0 + j, c);
          }
        }
        double va = 0, vb = 0, cov = 0;
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            const double da = a.at(i0 + i, j0 + j, c) - ma, db = b.at(i0 + i, j0 + j, c) - mb;
            va += w[i * n + j] * da * da;
            vb += w[i * n + j] * db * db;
            cov += w[i * n + j] * da * db;
          }
        }
        acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
    total += acc / count;
  }
  return total / a.channels();
}

inline std::vector<std::complex<double>> naive_dft(const bridgestain::ImageTensor& g) {
  const int N = g.height();
  std::vector<std::complex<double>> F(N * N);
  for (int u = 0; u < N; ++u) {
    for (int v = 0; v < N; ++v) {
      std::complex<double> acc = 0;
      for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
          acc += g.at(i, j, 0) * std::polar(1.0, -2 * std::numbers::pi * (u * i + v * j) / N);
        }
      }
      F[u * N + v] = acc;
    }
  }
  return F;
}

}  // namespace testutil
