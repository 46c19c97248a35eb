#include "bridgestain/evaluation.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <complex>
#include <mutex>
#include <numeric>

#include "bridgestain/error.hpp"
#include "bridgestain/rng.hpp"

namespace bridgestain {

namespace {

void check_pair(const ImageTensor& a, const ImageTensor& b, const char* what) {
  require_same_shape(a, b, what);
  require(a.range() == b.range(), ErrorCode::invalid_input,
          std::string(what) + ": images declare different value ranges");
}

double dynamic_range(const ImageTensor& a, const SsimParams& p) {
  if (p.dynamic_range > 0.0) return p.dynamic_range;
  const double L = a.range().hi - a.range().lo;
  require(std::isfinite(L) && L > 0.0, ErrorCode::invalid_input,
          "ssim needs a finite declared range or an explicit dynamic range");
  return L;
}

double ssim_term(double ma, double mb, double va, double vb, double cov, double c1, double c2) {
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

// Valid-mode separable correlation of a channel plane with a 1-D kernel.
std::vector<double> filter_valid(const std::vector<double>& f, int h, int w,
                                 const std::vector<double>& k1d) {
  const int n = static_cast<int>(k1d.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (int d = 0; d < n; ++d) acc += k1d[d] * f[static_cast<std::size_t>(i) * w + j + d];
      tmp[static_cast<std::size_t>(i) * ow + j] = acc;
    }
  }
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (int d = 0; d < n; ++d) acc += k1d[d] * tmp[static_cast<std::size_t>(i + d) * ow + j];
      out[static_cast<std::size_t>(i) * ow + j] = acc;
    }
  }
  return out;
}

}  // namespace

std::vector<double> ssim_window(int size, double sigma) {
  require(size >= 1 && sigma > 0.0, ErrorCode::invalid_config, "bad ssim window");
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) k[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= sum;
  return k;
}

double ssim(const ImageTensor& a, const ImageTensor& b, const SsimParams& p) {
  check_pair(a, b, "ssim");
  require(p.k1 > 0.0 && p.k2 > 0.0, ErrorCode::invalid_config, "ssim constants must be > 0");
  const double L = dynamic_range(a, p);
  const double c1 = (p.k1 * L) * (p.k1 * L), c2 = (p.k2 * L) * (p.k2 * L);
  const int H = a.height(), W = a.width(), C = a.channels();
  const std::size_t P = a.pixels();
  double total = 0.0;
  for (int ch = 0; ch < C; ++ch) {
    std::vector<double> x(P), y(P);
    for (std::size_t q = 0; q < P; ++q) {
      x[q] = a.data()[q * C + ch];
      y[q] = b.data()[q * C + ch];
    }
    if (p.global) {
      const double n = static_cast<double>(P);
      const double ma = std::accumulate(x.begin(), x.end(), 0.0) / n;
      const double mb = std::accumulate(y.begin(), y.end(), 0.0) / n;
      double va = 0, vb = 0, cov = 0;
      for (std::size_t q = 0; q < P; ++q) {
        va += (x[q] - ma) * (x[q] - ma);
        vb += (y[q] - mb) * (y[q] - mb);
        cov += (x[q] - ma) * (y[q] - mb);
      }
      total += ssim_term(ma, mb, va / n, vb / n, cov / n, c1, c2);
      continue;
    }
    require(p.window <= H && p.window <= W, ErrorCode::invalid_input,
            "ssim window larger than the image");
    const auto k = ssim_window(p.window, p.sigma);
    std::vector<double> xx(P), yy(P), xy(P);
    for (std::size_t q = 0; q < P; ++q) {
      xx[q] = x[q] * x[q];
      yy[q] = y[q] * y[q];
      xy[q] = x[q] * y[q];
    }
    const auto mx = filter_valid(x, H, W, k), my = filter_valid(y, H, W, k);
    const auto sxx = filter_valid(xx, H, W, k), syy = filter_valid(yy, H, W, k);
    const auto sxy = filter_valid(xy, H, W, k);
    double acc = 0.0;
    for (std::size_t q = 0; q < mx.size(); ++q) {
      acc += ssim_term(mx[q], my[q], sxx[q] - mx[q] * mx[q], syy[q] - my[q] * my[q],
                       sxy[q] - mx[q] * my[q], c1, c2);
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / C;
}

MsePsnr mse_psnr(const ImageTensor& reference, const ImageTensor& other) {
  require_same_shape(reference, other, "mse_psnr");
  const auto a = reference.data();
  const auto b = other.data();
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
  MsePsnr r;
  r.mse = acc / static_cast<double>(a.size());
  const double peak = *std::max_element(a.begin(), a.end());
  r.psnr_db = r.mse == 0.0 ? std::numeric_limits<double>::infinity()
                           : 10.0 * std::log10(peak * peak / r.mse);
  return r;
}

std::vector<ImageTensor> IdentityExtractor::features(const ImageTensor& img) const {
  require(img.channels() == channels_, ErrorCode::invalid_config,
          "identity extractor expects " + std::to_string(channels_) + " channels");
  return {img};
}

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed, int input_channels,
                                         std::vector<int> widths)
    : in_(input_channels), widths_(std::move(widths)) {
  require(in_ >= 1 && !widths_.empty(), ErrorCode::invalid_config, "bad extractor layout");
  RngStream rng(stream_key(seed, stream_tag::init, 0x50455243ull));
  int cin = in_;
  for (int cout : widths_) {
    require(cout >= 1, ErrorCode::invalid_config, "extractor widths must be positive");
    const double sd = 1.0 / std::sqrt(9.0 * cin);
    std::vector<double> w(static_cast<std::size_t>(cout) * 9 * cin);
    for (double& v : w) v = sd * rng.normal();
    std::vector<double> bias(static_cast<std::size_t>(cout));
    for (double& v : bias) v = 0.1 * rng.normal();
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(bias));
    cin = cout;
  }
}

std::vector<ImageTensor> RandomConvExtractor::features(const ImageTensor& img) const {
  require(img.channels() == in_, ErrorCode::invalid_config,
          "extractor expects " + std::to_string(in_) + " channels, image has " +
              std::to_string(img.channels()));
  std::vector<ImageTensor> out;
  ImageTensor x = img;
  int cin = in_;
  for (std::size_t l = 0; l < widths_.size(); ++l) {
    if (l > 0) {
      require(x.height() % 2 == 0 && x.width() % 2 == 0, ErrorCode::invalid_config,
              "image too small for the extractor depth");
      x = bin_pixels(x, 2);
    }
    const int H = x.height(), W = x.width(), cout = widths_[l];
    ImageTensor y(H, W, cout, Semantics::normalized_latent, {0.0, 1.0});
    const auto& w = weights_[l];
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        double norm = 0.0;
        for (int o = 0; o < cout; ++o) {
          double acc = biases_[l][o];
          for (int di = -1; di <= 1; ++di) {
            const int ii = std::clamp(i + di, 0, H - 1);
            for (int dj = -1; dj <= 1; ++dj) {
              const int jj = std::clamp(j + dj, 0, W - 1);
              const double* wk =
                  &w[(static_cast<std::size_t>(o) * 9 + (di + 1) * 3 + (dj + 1)) * cin];
              for (int c = 0; c < cin; ++c) acc += wk[c] * x.at(ii, jj, c);
            }
          }
          acc = std::max(acc, 0.0);
          y.at(i, j, o) = acc;
          norm += acc * acc;
        }
        norm = std::sqrt(norm) + 1e-10;
        for (int o = 0; o < cout; ++o) y.at(i, j, o) /= norm;
      }
    }
    out.push_back(y);
    x = std::move(y);
    cin = cout;
  }
  return out;
}

double perceptual_distance(const ImageTensor& m, const ImageTensor& m0,
                           const FeatureExtractor& extractor) {
  require_same_shape(m, m0, "perceptual_distance");
  const auto fa = extractor.features(m);
  const auto fb = extractor.features(m0);
  require(fa.size() == fb.size(), ErrorCode::invalid_config, "extractor layer count mismatch");
  double d = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    require(fa[l].same_shape(fb[l]), ErrorCode::invalid_config, "extractor layer shape mismatch");
    double acc = 0.0;
    const auto a = fa[l].data();
    const auto b = fb[l].data();
    for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
    d += acc / static_cast<double>(fa[l].pixels());
  }
  return d;
}

CvReport cv_map(std::span<const ImageTensor> runs) {
  require(runs.size() >= 2, ErrorCode::invalid_input, "cv_map needs at least two runs");
  std::vector<ImageTensor> ycc;
  for (const auto& r : runs) {
    require(r.same_shape(runs.front()), ErrorCode::invalid_input, "cv_map runs differ in shape");
    ycc.push_back(to_ycbcr(r));
  }
  const ImageTensor& first = ycc.front();
  CvReport rep;
  rep.map = ImageTensor(first.height(), first.width(), 3, Semantics::ycbcr,
                        {0.0, std::numeric_limits<double>::infinity()});
  const double n = static_cast<double>(ycc.size());
  auto out = rep.map.data();
  for (std::size_t k = 0; k < out.size(); ++k) {
    double mean = 0.0;
    for (const auto& r : ycc) mean += r.data()[k];
    mean /= n;
    double var = 0.0;
    for (const auto& r : ycc) var += (r.data()[k] - mean) * (r.data()[k] - mean);
    const double sd = std::sqrt(var / (n - 1.0));
    if (std::abs(mean) < kCvMeanFloor) {
      out[k] = 0.0;
      ++rep.guarded;
    } else {
      out[k] = sd / mean;
    }
    rep.mean_cv[k % 3] += out[k];
  }
  const double P = static_cast<double>(rep.map.pixels());
  for (double& v : rep.mean_cv) v /= P;
  rep.overall = (rep.mean_cv[0] + rep.mean_cv[1] + rep.mean_cv[2]) / 3.0;
  return rep;
}

namespace {
std::mutex fftw_plan_mutex;
}

RadialSpectrum radial_power_spectrum(const ImageTensor& img, int bins) {
  require(img.height() == img.width(), ErrorCode::invalid_input,
          "radial spectrum needs a square image, got " + img.shape_string());
  require(bins >= 2, ErrorCode::invalid_config, "radial spectrum needs at least two bins");
  const ImageTensor gray = img.channels() == 1 ? img : to_grayscale(img);
  const int N = gray.height();
  const std::size_t P = gray.pixels();
  fftw_complex* buf = fftw_alloc_complex(P);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_plan_mutex);
    plan = fftw_plan_dft_2d(N, N, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  for (std::size_t k = 0; k < P; ++k) {
    buf[k][0] = gray.data()[k];
    buf[k][1] = 0.0;
  }
  fftw_execute(plan);
  RadialSpectrum out;
  out.power.assign(static_cast<std::size_t>(bins), 0.0);
  out.count.assign(static_cast<std::size_t>(bins), 0);
  const double width = (N / 2.0) / (bins - 1);
  for (int i = 0; i < N; ++i) {
    const int fy = i <= N / 2 ? i : i - N;
    for (int j = 0; j < N; ++j) {
      const int fx = j <= N / 2 ? j : j - N;
      const double r = std::sqrt(static_cast<double>(fx * fx + fy * fy));
      const int idx = std::min(bins - 1, static_cast<int>(std::lround(r / width)));
      const std::size_t k = static_cast<std::size_t>(i) * N + j;
      out.power[idx] += buf[k][0] * buf[k][0] + buf[k][1] * buf[k][1];
      ++out.count[idx];
    }
  }
  {
    std::lock_guard lock(fftw_plan_mutex);
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  for (int b = 0; b < bins; ++b) {
    out.frequency.push_back(b * width);
    if (out.count[b] > 0) out.power[b] /= static_cast<double>(out.count[b]);
  }
  return out;
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::invalid_input, "paired t-test needs equal lengths");
  require(a.size() >= 2, ErrorCode::invalid_input, "paired t-test needs at least two pairs");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) mean += a[k] - b[k];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = a[k] - b[k] - mean;
    var += d * d;
  }
  const double sd = std::sqrt(var / static_cast<double>(n - 1));
  TTestResult r;
  r.n = n;
  if (sd == 0.0) {
    if (mean == 0.0) return r;
    r.t_score = std::copysign(std::numeric_limits<double>::infinity(), mean);
    r.p_value = 0.0;
    return r;
  }
  r.t_score = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t_score))));
  return r;
}

MeanSe mean_and_stderr(std::span<const double> values) {
  require(!values.empty(), ErrorCode::invalid_input, "no values to aggregate");
  MeanSe r;
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double var = 0.0;
    for (double v : values) var += (v - r.mean) * (v - r.mean);
    r.stderr_ = std::sqrt(var / (n - 1.0)) / std::sqrt(n);
  }
  return r;
}

AffineBaseline AffineBaseline::fit(std::span<const ImageTensor> inputs,
                                   std::span<const ImageTensor> targets) {
  require(!inputs.empty() && inputs.size() == targets.size(), ErrorCode::invalid_input,
          "baseline fit needs matching input/target lists");
  AffineBaseline m;
  m.in_ = inputs.front().channels();
  m.out_ = targets.front().channels();
  const int d = m.in_ + 1;
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd atb = Eigen::MatrixXd::Zero(d, m.out_);
  Eigen::VectorXd row(d);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const ImageTensor& tg = targets[k];
    const ImageTensor up = resize_bilinear(inputs[k], tg.height(), tg.width());
    for (std::size_t p = 0; p < tg.pixels(); ++p) {
      for (int c = 0; c < m.in_; ++c) row[c] = up.data()[p * m.in_ + c];
      row[m.in_] = 1.0;
      ata.selfadjointView<Eigen::Lower>().rankUpdate(row);
      for (int o = 0; o < m.out_; ++o) atb.col(o) += row * tg.data()[p * m.out_ + o];
    }
  }
  ata = ata.selfadjointView<Eigen::Lower>();
  const Eigen::MatrixXd coef = ata.ldlt().solve(atb);  // d x out
  m.coef_.resize(static_cast<std::size_t>(m.out_) * d);
  for (int o = 0; o < m.out_; ++o) {
    for (int c = 0; c < d; ++c) m.coef_[static_cast<std::size_t>(o) * d + c] = coef(c, o);
  }
  return m;
}

ImageTensor AffineBaseline::predict(const ImageTensor& input, int height, int width) const {
  require(input.channels() == in_, ErrorCode::invalid_input,
          "baseline was fitted for " + std::to_string(in_) + " input channels");
  const ImageTensor up = resize_bilinear(input, height, width);
  ImageTensor out(height, width, out_, Semantics::rgb, kUnitRange);
  const int d = in_ + 1;
  for (std::size_t p = 0; p < out.pixels(); ++p) {
    for (int o = 0; o < out_; ++o) {
      const double* c = &coef_[static_cast<std::size_t>(o) * d];
      double v = c[in_];
      for (int k = 0; k < in_; ++k) v += c[k] * up.data()[p * in_ + k];
      out.data()[p * out_ + o] = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace bridgestain
