#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "bridgestain/image.hpp"

namespace bridgestain {

struct SsimParams {
  double k1 = 0.01;
  double k2 = 0.03;
  // <= 0 derives L from the images' declared range.
  double dynamic_range = 0.0;
  bool global = false;
  int window = 11;
  double sigma = 1.5;
};

/// Mean SSIM over valid Gaussian windows (or one global evaluation per
/// channel), averaged over channels.
double ssim(const ImageTensor& a, const ImageTensor& b, const SsimParams& params = {});

/// Normalised window weights used by the sliding mode.
std::vector<double> ssim_window(int size, double sigma);

struct MsePsnr {
  double mse = 0.0;
  double psnr_db = std::numeric_limits<double>::infinity();
};

/// `reference` supplies the peak value; identical images give psnr = +inf.
MsePsnr mse_psnr(const ImageTensor& reference, const ImageTensor& other);

/// Multi-layer feature map producer for the perceptual distance.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int input_channels() const noexcept = 0;
  virtual std::vector<ImageTensor> features(const ImageTensor& img) const = 0;
};

/// One layer whose features are the input samples themselves.
class IdentityExtractor : public FeatureExtractor {
 public:
  explicit IdentityExtractor(int channels = 3) : channels_(channels) {}
  int input_channels() const noexcept override { return channels_; }
  std::vector<ImageTensor> features(const ImageTensor& img) const override;

 private:
  int channels_;
};

/// Fixed-seed stack of 3x3 convolutions with ReLU and 2x2 average pooling
/// between layers; every layer's feature vectors are scaled to unit length
/// per pixel.
class RandomConvExtractor : public FeatureExtractor {
 public:
  explicit RandomConvExtractor(std::uint64_t seed = 0, int input_channels = 3,
                               std::vector<int> widths = {8, 16, 32});
  int input_channels() const noexcept override { return in_; }
  std::vector<ImageTensor> features(const ImageTensor& img) const override;
  const std::vector<int>& widths() const noexcept { return widths_; }

 private:
  int in_;
  std::vector<int> widths_;
  std::vector<std::vector<double>> weights_;  // [layer] cout x 9 x cin
  std::vector<std::vector<double>> biases_;
};

/// sum_l 1/(H_l W_l) sum_{h,w} ||f_l(m)_{hw} - f_l(m0)_{hw}||^2
double perceptual_distance(const ImageTensor& m, const ImageTensor& m0,
                           const FeatureExtractor& extractor);

struct CvReport {
  ImageTensor map;               // ycbcr semantics, per-pixel CV
  std::array<double, 3> mean_cv{};  // per Y, Cb, Cr channel
  double overall = 0.0;           // mean over channels and pixels
  std::size_t guarded = 0;        // samples whose mean fell below the floor
};

inline constexpr double kCvMeanFloor = 1e-6;

/// Pixel-wise coefficient of variation of rgb runs in YCbCr, using the
/// sample (n-1) standard deviation.
CvReport cv_map(std::span<const ImageTensor> runs);

struct RadialSpectrum {
  std::vector<double> frequency;  // bin centre, cycles per image
  std::vector<double> power;      // mean |F|^2 in the bin
  std::vector<std::size_t> count;
};

/// Radially averaged |DFT|^2 of a square one-channel image (rgb is converted
/// to grayscale). Bin k covers radii rounding to k * (N/2)/(bins-1); corner
/// frequencies beyond N/2 fall in the last bin.
RadialSpectrum radial_power_spectrum(const ImageTensor& img, int bins);

struct TTestResult {
  double t_score = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// Two-sided paired t-test on d = a - b.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

struct MeanSe {
  double mean = 0.0;
  double stderr_ = 0.0;
};

MeanSe mean_and_stderr(std::span<const double> values);

/// Per-pixel affine map from bilinearly upsampled AF channels to rgb, fitted
/// by least squares; the interpolation baseline.
class AffineBaseline {
 public:
  AffineBaseline() = default;
  static AffineBaseline fit(std::span<const ImageTensor> inputs,
                            std::span<const ImageTensor> targets);
  ImageTensor predict(const ImageTensor& input, int height, int width) const;
  const std::vector<double>& coefficients() const noexcept { return coef_; }

 private:
  int in_ = 0;
  int out_ = 0;
  std::vector<double> coef_;  // out x (in + 1), row-major, bias last
};

}  // namespace bridgestain
