#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bridgestain {

class RngStream;

enum class Semantics : std::uint8_t {
  rgb = 0,
  ycbcr = 1,
  af_stack = 2,
  normalized_latent = 3,
};

const char* to_string(Semantics s) noexcept;

struct ValueRange {
  double lo = 0.0;
  double hi = 1.0;

  bool operator==(const ValueRange&) const = default;
};

inline constexpr ValueRange kUnitRange{0.0, 1.0};

/// H x W x C image with channel-interleaved row-major samples.
///
/// Sample (i, j, c) lives at `(i * width + j) * channels + c`. The semantics
/// tag and declared range travel with the pixels so that conversions can
/// reject inputs in the wrong space.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, Semantics semantics = Semantics::rgb,
              ValueRange range = kUnitRange);
  ImageTensor(int height, int width, int channels, std::vector<double> data,
              Semantics semantics = Semantics::rgb, ValueRange range = kUnitRange);

  static ImageTensor filled(int height, int width, int channels, double value,
                            Semantics semantics = Semantics::rgb, ValueRange range = kUnitRange);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t pixels() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  bool empty() const noexcept { return data_.empty(); }

  Semantics semantics() const noexcept { return semantics_; }
  ValueRange range() const noexcept { return range_; }
  void set_semantics(Semantics s) noexcept { semantics_ = s; }
  void set_range(ValueRange r) noexcept { range_ = r; }

  double& at(int i, int j, int c) noexcept { return data_[index(i, j, c)]; }
  double at(int i, int j, int c) const noexcept { return data_[index(i, j, c)]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }

  bool same_shape(const ImageTensor& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  std::string shape_string() const;

  // Bitwise equality of pixels and metadata.
  bool operator==(const ImageTensor& other) const;

 private:
  std::size_t index(int i, int j, int c) const noexcept {
    return (static_cast<std::size_t>(i) * width_ + j) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  Semantics semantics_ = Semantics::rgb;
  ValueRange range_ = kUnitRange;
  std::vector<double> data_;
};

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what);
bool all_finite(const ImageTensor& img) noexcept;

// Elementwise helpers used throughout the sampler and metrics.
ImageTensor operator+(const ImageTensor& a, const ImageTensor& b);
ImageTensor operator-(const ImageTensor& a, const ImageTensor& b);
ImageTensor operator*(double s, const ImageTensor& a);
ImageTensor& axpy(double alpha, const ImageTensor& x, ImageTensor& y);  // y += alpha * x
double max_abs_diff(const ImageTensor& a, const ImageTensor& b);
ImageTensor clip(const ImageTensor& img, ValueRange range);

// Full-range BT.601 with chroma centred on 0.5.
ImageTensor to_ycbcr(const ImageTensor& rgb);
ImageTensor from_ycbcr(const ImageTensor& ycbcr);
/// BT.601 luma of an rgb image, or the single channel of a one-channel image.
ImageTensor to_grayscale(const ImageTensor& img);
ImageTensor select_channel(const ImageTensor& img, int channel);
ImageTensor concat_channels(const ImageTensor& a, const ImageTensor& b);

ImageTensor bin_pixels(const ImageTensor& img, int factor);
ImageTensor upsample_nearest(const ImageTensor& img, int factor);
/// Half-pixel-centred bilinear resampling with edge clamping.
ImageTensor resize_bilinear(const ImageTensor& img, int height, int width);

// out[i*N+a, j*N+b, c] = in[i, j, c*N*N + a*N + b]
ImageTensor pixel_shuffle(const ImageTensor& img, int factor);
ImageTensor pixel_unshuffle(const ImageTensor& img, int factor);

struct Patch {
  int row = 0;
  int col = 0;
  ImageTensor image;
};

/// All fully contained size x size windows in raster order.
std::vector<Patch> extract_patches(const ImageTensor& img, int size, int stride);

// Dihedral group of the square: id = rotation (0..3 quarter turns
// counter-clockwise) + 4 * horizontal flip applied after the rotation.
inline constexpr int kDihedralCount = 8;
ImageTensor apply_dihedral(const ImageTensor& img, int transform_id);
int inverse_dihedral(int transform_id);
std::pair<ImageTensor, int> augment(const ImageTensor& patch, RngStream& rng);

enum class StatsScope : std::uint8_t { per_image, dataset };

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> std;
  StatsScope scope = StatsScope::dataset;

  int channels() const noexcept { return static_cast<int>(mean.size()); }
};

inline constexpr double kStdFloor = 1e-6;

NormalizationStats compute_stats(const ImageTensor& img);
NormalizationStats compute_stats(std::span<const ImageTensor> images);
ImageTensor normalize(const ImageTensor& img, const NormalizationStats& stats);
ImageTensor denormalize(const ImageTensor& img, const NormalizationStats& stats,
                        Semantics semantics, ValueRange range);

}  // namespace bridgestain
