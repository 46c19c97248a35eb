#include "bridgestain/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "bridgestain/error.hpp"
#include "bridgestain/rng.hpp"

namespace bridgestain {

const char* to_string(Semantics s) noexcept {
  switch (s) {
    case Semantics::rgb: return "rgb";
    case Semantics::ycbcr: return "ycbcr";
    case Semantics::af_stack: return "af-stack";
    case Semantics::normalized_latent: return "normalized-latent";
  }
  return "unknown";
}

ImageTensor::ImageTensor(int height, int width, int channels, Semantics semantics,
                         ValueRange range)
    : ImageTensor(height, width, channels,
                  std::vector<double>(static_cast<std::size_t>(std::max(height, 0)) *
                                      std::max(width, 0) * std::max(channels, 0)),
                  semantics, range) {}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<double> data,
                         Semantics semantics, ValueRange range)
    : height_(height),
      width_(width),
      channels_(channels),
      semantics_(semantics),
      range_(range),
      data_(std::move(data)) {
  require(height >= 1 && width >= 1 && channels >= 1, ErrorCode::invalid_input,
          "image dimensions must be positive");
  require(data_.size() == static_cast<std::size_t>(height) * width * channels,
          ErrorCode::invalid_input, "image data length does not match H*W*C");
}

ImageTensor ImageTensor::filled(int height, int width, int channels, double value,
                                Semantics semantics, ValueRange range) {
  ImageTensor img(height, width, channels, semantics, range);
  std::fill(img.data_.begin(), img.data_.end(), value);
  return img;
}

std::string ImageTensor::shape_string() const {
  std::ostringstream os;
  os << height_ << "x" << width_ << "x" << channels_;
  return os.str();
}

bool ImageTensor::operator==(const ImageTensor& other) const {
  if (!same_shape(other) || semantics_ != other.semantics_) return false;
  if (std::memcmp(&range_, &other.range_, sizeof(ValueRange)) != 0) return false;
  return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (!a.same_shape(b)) {
    fail(ErrorCode::invalid_input, std::string(what) + ": shape mismatch " + a.shape_string() +
                                       " vs " + b.shape_string());
  }
}

bool all_finite(const ImageTensor& img) noexcept {
  return std::all_of(img.data().begin(), img.data().end(),
                     [](double v) { return std::isfinite(v); });
}

ImageTensor operator+(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "add");
  ImageTensor out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] += bd[k];
  return out;
}

ImageTensor operator-(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "subtract");
  ImageTensor out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] -= bd[k];
  return out;
}

ImageTensor operator*(double s, const ImageTensor& a) {
  ImageTensor out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

ImageTensor& axpy(double alpha, const ImageTensor& x, ImageTensor& y) {
  require_same_shape(x, y, "axpy");
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t k = 0; k < yd.size(); ++k) yd[k] += alpha * xd[k];
  return y;
}

double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t k = 0; k < ad.size(); ++k) m = std::max(m, std::abs(ad[k] - bd[k]));
  return m;
}

ImageTensor clip(const ImageTensor& img, ValueRange range) {
  ImageTensor out = img;
  for (double& v : out.data()) v = std::clamp(v, range.lo, range.hi);
  out.set_range(range);
  return out;
}

namespace {

constexpr double kKr = 0.299;
constexpr double kKg = 0.587;
constexpr double kKb = 0.114;

}  // namespace

ImageTensor to_ycbcr(const ImageTensor& rgb) {
  require(rgb.semantics() == Semantics::rgb && rgb.channels() == 3, ErrorCode::invalid_input,
          "to_ycbcr expects a 3-channel rgb image");
  ImageTensor out(rgb.height(), rgb.width(), 3, Semantics::ycbcr, kUnitRange);
  auto in = rgb.data();
  auto o = out.data();
  for (std::size_t p = 0; p < rgb.pixels(); ++p) {
    const double r = in[3 * p], g = in[3 * p + 1], b = in[3 * p + 2];
    const double y = kKr * r + kKg * g + kKb * b;
    o[3 * p] = y;
    o[3 * p + 1] = 0.5 + (b - y) / (2.0 * (1.0 - kKb));
    o[3 * p + 2] = 0.5 + (r - y) / (2.0 * (1.0 - kKr));
  }
  return out;
}

ImageTensor from_ycbcr(const ImageTensor& ycbcr) {
  require(ycbcr.semantics() == Semantics::ycbcr && ycbcr.channels() == 3,
          ErrorCode::invalid_input, "from_ycbcr expects a 3-channel ycbcr image");
  ImageTensor out(ycbcr.height(), ycbcr.width(), 3, Semantics::rgb, kUnitRange);
  auto in = ycbcr.data();
  auto o = out.data();
  for (std::size_t p = 0; p < ycbcr.pixels(); ++p) {
    const double y = in[3 * p];
    const double cb = in[3 * p + 1] - 0.5;
    const double cr = in[3 * p + 2] - 0.5;
    const double r = y + 2.0 * (1.0 - kKr) * cr;
    const double b = y + 2.0 * (1.0 - kKb) * cb;
    const double g = (y - kKr * r - kKb * b) / kKg;
    o[3 * p] = r;
    o[3 * p + 1] = g;
    o[3 * p + 2] = b;
  }
  return out;
}

ImageTensor to_grayscale(const ImageTensor& img) {
  if (img.channels() == 1) return img;
  require(img.channels() == 3, ErrorCode::invalid_input,
          "grayscale conversion expects 1 or 3 channels");
  ImageTensor out(img.height(), img.width(), 1, img.semantics(), img.range());
  auto in = img.data();
  auto o = out.data();
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    o[p] = kKr * in[3 * p] + kKg * in[3 * p + 1] + kKb * in[3 * p + 2];
  }
  return out;
}

ImageTensor select_channel(const ImageTensor& img, int channel) {
  require(channel >= 0 && channel < img.channels(), ErrorCode::invalid_input,
          "channel index out of range");
  ImageTensor out(img.height(), img.width(), 1, img.semantics(), img.range());
  auto in = img.data();
  auto o = out.data();
  const int c = img.channels();
  for (std::size_t p = 0; p < img.pixels(); ++p) o[p] = in[p * c + channel];
  return out;
}

ImageTensor concat_channels(const ImageTensor& a, const ImageTensor& b) {
  require(a.height() == b.height() && a.width() == b.width(), ErrorCode::invalid_input,
          "concat_channels: spatial size mismatch");
  const int ca = a.channels(), cb = b.channels();
  ImageTensor out(a.height(), a.width(), ca + cb, Semantics::normalized_latent,
                  ValueRange{-INFINITY, INFINITY});
  auto ad = a.data();
  auto bd = b.data();
  auto o = out.data();
  for (std::size_t p = 0; p < a.pixels(); ++p) {
    std::copy_n(ad.begin() + p * ca, ca, o.begin() + p * (ca + cb));
    std::copy_n(bd.begin() + p * cb, cb, o.begin() + p * (ca + cb) + ca);
  }
  return out;
}

ImageTensor bin_pixels(const ImageTensor& img, int factor) {
  require(factor >= 1, ErrorCode::invalid_input, "bin factor must be >= 1");
  require(img.height() % factor == 0 && img.width() % factor == 0, ErrorCode::invalid_input,
          "image " + img.shape_string() + " not divisible by bin factor " +
              std::to_string(factor));
  const int h = img.height() / factor, w = img.width() / factor, c = img.channels();
  ImageTensor out(h, w, c, img.semantics(), img.range());
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int a = 0; a < factor; ++a) {
          for (int b = 0; b < factor; ++b) acc += img.at(i * factor + a, j * factor + b, ch);
        }
        out.at(i, j, ch) = acc * inv;
      }
    }
  }
  return out;
}

ImageTensor upsample_nearest(const ImageTensor& img, int factor) {
  require(factor >= 1, ErrorCode::invalid_input, "upsample factor must be >= 1");
  ImageTensor out(img.height() * factor, img.width() * factor, img.channels(), img.semantics(),
                  img.range());
  for (int i = 0; i < out.height(); ++i) {
    for (int j = 0; j < out.width(); ++j) {
      for (int c = 0; c < img.channels(); ++c) out.at(i, j, c) = img.at(i / factor, j / factor, c);
    }
  }
  return out;
}

ImageTensor resize_bilinear(const ImageTensor& img, int height, int width) {
  require(height >= 1 && width >= 1, ErrorCode::invalid_input, "resize target must be positive");
  ImageTensor out(height, width, img.channels(), img.semantics(), img.range());
  const double sy = static_cast<double>(img.height()) / height;
  const double sx = static_cast<double>(img.width()) / width;
  for (int i = 0; i < height; ++i) {
    const double fy = std::clamp((i + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int j = 0; j < width; ++j) {
      const double fx = std::clamp((j + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels(); ++c) {
        const double top = (1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        const double bottom = (1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        out.at(i, j, c) = (1 - wy) * top + wy * bottom;
      }
    }
  }
  return out;
}

ImageTensor pixel_shuffle(const ImageTensor& img, int factor) {
  require(factor >= 1, ErrorCode::invalid_input, "shuffle factor must be >= 1");
  const int n2 = factor * factor;
  require(img.channels() % n2 == 0, ErrorCode::invalid_input,
          "pixel_shuffle: channels " + std::to_string(img.channels()) + " not divisible by " +
              std::to_string(n2));
  const int c_out = img.channels() / n2;
  ImageTensor out(img.height() * factor, img.width() * factor, c_out, img.semantics(),
                  img.range());
  for (int i = 0; i < img.height(); ++i) {
    for (int j = 0; j < img.width(); ++j) {
      for (int c = 0; c < c_out; ++c) {
        for (int a = 0; a < factor; ++a) {
          for (int b = 0; b < factor; ++b) {
            out.at(i * factor + a, j * factor + b, c) = img.at(i, j, c * n2 + a * factor + b);
          }
        }
      }
    }
  }
  return out;
}

ImageTensor pixel_unshuffle(const ImageTensor& img, int factor) {
  require(factor >= 1, ErrorCode::invalid_input, "shuffle factor must be >= 1");
  require(img.height() % factor == 0 && img.width() % factor == 0, ErrorCode::invalid_input,
          "pixel_unshuffle: size not divisible by factor");
  const int n2 = factor * factor;
  ImageTensor out(img.height() / factor, img.width() / factor, img.channels() * n2,
                  img.semantics(), img.range());
  for (int i = 0; i < out.height(); ++i) {
    for (int j = 0; j < out.width(); ++j) {
      for (int c = 0; c < img.channels(); ++c) {
        for (int a = 0; a < factor; ++a) {
          for (int b = 0; b < factor; ++b) {
            out.at(i, j, c * n2 + a * factor + b) = img.at(i * factor + a, j * factor + b, c);
          }
        }
      }
    }
  }
  return out;
}

std::vector<Patch> extract_patches(const ImageTensor& img, int size, int stride) {
  require(stride >= 1, ErrorCode::invalid_input, "patch stride must be >= 1");
  require(size >= 1 && size <= std::min(img.height(), img.width()), ErrorCode::empty_result,
          "patch size " + std::to_string(size) + " exceeds image " + img.shape_string());
  std::vector<Patch> patches;
  const int c = img.channels();
  for (int r = 0; r + size <= img.height(); r += stride) {
    for (int q = 0; q + size <= img.width(); q += stride) {
      ImageTensor p(size, size, c, img.semantics(), img.range());
      for (int i = 0; i < size; ++i) {
        const double* src = &img.data()[(static_cast<std::size_t>(r + i) * img.width() + q) * c];
        std::copy_n(src, static_cast<std::size_t>(size) * c, &p.data()[static_cast<std::size_t>(i) * size * c]);
      }
      patches.push_back({r, q, std::move(p)});
    }
  }
  return patches;
}

ImageTensor apply_dihedral(const ImageTensor& img, int transform_id) {
  require(transform_id >= 0 && transform_id < kDihedralCount, ErrorCode::invalid_input,
          "dihedral transform id out of range");
  const int rot = transform_id % 4;
  const bool flip = transform_id >= 4;
  require(rot % 2 == 0 || img.height() == img.width(), ErrorCode::invalid_input,
          "quarter-turn rotation requires a square patch");
  const int n = img.height();
  const int m = img.width();
  ImageTensor out(img.height(), img.width(), img.channels(), img.semantics(), img.range());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      // Destination (i, j) after rotation by rot quarter turns (counter-clockwise).
      int si = i, sj = j;
      switch (rot) {
        case 1: si = j; sj = m - 1 - i; break;
        case 2: si = n - 1 - i; sj = m - 1 - j; break;
        case 3: si = n - 1 - j; sj = i; break;
        default: break;
      }
      int di = i, dj = j;
      if (flip) dj = m - 1 - j;
      for (int c = 0; c < img.channels(); ++c) out.at(di, dj, c) = img.at(si, sj, c);
    }
  }
  return out;
}

int inverse_dihedral(int transform_id) {
  require(transform_id >= 0 && transform_id < kDihedralCount, ErrorCode::invalid_input,
          "dihedral transform id out of range");
  // Reflections are involutions; pure rotations invert by the opposite turn.
  if (transform_id >= 4) return transform_id;
  return (4 - transform_id) % 4;
}

std::pair<ImageTensor, int> augment(const ImageTensor& patch, RngStream& rng) {
  const int id = rng.uniform_int(0, kDihedralCount - 1);
  return {apply_dihedral(patch, id), id};
}

NormalizationStats compute_stats(const ImageTensor& img) {
  NormalizationStats s = compute_stats(std::span<const ImageTensor>(&img, 1));
  s.scope = StatsScope::per_image;
  return s;
}

NormalizationStats compute_stats(std::span<const ImageTensor> images) {
  require(!images.empty(), ErrorCode::invalid_input, "compute_stats: no images");
  const int c = images.front().channels();
  std::vector<double> sum(c, 0.0);
  std::size_t count = 0;
  for (const auto& img : images) {
    require(img.channels() == c, ErrorCode::invalid_input, "compute_stats: channel mismatch");
    auto d = img.data();
    for (std::size_t p = 0; p < img.pixels(); ++p) {
      for (int ch = 0; ch < c; ++ch) sum[ch] += d[p * c + ch];
    }
    count += img.pixels();
  }
  NormalizationStats s;
  s.scope = StatsScope::dataset;
  s.mean.resize(c);
  s.std.resize(c);
  for (int ch = 0; ch < c; ++ch) s.mean[ch] = sum[ch] / static_cast<double>(count);
  // Second pass keeps the variance free of catastrophic cancellation.
  std::vector<double> sq(c, 0.0);
  for (const auto& img : images) {
    auto d = img.data();
    for (std::size_t p = 0; p < img.pixels(); ++p) {
      for (int ch = 0; ch < c; ++ch) {
        const double dv = d[p * c + ch] - s.mean[ch];
        sq[ch] += dv * dv;
      }
    }
  }
  for (int ch = 0; ch < c; ++ch) {
    s.std[ch] = std::max(std::sqrt(sq[ch] / static_cast<double>(count)), kStdFloor);
  }
  return s;
}

ImageTensor normalize(const ImageTensor& img, const NormalizationStats& stats) {
  require(stats.channels() == img.channels() && stats.std.size() == stats.mean.size(),
          ErrorCode::invalid_input, "normalization stats channel count mismatch");
  ImageTensor out(img.height(), img.width(), img.channels(), Semantics::normalized_latent,
                  ValueRange{-INFINITY, INFINITY});
  const int c = img.channels();
  auto in = img.data();
  auto o = out.data();
  for (std::size_t k = 0; k < in.size(); ++k) {
    const int ch = static_cast<int>(k % c);
    o[k] = (in[k] - stats.mean[ch]) / std::max(stats.std[ch], kStdFloor);
  }
  return out;
}

ImageTensor denormalize(const ImageTensor& img, const NormalizationStats& stats,
                        Semantics semantics, ValueRange range) {
  require(stats.channels() == img.channels() && stats.std.size() == stats.mean.size(),
          ErrorCode::invalid_input, "normalization stats channel count mismatch");
  ImageTensor out(img.height(), img.width(), img.channels(), semantics, range);
  const int c = img.channels();
  auto in = img.data();
  auto o = out.data();
  for (std::size_t k = 0; k < in.size(); ++k) {
    const int ch = static_cast<int>(k % c);
    o[k] = in[k] * std::max(stats.std[ch], kStdFloor) + stats.mean[ch];
  }
  return out;
}

}  // namespace bridgestain
