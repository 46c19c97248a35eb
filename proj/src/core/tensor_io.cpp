#include "bridgestain/tensor_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include "bridgestain/error.hpp"

namespace bridgestain {
namespace {

constexpr std::array<char, 4> kMagic{'B', 'T', 'N', 'S'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) fail(ErrorCode::io, "truncated tensor header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

}  // namespace

void write_tensor(std::ostream& os, const ImageTensor& img) {
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, kTensorFormatVersion);
  put_u32(os, static_cast<std::uint32_t>(img.height()));
  put_u32(os, static_cast<std::uint32_t>(img.width()));
  put_u32(os, static_cast<std::uint32_t>(img.channels()));
  const char sem = static_cast<char>(img.semantics());
  os.write(&sem, 1);
  put_f32(os, static_cast<float>(img.range().lo));
  put_f32(os, static_cast<float>(img.range().hi));
  std::vector<unsigned char> buf(img.size() * 4);
  auto d = img.data();
  for (std::size_t k = 0; k < d.size(); ++k) {
    const std::uint32_t v = std::bit_cast<std::uint32_t>(static_cast<float>(d[k]));
    buf[4 * k] = static_cast<unsigned char>(v);
    buf[4 * k + 1] = static_cast<unsigned char>(v >> 8);
    buf[4 * k + 2] = static_cast<unsigned char>(v >> 16);
    buf[4 * k + 3] = static_cast<unsigned char>(v >> 24);
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) fail(ErrorCode::io, "failed writing tensor");
}

ImageTensor read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    fail(ErrorCode::io, "not a BTNS tensor stream");
  }
  const std::uint32_t version = get_u32(is);
  require(version == kTensorFormatVersion, ErrorCode::io,
          "unsupported tensor format version " + std::to_string(version));
  const std::uint32_t h = get_u32(is), w = get_u32(is), c = get_u32(is);
  char sem = 0;
  if (!is.read(&sem, 1)) fail(ErrorCode::io, "truncated tensor header");
  require(static_cast<unsigned char>(sem) <= static_cast<unsigned char>(Semantics::normalized_latent),
          ErrorCode::io, "unknown semantics tag");
  const float lo = get_f32(is), hi = get_f32(is);
  require(h >= 1 && w >= 1 && c >= 1 && static_cast<std::uint64_t>(h) * w * c < (1ull << 32),
          ErrorCode::io, "implausible tensor dimensions");
  const std::size_t n = static_cast<std::size_t>(h) * w * c;
  std::vector<unsigned char> buf(n * 4);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    fail(ErrorCode::io, "truncated tensor payload");
  }
  std::vector<double> data(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint32_t v = static_cast<std::uint32_t>(buf[4 * k]) |
                            (static_cast<std::uint32_t>(buf[4 * k + 1]) << 8) |
                            (static_cast<std::uint32_t>(buf[4 * k + 2]) << 16) |
                            (static_cast<std::uint32_t>(buf[4 * k + 3]) << 24);
    data[k] = std::bit_cast<float>(v);
  }
  return ImageTensor(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c),
                     std::move(data), static_cast<Semantics>(sem), ValueRange{lo, hi});
}

void save_tensor(const std::filesystem::path& path, const ImageTensor& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");
  write_tensor(os, img);
}

ImageTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::not_found, "cannot open tensor file " + path.string());
  return read_tensor(is);
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void save_png(const std::filesystem::path& path, const ImageTensor& img) {
  require(img.channels() == 1 || img.channels() == 3, ErrorCode::invalid_input,
          "PNG output needs 1 or 3 channels");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::io, "libpng error writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8,
               img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const ValueRange r = img.range();
  const bool finite_range = std::isfinite(r.lo) && std::isfinite(r.hi) && r.hi > r.lo;
  const double lo = finite_range ? r.lo : 0.0;
  const double span = finite_range ? r.hi - r.lo : 1.0;
  std::vector<png_byte> row(static_cast<std::size_t>(img.width()) * img.channels());
  for (int i = 0; i < img.height(); ++i) {
    for (int j = 0; j < img.width(); ++j) {
      for (int c = 0; c < img.channels(); ++c) {
        const double v = std::clamp((img.at(i, j, c) - lo) / span, 0.0, 1.0);
        row[static_cast<std::size_t>(j) * img.channels() + c] =
            static_cast<png_byte>(std::lround(v * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageTensor load_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(ErrorCode::not_found, "cannot open PNG " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::io, "libpng error reading " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int c = png_get_channels(png, info);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  ImageTensor img(h, w, c, Semantics::rgb, kUnitRange);
  for (int i = 0; i < h; ++i) {
    png_read_row(png, row.data(), nullptr);
    for (int k = 0; k < w * c; ++k) {
      img.data()[static_cast<std::size_t>(i) * w * c + k] = row[k] / 255.0;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace bridgestain
