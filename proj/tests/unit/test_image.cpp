#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>

#include "bridgestain/error.hpp"
#include "bridgestain/tensor_io.hpp"
#include "helpers.hpp"

using namespace bridgestain;
using testutil::random_image;

TEST_CASE("ycbcr of gray and pure red") {
  ImageTensor g = ImageTensor::filled(2, 2, 3, 0.37);
  const ImageTensor y = to_ycbcr(g);
  CHECK(y.semantics() == Semantics::ycbcr);
  CHECK(y.at(1, 1, 0) == doctest::Approx(0.37).epsilon(1e-12));
  CHECK(y.at(1, 1, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y.at(1, 1, 2) == doctest::Approx(0.5).epsilon(1e-12));
  ImageTensor red(1, 1, 3, {1.0, 0.0, 0.0});
  CHECK(to_ycbcr(red).at(0, 0, 0) == doctest::Approx(0.299).epsilon(1e-12));
}

TEST_CASE("ycbcr round trip on 10k random pixels") {
  const ImageTensor x = random_image(100, 100, 3, 11);
  CHECK(max_abs_diff(from_ycbcr(to_ycbcr(x)), x) < 1e-6);
}

TEST_CASE("ycbcr rejects wrong channel count or semantics") {
  CHECK_THROWS_AS(to_ycbcr(ImageTensor(2, 2, 4)), Error);
  CHECK_THROWS_AS(to_ycbcr(ImageTensor(2, 2, 3, Semantics::af_stack)), Error);
}

TEST_CASE("bin_pixels block means and linearity") {
  ImageTensor blk(2, 2, 1, {0, 0, 1, 1});
  CHECK(bin_pixels(blk, 2).at(0, 0, 0) == 0.5);
  const ImageTensor c = ImageTensor::filled(6, 6, 2, 0.25);
  for (int n : {1, 2, 3, 6}) {
    const ImageTensor b = bin_pixels(c, n);
    CHECK(b.height() == 6 / n);
    CHECK(std::all_of(b.data().begin(), b.data().end(), [](double v) { return v == 0.25; }));
  }
  const ImageTensor x = random_image(8, 8, 3, 2);
  CHECK(max_abs_diff(bin_pixels(0.5 * x, 2), 0.5 * bin_pixels(x, 2)) < 1e-15);
  CHECK_THROWS_AS(bin_pixels(x, 3), Error);
}

TEST_CASE("binning then nearest upsampling preserves the mean") {
  const ImageTensor x = random_image(12, 12, 3, 5);
  const ImageTensor r = upsample_nearest(bin_pixels(x, 4), 4);
  double a = 0, b = 0;
  for (double v : x.data()) a += v;
  for (double v : r.data()) b += v;
  CHECK(std::abs(a - b) < 1e-12);
}

TEST_CASE("pixel_shuffle ordering and inverse") {
  ImageTensor one(1, 1, 4, {1, 2, 3, 4}, Semantics::normalized_latent);
  const ImageTensor s = pixel_shuffle(one, 2);
  CHECK(s.height() == 2);
  CHECK(s.channels() == 1);
  CHECK(s.at(0, 0, 0) == 1);
  CHECK(s.at(0, 1, 0) == 2);
  CHECK(s.at(1, 0, 0) == 3);
  CHECK(s.at(1, 1, 0) == 4);
  const ImageTensor x = random_image(3, 4, 12, 9, Semantics::normalized_latent);
  CHECK(pixel_shuffle(x, 1) == x);
  CHECK(pixel_unshuffle(pixel_shuffle(x, 2), 2) == x);
  auto a = std::vector<double>(x.data().begin(), x.data().end());
  const ImageTensor sh = pixel_shuffle(x, 2);
  auto b = std::vector<double>(sh.data().begin(), sh.data().end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
  CHECK_THROWS_AS(pixel_shuffle(ImageTensor(2, 2, 3), 2), Error);
}

TEST_CASE("extract_patches counts and contents") {
  const ImageTensor big(2048, 2048, 1);
  CHECK(extract_patches(big, 192, 192).size() == 100);
  const ImageTensor x = random_image(10, 12, 2, 4);
  const auto whole = extract_patches(random_image(8, 8, 1, 1), 8, 8);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].image == random_image(8, 8, 1, 1));
  for (const auto& p : extract_patches(x, 4, 3)) {
    CHECK(p.image.at(0, 0, 1) == x.at(p.row, p.col, 1));
    CHECK(p.image.at(3, 3, 0) == x.at(p.row + 3, p.col + 3, 0));
  }
  CHECK_THROWS_AS(extract_patches(x, 11, 1), Error);
}

TEST_CASE("dihedral transforms") {
  const ImageTensor x = random_image(5, 5, 3, 8);
  CHECK(apply_dihedral(x, 0) == x);
  for (int id = 0; id < kDihedralCount; ++id) {
    CHECK(apply_dihedral(apply_dihedral(x, id), inverse_dihedral(id)) == x);
  }
  CHECK_THROWS_AS(apply_dihedral(random_image(4, 5, 1, 1), 1), Error);
}

TEST_CASE("augment draws each transform uniformly") {
  std::array<int, kDihedralCount> counts{};
  RngStream rng(123);
  const ImageTensor x = random_image(3, 3, 1, 3);
  for (int k = 0; k < 8000; ++k) {
    auto [img, id] = augment(x, rng);
    REQUIRE(id >= 0);
    REQUIRE(id < kDihedralCount);
    ++counts[id];
    if (k < 16) CHECK(img == apply_dihedral(x, id));
  }
  for (int c : counts) CHECK(std::abs(c / 8000.0 - 0.125) < 0.02);
}

TEST_CASE("normalization") {
  const ImageTensor x = random_image(16, 16, 3, 21);
  const NormalizationStats st = compute_stats(x);
  const ImageTensor n = normalize(x, st);
  for (int c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t q = 0; q < n.pixels(); ++q) m += n.data()[q * 3 + c];
    m /= n.pixels();
    for (std::size_t q = 0; q < n.pixels(); ++q) v += std::pow(n.data()[q * 3 + c] - m, 2);
    v /= n.pixels();
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(v - 1) < 1e-5);
  }
  CHECK(max_abs_diff(denormalize(n, st, Semantics::rgb, kUnitRange), x) < 1e-6);
  const ImageTensor c = ImageTensor::filled(4, 4, 1, 0.3);
  const ImageTensor nc = normalize(c, compute_stats(c));
  CHECK(std::all_of(nc.data().begin(), nc.data().end(), [](double v) { return std::abs(v) < 1e-9; }));
}

TEST_CASE("tensor file round trip is float exact") {
  const auto dir = testutil::scratch("tensor_io");
  ImageTensor x = random_image(7, 5, 3, 77);
  for (double& v : x.data()) v = static_cast<float>(v);
  save_tensor(dir / "x.btns", x);
  CHECK(load_tensor(dir / "x.btns") == x);
  CHECK_THROWS_AS(load_tensor(dir / "missing.btns"), Error);
  save_png(dir / "x.png", x);
  CHECK(max_abs_diff(load_png(dir / "x.png"), x) <= 0.5 / 255 + 1e-12);
}
