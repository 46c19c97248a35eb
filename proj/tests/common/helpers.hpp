#pragma once

#include <filesystem>
#include <string>

#include "bridgestain/image.hpp"
#include "bridgestain/rng.hpp"

namespace testutil {

inline bridgestain::ImageTensor random_image(int h, int w, int c, std::uint64_t seed,
                                             bridgestain::Semantics sem = bridgestain::Semantics::rgb) {
  bridgestain::ImageTensor img(h, w, c, sem);
  bridgestain::RngStream rng(seed);
  for (double& v : img.data()) v = rng.uniform();
  return img;
}

inline bridgestain::ImageTensor random_normal(int h, int w, int c, std::uint64_t seed) {
  bridgestain::ImageTensor img(h, w, c, bridgestain::Semantics::normalized_latent,
                               {-1e300, 1e300});
  bridgestain::RngStream rng(seed);
  for (double& v : img.data()) v = rng.normal();
  return img;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("bridgestain_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
