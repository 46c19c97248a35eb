#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bridgestain/image.hpp"

namespace bridgestain {

/// A stain-like rgb target x_0 and its low-resolution pseudo-autofluorescence
/// input y_0.
struct PairedSample {
  std::string id;
  std::uint64_t seed = 0;
  int factor = 1;
  ImageTensor target;  // H x W x 3, rgb [0,1]
  ImageTensor input;   // H/N x W/N x C_af, af-stack [0,1]
};

/// Latent fields the target and the pseudo-AF channels are both rendered from.
struct SceneFields {
  ImageTensor nuclei;  // soft nucleus mask, [0,1]
  ImageTensor stroma;  // band-pass fibre texture, (0,1)
  ImageTensor cyto;    // smooth cytoplasm density, (0,1)
};

SceneFields generate_scene(std::uint64_t seed, int size);
ImageTensor render_target(const SceneFields& scene);
/// Full-resolution pseudo-AF stack: channel k is a fixed gamma-corrected mix of
/// the scene fields.
ImageTensor render_autofluorescence(const SceneFields& scene, int channels);

inline constexpr int kMaxAfChannels = 4;

PairedSample generate_pair(std::uint64_t seed, int size, int factor, int channels);

struct DatasetConfig {
  std::filesystem::path dir;
  int size = 32;
  int factor = 2;
  int channels = 4;
  int train_count = 2000;
  int test_count = 200;
  std::uint64_t train_seed = 0;
  std::uint64_t test_seed = 1000000;
};

void validate(const DatasetConfig& cfg);

struct SplitInfo {
  std::uint64_t seed_start = 0;
  std::vector<std::string> ids;
  std::vector<std::uint64_t> seeds;
};

inline constexpr int kDatasetFormatVersion = 1;

struct DatasetManifest {
  int format_version = kDatasetFormatVersion;
  int size = 32;
  int factor = 2;
  int channels = 4;
  SplitInfo train;
  SplitInfo test;
  NormalizationStats target_stats;  // train split only
  NormalizationStats input_stats;   // train split only

  const SplitInfo& split(const std::string& name) const;
};

std::string sample_id(std::uint64_t seed);

/// Writes manifest.json and {split}/{id}_target.btns, {split}/{id}_input.btns.
DatasetManifest build_dataset(const DatasetConfig& cfg);

DatasetManifest load_manifest(const std::filesystem::path& dir);
void save_manifest(const std::filesystem::path& dir, const DatasetManifest& m);

/// "split/id" of every sample whose files are missing.
std::vector<std::string> validate_dataset(const std::filesystem::path& dir,
                                          const DatasetManifest& m);

std::filesystem::path target_path(const std::filesystem::path& dir, const std::string& split,
                                  const std::string& id);
std::filesystem::path input_path(const std::filesystem::path& dir, const std::string& split,
                                 const std::string& id);

/// Loads up to `limit` samples (all when limit <= 0) of a split in manifest order.
std::vector<PairedSample> load_split(const std::filesystem::path& dir, const DatasetManifest& m,
                                     const std::string& split, int limit = 0);

}  // namespace bridgestain
