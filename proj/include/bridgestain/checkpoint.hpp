#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bridgestain/image.hpp"
#include "bridgestain/nn/unet.hpp"

namespace bridgestain {

struct ModelSpec {
  nn::UNetConfig unet;
  nn::ConditionerConfig conditioner;
  int T = 1000;

  bool operator==(const ModelSpec&) const = default;
};

struct NamedBlob {
  std::string name;
  ImageTensor value;  // rows x cols x 1
};

// Container layout: magic "BTCK" | version u32 | json length u32 | json |
// blob count u32 | per blob: name length u32, name bytes, BTNS tensor.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelSpec spec;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  NormalizationStats target_stats;
  NormalizationStats input_stats;
  std::vector<NamedBlob> blobs;

  const NamedBlob* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename S>
NamedBlob to_blob(const std::string& name, const nn::Matrix<S>& m);
template <typename S>
void from_blob(const NamedBlob& blob, nn::Matrix<S>& m);

/// Appends every model parameter as a blob.
template <typename S>
void export_parameters(nn::DiffusionModel<S>& model, Checkpoint& ckpt);
/// Loads parameters by name; a missing name or shape mismatch is an
/// incompatible-checkpoint error.
template <typename S>
void import_parameters(const Checkpoint& ckpt, nn::DiffusionModel<S>& model);

}  // namespace bridgestain
