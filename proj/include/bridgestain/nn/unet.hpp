#pragma once

#include <memory>
#include <span>
#include <vector>

#include "bridgestain/nn/layers.hpp"

namespace bridgestain::nn {

struct UNetConfig {
  int levels = 3;
  int base_width = 32;
  int attention_heads = 4;
  int time_embed_dim = 64;
  int in_channels = 6;
  int out_channels = 3;
  int norm_groups = 8;
  // Attention blocks are placed on levels >= this index (0 = every level).
  int attention_min_level = 0;

  int width(int level) const noexcept { return base_width << level; }
  bool operator==(const UNetConfig&) const = default;
};

void validate(const UNetConfig& cfg);

/// Sinusoidal code of timestep t: [sin(t f_0..f_{k-1}), cos(t f_0..f_{k-1})]
/// with k = dim/2 frequencies spaced geometrically from 1 down to 1/10000.
std::vector<double> sinusoidal_code(int t, int dim);

/// Noise-estimating U-Net: stem conv, `levels` down levels (residual block
/// then attention, 2x2 average pooling between levels), a middle block of
/// residual + attention + residual, mirrored up levels joined by nearest 2x
/// upsampling with skip concatenation, and a norm/silu/conv head.
template <typename S>
class UNet {
 public:
  explicit UNet(const UNetConfig& cfg);
  UNet(const UNet&) = delete;
  UNet& operator=(const UNet&) = delete;

  void init(RngStream& rng);

  const UNetConfig& config() const noexcept { return cfg_; }
  ParameterSet<S>& params() noexcept { return params_; }
  const ParameterSet<S>& params() const noexcept { return params_; }

  /// x is (in_channels x batch*H*W); ts holds one timestep per sample.
  /// With keep = false nothing is cached and concurrent calls are safe.
  Matrix<S> forward(const Matrix<S>& x, std::span<const int> ts, const Geometry& g, bool keep);
  /// Gradient with respect to the forward input; accumulates parameter grads.
  Matrix<S> backward(const Matrix<S>& dy);

 private:
  bool has_attention(int level) const noexcept { return level >= cfg_.attention_min_level; }

  UNetConfig cfg_;
  ParameterSet<S> params_;
  Conv2d<S> stem_;
  std::vector<ResBlock<S>> down_res_;
  std::vector<AttentionBlock<S>> down_attn_;
  ResBlock<S> mid_res_a_;
  AttentionBlock<S> mid_attn_;
  ResBlock<S> mid_res_b_;
  std::vector<ResBlock<S>> up_res_;
  std::vector<AttentionBlock<S>> up_attn_;
  GroupNorm<S> out_norm_;
  Conv2d<S> out_conv_;

  std::vector<Geometry> geoms_;
  std::vector<int> skip_rows_;
  Matrix<S> out_pre_;
};

struct ConditionerConfig {
  int in_channels = 4;
  int hidden = 32;
  int factor = 2;
  int out_channels = 3;

  bool operator==(const ConditionerConfig&) const = default;
};

void validate(const ConditionerConfig& cfg);

/// Shallow dimension-matching network: 3x3 conv, silu, 3x3 conv to
/// out_channels * factor^2, then pixel shuffle by factor.
template <typename S>
class Conditioner {
 public:
  explicit Conditioner(const ConditionerConfig& cfg);
  Conditioner(const Conditioner&) = delete;
  Conditioner& operator=(const Conditioner&) = delete;

  void init(RngStream& rng);

  const ConditionerConfig& config() const noexcept { return cfg_; }
  ParameterSet<S>& params() noexcept { return params_; }
  const ParameterSet<S>& params() const noexcept { return params_; }

  /// x is (in_channels x batch*h*w) at input resolution; the result is at
  /// (h*factor, w*factor).
  Matrix<S> forward(const Matrix<S>& x, const Geometry& g, bool keep);
  void backward(const Matrix<S>& dy);

 private:
  ConditionerConfig cfg_;
  ParameterSet<S> params_;
  Conv2d<S> conv1_;
  Conv2d<S> conv2_;
  Matrix<S> a1_;
  Geometry g_;
};

/// The conditioner and the U-Net trained jointly.
template <typename S>
struct DiffusionModel {
  DiffusionModel(const UNetConfig& unet_cfg, const ConditionerConfig& cond_cfg)
      : unet(std::make_unique<UNet<S>>(unet_cfg)),
        conditioner(std::make_unique<Conditioner<S>>(cond_cfg)) {}

  void init(std::uint64_t seed);
  /// Conditioner parameters first, then the U-Net's, in construction order.
  std::vector<Parameter<S>*> all_params();
  std::size_t parameter_count() const;

  std::unique_ptr<UNet<S>> unet;
  std::unique_ptr<Conditioner<S>> conditioner;
};

}  // namespace bridgestain::nn
