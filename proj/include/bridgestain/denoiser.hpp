#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "bridgestain/checkpoint.hpp"
#include "bridgestain/image.hpp"
#include "bridgestain/nn/unet.hpp"

namespace bridgestain {

enum class DenoiserKind { unet, oracle_exact, oracle_plus_noise, zero };

const char* to_string(DenoiserKind k) noexcept;

/// One estimator call. `tile` identifies which ground truth an oracle should
/// use; networks ignore it.
struct DenoiseQuery {
  const ImageTensor* x_t = nullptr;
  const ImageTensor* y = nullptr;
  int t = 0;
  int tile = 0;
};

/// Estimator of x_t - x_0 given (x_t, y, t). Implementations are pure and
/// may be called from several threads at once.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual DenoiserKind kind() const noexcept = 0;
  virtual std::vector<ImageTensor> evaluate_batch(std::span<const DenoiseQuery> queries) const = 0;

  ImageTensor evaluate(const ImageTensor& x_t, const ImageTensor& y, int t, int tile = 0) const;
};

/// Returns x_t - x0[tile] exactly.
class OracleDenoiser : public Denoiser {
 public:
  explicit OracleDenoiser(std::vector<ImageTensor> x0);
  DenoiserKind kind() const noexcept override { return DenoiserKind::oracle_exact; }
  std::vector<ImageTensor> evaluate_batch(std::span<const DenoiseQuery> queries) const override;

 protected:
  const ImageTensor& truth(int tile) const;

 private:
  std::vector<ImageTensor> x0_;
};

/// Exact oracle plus sigma * N(0, I). The perturbation is a deterministic
/// function of (seed, t, tile, bytes of x_t), so repeated calls agree while
/// distinct chains see independent draws.
class NoisyOracleDenoiser : public OracleDenoiser {
 public:
  NoisyOracleDenoiser(std::vector<ImageTensor> x0, double sigma, std::uint64_t seed);
  DenoiserKind kind() const noexcept override { return DenoiserKind::oracle_plus_noise; }
  std::vector<ImageTensor> evaluate_batch(std::span<const DenoiseQuery> queries) const override;

 private:
  double sigma_;
  std::uint64_t seed_;
};

class ZeroDenoiser : public Denoiser {
 public:
  DenoiserKind kind() const noexcept override { return DenoiserKind::zero; }
  std::vector<ImageTensor> evaluate_batch(std::span<const DenoiseQuery> queries) const override;
};

/// Maps the low-resolution input y0 to the bridge endpoint y.
class Conditioner {
 public:
  virtual ~Conditioner() = default;
  virtual ImageTensor apply(const ImageTensor& y0) const = 0;
};

/// y = y0 relabelled as a latent; used with oracles where y0 is already at
/// target resolution.
class IdentityConditioner : public Conditioner {
 public:
  ImageTensor apply(const ImageTensor& y0) const override;
};

/// Trained model: normalises y0 with the input statistics and runs the
/// conditioner network; the U-Net sees concat(x_t, y).
template <typename S>
class NetworkModel {
 public:
  NetworkModel(const ModelSpec& spec, const NormalizationStats& input_stats,
               const NormalizationStats& target_stats);
  static std::unique_ptr<NetworkModel> from_checkpoint(const Checkpoint& ckpt);

  const ModelSpec& spec() const noexcept { return spec_; }
  nn::DiffusionModel<S>& model() noexcept { return model_; }
  const NormalizationStats& input_stats() const noexcept { return input_stats_; }
  const NormalizationStats& target_stats() const noexcept { return target_stats_; }

  ImageTensor condition(const ImageTensor& y0) const;
  std::vector<ImageTensor> predict(std::span<const DenoiseQuery> queries) const;

 private:
  ModelSpec spec_;
  NormalizationStats input_stats_;
  NormalizationStats target_stats_;
  mutable nn::DiffusionModel<S> model_;
};

template <typename S>
class NetworkDenoiser : public Denoiser {
 public:
  explicit NetworkDenoiser(const NetworkModel<S>& net) : net_(net) {}
  DenoiserKind kind() const noexcept override { return DenoiserKind::unet; }
  std::vector<ImageTensor> evaluate_batch(std::span<const DenoiseQuery> queries) const override {
    return net_.predict(queries);
  }

 private:
  const NetworkModel<S>& net_;
};

template <typename S>
class NetworkConditioner : public Conditioner {
 public:
  explicit NetworkConditioner(const NetworkModel<S>& net) : net_(net) {}
  ImageTensor apply(const ImageTensor& y0) const override { return net_.condition(y0); }

 private:
  const NetworkModel<S>& net_;
};

// Packing between ImageTensor lists and (channels x batch*H*W) matrices.
template <typename S>
nn::Matrix<S> pack_images(std::span<const ImageTensor* const> images);
template <typename S>
std::vector<ImageTensor> unpack_images(const nn::Matrix<S>& m, int batch, int height, int width,
                                       Semantics semantics, ValueRange range);

}  // namespace bridgestain
