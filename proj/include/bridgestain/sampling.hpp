#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "bridgestain/denoiser.hpp"
#include "bridgestain/image.hpp"
#include "bridgestain/schedule.hpp"

namespace bridgestain {

enum class Strategy { vanilla, mean, skip };

const char* to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view name);

struct SamplerConfig {
  Strategy strategy = Strategy::mean;
  int exit_point = 50;
  int averaging = 1;
  std::uint64_t seed = 0;
  bool clip_x0 = false;
};

void validate(const SamplerConfig& cfg, int T);

/// Denoiser evaluations one chain makes: T for vanilla and mean, T - t_e + 1
/// for skip (vanilla steps T..t_e+1, then one estimate at t_e).
std::int64_t evaluations_per_chain(const SamplerConfig& cfg, int T);

/// Standard normal field for reverse step t of the chain rooted at seed.
ImageTensor step_noise(std::uint64_t seed, int t, int height, int width, int channels);

/// c_x x_t + c_y y - c_eps eps_hat + sqrt(delta_tilde) z, valid for 1 <= t <= T
/// (t = T is the pinned terminal step). Pass z = nullptr for the noiseless mean.
ImageTensor reverse_update(const BridgeSchedule& s, const ImageTensor& x_t, const ImageTensor& y,
                           int t, const ImageTensor& eps_hat, const ImageTensor* z);

ImageTensor vanilla_step(const BridgeSchedule& s, const Denoiser& d, const ImageTensor& x_t,
                         const ImageTensor& y, int t, std::uint64_t seed, int tile = 0);
ImageTensor mean_step(const BridgeSchedule& s, const Denoiser& d, const ImageTensor& x_t,
                      const ImageTensor& y, int t, int tile = 0);
ImageTensor skip_exit(const Denoiser& d, const ImageTensor& x_te, int t_e, const ImageTensor& y,
                      int tile = 0);

/// One chain to run in latent space from x_T = *y.
struct ChainJob {
  const ImageTensor* y = nullptr;
  std::uint64_t seed = 0;
  int tile = 0;
};

struct LatentOptions {
  Strategy strategy = Strategy::mean;
  int exit_point = 50;
  // Per-channel bounds applied to x0_hat = x_t - eps_hat inside the chain.
  const std::vector<ValueRange>* x0_bounds = nullptr;
  // Chains advanced together per denoiser call.
  int batch = 8;
};

struct LatentResult {
  ImageTensor x0;
  std::int64_t evaluations = 0;
};

/// Runs every job to x_0. Jobs are grouped into fixed-size lockstep batches
/// independent of the worker count, so results do not depend on threading.
std::vector<LatentResult> run_latent_chains(const BridgeSchedule& s, const Denoiser& d,
                                            std::span<const ChainJob> jobs,
                                            const LatentOptions& opt);

/// Conditioner, denoiser and the map from the chain's space to outputs.
struct Pipeline {
  const Conditioner* conditioner = nullptr;
  const Denoiser* denoiser = nullptr;
  // When set, outputs are denormalised with these statistics to
  // output_semantics/output_range and clipped to that range.
  const NormalizationStats* output_stats = nullptr;
  Semantics output_semantics = Semantics::rgb;
  ValueRange output_range = kUnitRange;
  int batch = 8;

  ImageTensor finish(const ImageTensor& latent) const;
  /// Chain-space bounds equivalent to output_range (empty without stats).
  std::vector<ValueRange> x0_bounds() const;
};

struct ChainResult {
  ImageTensor output;
  std::int64_t evaluations = 0;
};

ChainResult run_chain(const BridgeSchedule& s, const Pipeline& p, const ImageTensor& y0,
                      const SamplerConfig& cfg, int tile = 0);

struct AveragedResult {
  ImageTensor average;
  std::vector<ImageTensor> runs;
  std::int64_t evaluations = 0;
};

/// n = seeds.size() independent chains averaged per pixel; cfg.seed is
/// ignored. Duplicate seeds are an invalid-config error.
AveragedResult run_averaged(const BridgeSchedule& s, const Pipeline& p, const ImageTensor& y0,
                            const SamplerConfig& cfg, std::span<const std::uint64_t> seeds,
                            int tile = 0);

/// Seed of run r on tile `tile` for a sampling job rooted at `root`.
std::uint64_t chain_seed(std::uint64_t root, int tile, int run);

/// cfg.averaging chains per tile with chain_seed(cfg.seed, tile_ids[i], r),
/// batched across tiles.
std::vector<AveragedResult> sample_tiles(const BridgeSchedule& s, const Pipeline& p,
                                         std::span<const ImageTensor> y0,
                                         std::span<const int> tile_ids, const SamplerConfig& cfg);

/// Mean and skip outputs at every exit point from one shared vanilla
/// trajectory per job (y0[i], tile_ids[i], seeds[i]); identical to separate
/// runs with the same seeds.
struct ExitSweep {
  std::vector<int> grid;
  std::vector<ImageTensor> vanilla;            // [job]
  std::vector<std::vector<ImageTensor>> mean;  // [grid][job]
  std::vector<std::vector<ImageTensor>> skip;  // [grid][job]
  std::int64_t evaluations = 0;
};

ExitSweep exit_sweep(const BridgeSchedule& s, const Pipeline& p, std::span<const ImageTensor> y0,
                     std::span<const int> tile_ids, std::span<const std::uint64_t> seeds,
                     std::span<const int> grid, bool clip_x0 = false);

inline constexpr int kDefaultExitGrid[] = {10, 25, 50, 100, 150, 200, 300, 400, 500};

}  // namespace bridgestain
