#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bridgestain/checkpoint.hpp"
#include "bridgestain/denoiser.hpp"
#include "bridgestain/schedule.hpp"
#include "bridgestain/synthdata.hpp"

namespace bridgestain {

struct TrainingConfig {
  std::vector<double> gamma;  // per-step weights indexed by t; empty means all 1
  double learning_rate = 1e-4;
  int batch_size = 8;
  int max_steps = 2000;
  std::uint64_t seed = 0;
  std::optional<std::string> init_from;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // <= 0 disables clipping
  bool cosine_decay = false;
  bool augment = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

void validate(const TrainingConfig& cfg, int T);

double gamma_at(const TrainingConfig& cfg, int t);

/// Mean over the batch of gamma_t * mean_elements((target - eps_hat)^2) with
/// target = m_t (y - x_0) + sqrt(delta_t) eps and x_t from the same eps.
struct LossDetail {
  double loss = 0.0;
  std::vector<double> per_sample;
};

LossDetail bridge_loss(const BridgeSchedule& s, const Denoiser& d, std::span<const ImageTensor> x0,
                       std::span<const ImageTensor> y, std::span<const int> ts,
                       std::span<const ImageTensor> eps, const TrainingConfig& cfg);

/// Random content of one optimisation step, a pure function of (seed, step).
struct BatchDraw {
  std::vector<int> tile;
  std::vector<int> t;
  std::vector<int> transform;
  std::vector<ImageTensor> eps;
};

BatchDraw draw_batch(std::uint64_t seed, std::int64_t step, int batch, int dataset_size, int T,
                     int height, int width, int channels, bool augment);

/// Loss of the network on normalised (x0, y0) pairs; parameter gradients are
/// accumulated into the model (callers zero them first).
template <typename S>
double loss_and_gradients(nn::DiffusionModel<S>& model, const BridgeSchedule& s,
                          std::span<const ImageTensor> x0, std::span<const ImageTensor> y0,
                          std::span<const int> ts, std::span<const ImageTensor> eps,
                          const TrainingConfig& cfg);

struct LogRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LogRow> log;  // one row per step
};

struct TrainHooks {
  std::function<void(const LogRow&)> on_step;
  // Called every `checkpoint_every` steps with a snapshot.
  int checkpoint_every = 0;
  std::function<void(const Checkpoint&)> on_checkpoint;
  bool timing = true;
};

/// Jointly optimises the conditioner and U-Net with AdamW on raw
/// (target, input) pairs normalised by the given statistics. With
/// cfg.init_from the model, optimiser state, statistics and step counter are
/// restored from that checkpoint and max_steps more steps are run.
template <typename S>
TrainResult train(const TrainingConfig& cfg, const ModelSpec& spec,
                  std::span<const PairedSample> data, const NormalizationStats& target_stats,
                  const NormalizationStats& input_stats, const TrainHooks& hooks = {});

/// Mean of the first and last `window` entries of a loss trace.
std::pair<double, double> smoothed_loss_ends(std::span<const LogRow> log, int window);

}  // namespace bridgestain
