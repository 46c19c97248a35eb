#include "bridgestain/training.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "bridgestain/error.hpp"
#include "bridgestain/rng.hpp"

namespace bridgestain {

void validate(const TrainingConfig& cfg, int T) {
  require(cfg.learning_rate >= 0.0, ErrorCode::invalid_config, "learning_rate must be >= 0");
  require(cfg.batch_size >= 1, ErrorCode::invalid_config, "batch_size must be >= 1");
  require(cfg.max_steps >= 0, ErrorCode::invalid_config, "max_steps must be >= 0");
  require(cfg.weight_decay >= 0.0, ErrorCode::invalid_config, "weight_decay must be >= 0");
  require(cfg.gamma.empty() || static_cast<int>(cfg.gamma.size()) == T + 1,
          ErrorCode::invalid_config, "gamma must have T+1 entries (indexed by t)");
  for (double g : cfg.gamma) {
    require(g >= 0.0 && std::isfinite(g), ErrorCode::invalid_config, "gamma_t must be >= 0");
  }
}

double gamma_at(const TrainingConfig& cfg, int t) {
  return cfg.gamma.empty() ? 1.0 : cfg.gamma[static_cast<std::size_t>(t)];
}

LossDetail bridge_loss(const BridgeSchedule& s, const Denoiser& d, std::span<const ImageTensor> x0,
                       std::span<const ImageTensor> y, std::span<const int> ts,
                       std::span<const ImageTensor> eps, const TrainingConfig& cfg) {
  const std::size_t B = x0.size();
  require(B >= 1, ErrorCode::invalid_input, "loss of an empty batch");
  require(y.size() == B && ts.size() == B && eps.size() == B, ErrorCode::invalid_input,
          "loss batch components differ in length");
  std::vector<ImageTensor> xt(B);
  std::vector<DenoiseQuery> q(B);
  for (std::size_t b = 0; b < B; ++b) {
    require(ts[b] >= 1 && ts[b] <= s.T, ErrorCode::invalid_step, "training t outside [1, T]");
    xt[b] = forward_with_noise(s, x0[b], y[b], ts[b], eps[b]);
    q[b] = {&xt[b], &y[b], ts[b], static_cast<int>(b)};
  }
  const std::vector<ImageTensor> pred = d.evaluate_batch(q);
  LossDetail out;
  for (std::size_t b = 0; b < B; ++b) {
    const ImageTensor target = training_target(s, x0[b], y[b], ts[b], eps[b]);
    double acc = 0.0;
    const auto p = pred[b].data();
    const auto tg = target.data();
    for (std::size_t k = 0; k < tg.size(); ++k) acc += (tg[k] - p[k]) * (tg[k] - p[k]);
    const double v = gamma_at(cfg, ts[b]) * acc / static_cast<double>(tg.size());
    out.per_sample.push_back(v);
    out.loss += v;
  }
  out.loss /= static_cast<double>(B);
  return out;
}

BatchDraw draw_batch(std::uint64_t seed, std::int64_t step, int batch, int dataset_size, int T,
                     int height, int width, int channels, bool augment) {
  require(dataset_size >= 1, ErrorCode::invalid_input, "empty training set");
  RngStream rng(stream_key(seed, stream_tag::training_step, static_cast<std::uint64_t>(step)));
  BatchDraw d;
  for (int b = 0; b < batch; ++b) {
    d.tile.push_back(rng.uniform_int(0, dataset_size - 1));
    d.t.push_back(rng.uniform_int(1, T));
    d.transform.push_back(augment ? rng.uniform_int(0, kDihedralCount - 1) : 0);
    ImageTensor e(height, width, channels, Semantics::normalized_latent,
                  {-INFINITY, INFINITY});
    for (double& v : e.data()) v = rng.normal();
    d.eps.push_back(std::move(e));
  }
  return d;
}

template <typename S>
double loss_and_gradients(nn::DiffusionModel<S>& model, const BridgeSchedule& s,
                          std::span<const ImageTensor> x0, std::span<const ImageTensor> y0,
                          std::span<const int> ts, std::span<const ImageTensor> eps,
                          const TrainingConfig& cfg) {
  using nn::Matrix;
  const int B = static_cast<int>(x0.size());
  require(B >= 1, ErrorCode::invalid_input, "loss of an empty batch");
  require(static_cast<int>(y0.size()) == B && static_cast<int>(ts.size()) == B &&
              static_cast<int>(eps.size()) == B,
          ErrorCode::invalid_input, "loss batch components differ in length");
  const int H = x0[0].height(), W = x0[0].width(), C = x0[0].channels();
  const nn::Geometry g_lo{B, y0[0].height(), y0[0].width()};
  const nn::Geometry g{B, H, W};
  const std::size_t P = static_cast<std::size_t>(H) * W;

  std::vector<const ImageTensor*> ptr(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) ptr[b] = &y0[b];
  const Matrix<S> Y = model.conditioner->forward(pack_images<S>(ptr), g_lo, true);
  require(Y.rows() == C && static_cast<std::size_t>(Y.cols()) == B * P, ErrorCode::invalid_input,
          "conditioner output does not match the target shape");
  for (int b = 0; b < B; ++b) ptr[b] = &x0[b];
  const Matrix<S> X0 = pack_images<S>(ptr);
  for (int b = 0; b < B; ++b) ptr[b] = &eps[b];
  const Matrix<S> E = pack_images<S>(ptr);

  Matrix<S> in(2 * C, Y.cols());
  Matrix<S> target(C, Y.cols());
  std::vector<S> mb(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    const int t = ts[b];
    require(t >= 1 && t <= s.T, ErrorCode::invalid_step, "training t outside [1, T]");
    const S m = static_cast<S>(s.m[t]);
    const S sd = static_cast<S>(std::sqrt(s.delta[t]));
    mb[b] = m;
    const Eigen::Index c0 = static_cast<Eigen::Index>(b * P), n = static_cast<Eigen::Index>(P);
    target.middleCols(c0, n) = m * (Y.middleCols(c0, n) - X0.middleCols(c0, n)) +
                               sd * E.middleCols(c0, n);
    in.topRows(C).middleCols(c0, n) = X0.middleCols(c0, n) + target.middleCols(c0, n);
    in.bottomRows(C).middleCols(c0, n) = Y.middleCols(c0, n);
  }
  const Matrix<S> pred = model.unet->forward(in, ts, g, true);
  Matrix<S> dpred = pred - target;
  double loss = 0.0;
  for (int b = 0; b < B; ++b) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(b * P), n = static_cast<Eigen::Index>(P);
    const double w = gamma_at(cfg, ts[b]) / (static_cast<double>(B) * C * P);
    auto r = dpred.middleCols(c0, n);
    loss += w * r.template cast<double>().squaredNorm();
    r *= static_cast<S>(2.0 * w);
  }
  const Matrix<S> din = model.unet->backward(dpred);
  Matrix<S> dY = din.bottomRows(C);
  for (int b = 0; b < B; ++b) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(b * P), n = static_cast<Eigen::Index>(P);
    dY.middleCols(c0, n) += mb[b] * (din.topRows(C).middleCols(c0, n) - dpred.middleCols(c0, n));
  }
  model.conditioner->backward(dY);
  return loss;
}

namespace {

template <typename S>
struct AdamState {
  std::vector<nn::Matrix<S>> m, v;
};

template <typename S>
void check_data(const ModelSpec& spec, std::span<const PairedSample> data) {
  require(!data.empty(), ErrorCode::invalid_input, "training set is empty");
  const auto& first = data.front();
  const int f = spec.conditioner.factor;
  require(first.target.channels() == spec.conditioner.out_channels, ErrorCode::invalid_config,
          "target channels do not match the model");
  require(first.input.channels() == spec.conditioner.in_channels, ErrorCode::invalid_config,
          "input channels do not match the conditioner");
  require(first.input.height() * f == first.target.height() &&
              first.input.width() * f == first.target.width(),
          ErrorCode::invalid_config,
          "dataset factor does not match the conditioner factor " + std::to_string(f));
  for (const auto& s : data) {
    require(s.target.same_shape(first.target) && s.input.same_shape(first.input),
            ErrorCode::invalid_input, "training tiles differ in shape");
  }
}

}  // namespace

template <typename S>
TrainResult train(const TrainingConfig& cfg, const ModelSpec& spec,
                  std::span<const PairedSample> data, const NormalizationStats& target_stats,
                  const NormalizationStats& input_stats, const TrainHooks& hooks) {
  validate(cfg, spec.T);
  nn::validate(spec.unet);
  nn::validate(spec.conditioner);
  check_data<S>(spec, data);
  const BridgeSchedule sched = build_schedule(spec.T);

  nn::DiffusionModel<S> model(spec.unet, spec.conditioner);
  model.init(cfg.seed);
  auto params = model.all_params();
  AdamState<S> adam;
  for (auto* p : params) {
    adam.m.push_back(nn::Matrix<S>::Zero(p->value.rows(), p->value.cols()));
    adam.v.push_back(nn::Matrix<S>::Zero(p->value.rows(), p->value.cols()));
  }
  std::int64_t step0 = 0;
  NormalizationStats tstats = target_stats, istats = input_stats;
  if (cfg.init_from) {
    const Checkpoint ckpt = load_checkpoint(*cfg.init_from);
    require(ckpt.spec == spec, ErrorCode::incompatible_checkpoint,
            "checkpoint " + *cfg.init_from + " was trained with a different model configuration");
    import_parameters(ckpt, model);
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (const NamedBlob* b = ckpt.find("adam.m." + params[k]->name)) from_blob(*b, adam.m[k]);
      if (const NamedBlob* b = ckpt.find("adam.v." + params[k]->name)) from_blob(*b, adam.v[k]);
    }
    step0 = ckpt.step;
    tstats = ckpt.target_stats;
    istats = ckpt.input_stats;
  }

  std::vector<ImageTensor> xn, yn;
  xn.reserve(data.size());
  yn.reserve(data.size());
  for (const auto& s : data) {
    xn.push_back(normalize(s.target, tstats));
    yn.push_back(normalize(s.input, istats));
  }
  const int H = data.front().target.height(), W = data.front().target.width();
  const int C = data.front().target.channels();

  auto snapshot = [&](std::int64_t step) {
    Checkpoint ck;
    ck.spec = spec;
    ck.step = step;
    ck.seed = cfg.seed;
    ck.target_stats = tstats;
    ck.input_stats = istats;
    export_parameters(model, ck);
    for (std::size_t k = 0; k < params.size(); ++k) {
      ck.blobs.push_back(to_blob("adam.m." + params[k]->name, adam.m[k]));
      ck.blobs.push_back(to_blob("adam.v." + params[k]->name, adam.v[k]));
    }
    return ck;
  };

  TrainResult result;
  const auto start = std::chrono::steady_clock::now();
  const int B = cfg.batch_size;
  for (int k = 0; k < cfg.max_steps; ++k) {
    const std::int64_t step = step0 + k;
    const BatchDraw draw = draw_batch(cfg.seed, step, B, static_cast<int>(data.size()), spec.T,
                                      H, W, C, cfg.augment);
    std::vector<ImageTensor> bx, by;
    for (int b = 0; b < B; ++b) {
      const std::size_t tile = static_cast<std::size_t>(draw.tile[b]);
      bx.push_back(apply_dihedral(xn[tile], draw.transform[b]));
      by.push_back(apply_dihedral(yn[tile], draw.transform[b]));
    }
    for (auto* p : params) p->grad.setZero();
    const double loss = loss_and_gradients(model, sched, bx, by, draw.t, draw.eps, cfg);
    require(std::isfinite(loss), ErrorCode::invalid_input,
            "training loss diverged at step " + std::to_string(step + 1));

    double norm2 = 0.0;
    for (auto* p : params) norm2 += p->grad.template cast<double>().squaredNorm();
    const double norm = std::sqrt(norm2);
    const S scale = static_cast<S>(cfg.clip_norm > 0.0 && norm > cfg.clip_norm
                                       ? cfg.clip_norm / norm
                                       : 1.0);
    double lr = cfg.learning_rate;
    if (cfg.cosine_decay && cfg.max_steps > 0) {
      lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * k / cfg.max_steps));
    }
    const double t_adam = static_cast<double>(step + 1);
    const S b1 = static_cast<S>(cfg.adam_beta1), b2 = static_cast<S>(cfg.adam_beta2);
    const S c1 = static_cast<S>(1.0 - std::pow(cfg.adam_beta1, t_adam));
    const S c2 = static_cast<S>(1.0 - std::pow(cfg.adam_beta2, t_adam));
    const S eps = static_cast<S>(cfg.adam_eps);
    const S slr = static_cast<S>(lr), wd = static_cast<S>(cfg.weight_decay);
    for (std::size_t q = 0; q < params.size(); ++q) {
      auto& p = *params[q];
      const nn::Matrix<S> g = p.grad * scale;
      adam.m[q] = b1 * adam.m[q] + (S(1) - b1) * g;
      adam.v[q] = b2 * adam.v[q] + (S(1) - b2) * g.cwiseProduct(g);
      p.value.array() -= slr * ((adam.m[q].array() / c1) /
                                    ((adam.v[q].array() / c2).sqrt() + eps) +
                                wd * p.value.array());
    }

    LogRow row;
    row.step = step + 1;
    row.loss = loss;
    row.lr = lr;
    if (hooks.timing) {
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              start)
                        .count();
    }
    result.log.push_back(row);
    if (hooks.on_step) hooks.on_step(row);
    if (hooks.checkpoint_every > 0 && hooks.on_checkpoint && (k + 1) % hooks.checkpoint_every == 0 &&
        k + 1 < cfg.max_steps) {
      hooks.on_checkpoint(snapshot(step + 1));
    }
  }
  result.checkpoint = snapshot(step0 + cfg.max_steps);
  return result;
}

std::pair<double, double> smoothed_loss_ends(std::span<const LogRow> log, int window) {
  require(!log.empty() && window >= 1, ErrorCode::invalid_input, "empty loss trace");
  const std::size_t w = std::min(log.size(), static_cast<std::size_t>(window));
  double first = 0.0, last = 0.0;
  for (std::size_t k = 0; k < w; ++k) {
    first += log[k].loss;
    last += log[log.size() - w + k].loss;
  }
  return {first / static_cast<double>(w), last / static_cast<double>(w)};
}

template double loss_and_gradients<float>(nn::DiffusionModel<float>&, const BridgeSchedule&,
                                          std::span<const ImageTensor>,
                                          std::span<const ImageTensor>, std::span<const int>,
                                          std::span<const ImageTensor>, const TrainingConfig&);
template double loss_and_gradients<double>(nn::DiffusionModel<double>&, const BridgeSchedule&,
                                           std::span<const ImageTensor>,
                                           std::span<const ImageTensor>, std::span<const int>,
                                           std::span<const ImageTensor>, const TrainingConfig&);
template TrainResult train<float>(const TrainingConfig&, const ModelSpec&,
                                  std::span<const PairedSample>, const NormalizationStats&,
                                  const NormalizationStats&, const TrainHooks&);
template TrainResult train<double>(const TrainingConfig&, const ModelSpec&,
                                   std::span<const PairedSample>, const NormalizationStats&,
                                   const NormalizationStats&, const TrainHooks&);

}  // namespace bridgestain
