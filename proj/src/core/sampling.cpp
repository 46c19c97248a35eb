#include "bridgestain/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "bridgestain/error.hpp"
#include "bridgestain/parallel.hpp"
#include "bridgestain/rng.hpp"

namespace bridgestain {

const char* to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::vanilla: return "vanilla";
    case Strategy::mean: return "mean";
    case Strategy::skip: return "skip";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "vanilla") return Strategy::vanilla;
  if (name == "mean") return Strategy::mean;
  if (name == "skip") return Strategy::skip;
  fail(ErrorCode::invalid_config, "unknown strategy '" + std::string(name) + "'");
}

void validate(const SamplerConfig& cfg, int T) {
  require(cfg.exit_point >= 0 && cfg.exit_point <= T, ErrorCode::invalid_config,
          "exit point " + std::to_string(cfg.exit_point) + " outside [0, " + std::to_string(T) +
              "]");
  require(cfg.strategy != Strategy::skip || cfg.exit_point >= 1, ErrorCode::invalid_config,
          "skip strategy needs an exit point >= 1");
  require(cfg.averaging >= 1, ErrorCode::invalid_config, "averaging count must be >= 1");
}

std::int64_t evaluations_per_chain(const SamplerConfig& cfg, int T) {
  return cfg.strategy == Strategy::skip ? T - cfg.exit_point + 1 : T;
}

ImageTensor step_noise(std::uint64_t seed, int t, int height, int width, int channels) {
  ImageTensor z(height, width, channels, Semantics::normalized_latent,
                {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()});
  RngStream rng(stream_key(seed, stream_tag::reverse_step, static_cast<std::uint64_t>(t)));
  for (double& v : z.data()) v = rng.normal();
  return z;
}

ImageTensor reverse_update(const BridgeSchedule& s, const ImageTensor& x_t, const ImageTensor& y,
                           int t, const ImageTensor& eps_hat, const ImageTensor* z) {
  require(t >= 1 && t <= s.T, ErrorCode::invalid_step,
          "reverse step t=" + std::to_string(t) + " outside [1, " + std::to_string(s.T) + "]");
  require_same_shape(x_t, y, "reverse step x_t/y");
  require_same_shape(x_t, eps_hat, "reverse step x_t/eps");
  const double cx = s.c_x[t], cy = s.c_y[t], ce = s.c_eps[t];
  const double sd = std::sqrt(s.delta_tilde[t]);
  ImageTensor out = x_t;
  auto o = out.data();
  const auto xs = x_t.data();
  const auto ys = y.data();
  const auto es = eps_hat.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = cx * xs[k] + cy * ys[k] - ce * es[k];
  if (z != nullptr && sd > 0.0) {
    require_same_shape(x_t, *z, "reverse step x_t/z");
    const auto zs = z->data();
    for (std::size_t k = 0; k < o.size(); ++k) o[k] += sd * zs[k];
  }
  return out;
}

ImageTensor vanilla_step(const BridgeSchedule& s, const Denoiser& d, const ImageTensor& x_t,
                         const ImageTensor& y, int t, std::uint64_t seed, int tile) {
  require(t >= 1 && t <= s.T, ErrorCode::invalid_step,
          "vanilla step t=" + std::to_string(t) + " outside [1, " + std::to_string(s.T) + "]");
  const ImageTensor eps = d.evaluate(x_t, y, t, tile);
  const ImageTensor z = step_noise(seed, t, x_t.height(), x_t.width(), x_t.channels());
  return reverse_update(s, x_t, y, t, eps, &z);
}

ImageTensor mean_step(const BridgeSchedule& s, const Denoiser& d, const ImageTensor& x_t,
                      const ImageTensor& y, int t, int tile) {
  require(t >= 1 && t <= s.T - 1, ErrorCode::invalid_step,
          "mean step t=" + std::to_string(t) + " outside [1, " + std::to_string(s.T - 1) + "]");
  const ImageTensor eps = d.evaluate(x_t, y, t, tile);
  return reverse_update(s, x_t, y, t, eps, nullptr);
}

ImageTensor skip_exit(const Denoiser& d, const ImageTensor& x_te, int t_e, const ImageTensor& y,
                      int tile) {
  require(t_e >= 1, ErrorCode::invalid_step, "skip exit point must be >= 1");
  return x0_from_eps(x_te, d.evaluate(x_te, y, t_e, tile));
}

namespace {

void clip_x0_estimate(const ImageTensor& x_t, ImageTensor& eps,
                      const std::vector<ValueRange>& bounds) {
  const int C = x_t.channels();
  require(static_cast<int>(bounds.size()) == C, ErrorCode::invalid_config,
          "x0 bounds do not match the channel count");
  const auto xs = x_t.data();
  auto es = eps.data();
  for (std::size_t k = 0; k < es.size(); ++k) {
    const ValueRange& r = bounds[k % static_cast<std::size_t>(C)];
    const double x0 = std::clamp(xs[k] - es[k], r.lo, r.hi);
    es[k] = xs[k] - x0;
  }
}

// Lockstep state of a group of chains sharing one denoiser call per step.
struct ChainGroup {
  std::span<const ChainJob> jobs;
  std::vector<ImageTensor> x;
  std::int64_t evaluations = 0;  // per chain
  const std::vector<ValueRange>* bounds = nullptr;

  explicit ChainGroup(std::span<const ChainJob> j, const std::vector<ValueRange>* b)
      : jobs(j), bounds(b) {
    x.reserve(jobs.size());
    for (const auto& job : jobs) {
      require(job.y != nullptr, ErrorCode::invalid_input, "chain job without y");
      x.push_back(*job.y);
    }
  }

  std::vector<ImageTensor> estimate(const Denoiser& d, int t) {
    std::vector<DenoiseQuery> q(jobs.size());
    for (std::size_t i = 0; i < jobs.size(); ++i) q[i] = {&x[i], jobs[i].y, t, jobs[i].tile};
    std::vector<ImageTensor> eps = d.evaluate_batch(q);
    require(eps.size() == jobs.size(), ErrorCode::invalid_input,
            "denoiser returned the wrong number of estimates");
    for (std::size_t i = 0; i < eps.size(); ++i) {
      require(eps[i].same_shape(x[i]) && all_finite(eps[i]), ErrorCode::invalid_input,
              "denoiser output has the wrong shape or is not finite");
      if (bounds != nullptr && !bounds->empty()) clip_x0_estimate(x[i], eps[i], *bounds);
    }
    ++evaluations;
    return eps;
  }

  void step(const BridgeSchedule& s, const Denoiser& d, int t, bool noisy) {
    const std::vector<ImageTensor> eps = estimate(d, t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (noisy && s.delta_tilde[t] > 0.0) {
        const ImageTensor z =
            step_noise(jobs[i].seed, t, x[i].height(), x[i].width(), x[i].channels());
        x[i] = reverse_update(s, x[i], *jobs[i].y, t, eps[i], &z);
      } else {
        x[i] = reverse_update(s, x[i], *jobs[i].y, t, eps[i], nullptr);
      }
    }
  }

  void exit_at(const Denoiser& d, int t_e) {
    const std::vector<ImageTensor> eps = estimate(d, t_e);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = x0_from_eps(x[i], eps[i]);
  }
};

std::size_t group_count(std::size_t n, int batch) {
  const std::size_t b = static_cast<std::size_t>(std::max(batch, 1));
  return (n + b - 1) / b;
}

template <typename T>
std::span<const T> group_slice(std::span<const T> all, std::size_t g, int batch) {
  const std::size_t b = static_cast<std::size_t>(std::max(batch, 1));
  const std::size_t lo = g * b;
  return all.subspan(lo, std::min(b, all.size() - lo));
}

}  // namespace

std::vector<LatentResult> run_latent_chains(const BridgeSchedule& s, const Denoiser& d,
                                            std::span<const ChainJob> jobs,
                                            const LatentOptions& opt) {
  SamplerConfig check;
  check.strategy = opt.strategy;
  check.exit_point = opt.exit_point;
  validate(check, s.T);
  std::vector<LatentResult> out(jobs.size());
  parallel_for(group_count(jobs.size(), opt.batch), [&](std::size_t g) {
    ChainGroup grp(group_slice(jobs, g, opt.batch), opt.x0_bounds);
    const int t_e = opt.exit_point;
    switch (opt.strategy) {
      case Strategy::vanilla:
        for (int t = s.T; t >= 1; --t) grp.step(s, d, t, true);
        break;
      case Strategy::mean:
        for (int t = s.T; t >= 1; --t) grp.step(s, d, t, t > t_e);
        break;
      case Strategy::skip:
        for (int t = s.T; t > t_e; --t) grp.step(s, d, t, true);
        grp.exit_at(d, t_e);
        break;
    }
    const std::size_t base = g * static_cast<std::size_t>(std::max(opt.batch, 1));
    for (std::size_t i = 0; i < grp.x.size(); ++i) {
      out[base + i] = {std::move(grp.x[i]), grp.evaluations};
    }
  });
  return out;
}

ImageTensor Pipeline::finish(const ImageTensor& latent) const {
  if (output_stats == nullptr) return latent;
  return clip(denormalize(latent, *output_stats, output_semantics, output_range), output_range);
}

std::vector<ValueRange> Pipeline::x0_bounds() const {
  std::vector<ValueRange> b;
  if (output_stats == nullptr) return b;
  for (int c = 0; c < output_stats->channels(); ++c) {
    const double sd = std::max(output_stats->std[c], kStdFloor);
    b.push_back({(output_range.lo - output_stats->mean[c]) / sd,
                 (output_range.hi - output_stats->mean[c]) / sd});
  }
  return b;
}

namespace {

void check_pipeline(const Pipeline& p) {
  require(p.conditioner != nullptr && p.denoiser != nullptr, ErrorCode::invalid_config,
          "pipeline needs a conditioner and a denoiser");
}

LatentOptions latent_options(const Pipeline& p, const SamplerConfig& cfg,
                             const std::vector<ValueRange>& bounds) {
  LatentOptions opt;
  opt.strategy = cfg.strategy;
  opt.exit_point = cfg.exit_point;
  opt.x0_bounds = cfg.clip_x0 ? &bounds : nullptr;
  opt.batch = p.batch;
  return opt;
}

}  // namespace

ChainResult run_chain(const BridgeSchedule& s, const Pipeline& p, const ImageTensor& y0,
                      const SamplerConfig& cfg, int tile) {
  check_pipeline(p);
  validate(cfg, s.T);
  const ImageTensor y = p.conditioner->apply(y0);
  const std::vector<ValueRange> bounds = p.x0_bounds();
  const ChainJob job{&y, cfg.seed, tile};
  auto res = run_latent_chains(s, *p.denoiser, {&job, 1}, latent_options(p, cfg, bounds));
  return {p.finish(res.front().x0), res.front().evaluations};
}

namespace {

ImageTensor pixel_mean(const std::vector<ImageTensor>& runs) {
  ImageTensor avg = runs.front();
  for (std::size_t r = 1; r < runs.size(); ++r) axpy(1.0, runs[r], avg);
  const double inv = 1.0 / static_cast<double>(runs.size());
  for (double& v : avg.data()) v *= inv;
  return avg;
}

}  // namespace

AveragedResult run_averaged(const BridgeSchedule& s, const Pipeline& p, const ImageTensor& y0,
                            const SamplerConfig& cfg, std::span<const std::uint64_t> seeds,
                            int tile) {
  check_pipeline(p);
  validate(cfg, s.T);
  require(!seeds.empty(), ErrorCode::invalid_config, "averaging needs at least one seed");
  require(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == seeds.size(),
          ErrorCode::invalid_config, "averaging seeds must be distinct");
  const ImageTensor y = p.conditioner->apply(y0);
  const std::vector<ValueRange> bounds = p.x0_bounds();
  std::vector<ChainJob> jobs;
  for (std::uint64_t sd : seeds) jobs.push_back({&y, sd, tile});
  auto res = run_latent_chains(s, *p.denoiser, jobs, latent_options(p, cfg, bounds));
  AveragedResult out;
  for (auto& r : res) {
    out.runs.push_back(p.finish(r.x0));
    out.evaluations += r.evaluations;
  }
  out.average = pixel_mean(out.runs);
  return out;
}

std::uint64_t chain_seed(std::uint64_t root, int tile, int run) {
  return stream_key(root, static_cast<std::uint64_t>(tile) + 1,
                    static_cast<std::uint64_t>(run));
}

std::vector<AveragedResult> sample_tiles(const BridgeSchedule& s, const Pipeline& p,
                                         std::span<const ImageTensor> y0,
                                         std::span<const int> tile_ids,
                                         const SamplerConfig& cfg) {
  check_pipeline(p);
  validate(cfg, s.T);
  require(y0.size() == tile_ids.size(), ErrorCode::invalid_input,
          "one tile id per input required");
  std::vector<ImageTensor> ys(y0.size());
  parallel_for(y0.size(), [&](std::size_t i) { ys[i] = p.conditioner->apply(y0[i]); });
  const std::vector<ValueRange> bounds = p.x0_bounds();
  const int n = cfg.averaging;
  std::vector<ChainJob> jobs;
  jobs.reserve(y0.size() * static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < y0.size(); ++i) {
    for (int r = 0; r < n; ++r) jobs.push_back({&ys[i], chain_seed(cfg.seed, tile_ids[i], r), tile_ids[i]});
  }
  auto res = run_latent_chains(s, *p.denoiser, jobs, latent_options(p, cfg, bounds));
  std::vector<AveragedResult> out(y0.size());
  for (std::size_t i = 0; i < y0.size(); ++i) {
    for (int r = 0; r < n; ++r) {
      auto& lr = res[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(r)];
      out[i].runs.push_back(p.finish(lr.x0));
      out[i].evaluations += lr.evaluations;
    }
    out[i].average = pixel_mean(out[i].runs);
  }
  return out;
}

ExitSweep exit_sweep(const BridgeSchedule& s, const Pipeline& p, std::span<const ImageTensor> y0,
                     std::span<const int> tile_ids, std::span<const std::uint64_t> seeds,
                     std::span<const int> grid, bool clip_x0) {
  check_pipeline(p);
  require(y0.size() == tile_ids.size() && y0.size() == seeds.size(), ErrorCode::invalid_input,
          "exit sweep needs one tile id and seed per input");
  require(!grid.empty(), ErrorCode::invalid_config, "exit grid is empty");
  for (int t_e : grid) {
    require(t_e >= 1 && t_e <= s.T, ErrorCode::invalid_config,
            "exit point " + std::to_string(t_e) + " outside [1, " + std::to_string(s.T) + "]");
  }
  std::vector<ImageTensor> ys(y0.size());
  parallel_for(y0.size(), [&](std::size_t i) { ys[i] = p.conditioner->apply(y0[i]); });
  const std::vector<ValueRange> bounds = p.x0_bounds();
  const std::vector<ValueRange>* bptr = clip_x0 ? &bounds : nullptr;
  std::vector<ChainJob> jobs;
  for (std::size_t i = 0; i < y0.size(); ++i) jobs.push_back({&ys[i], seeds[i], tile_ids[i]});

  ExitSweep out;
  out.grid.assign(grid.begin(), grid.end());
  out.vanilla.resize(jobs.size());
  out.mean.assign(grid.size(), std::vector<ImageTensor>(jobs.size()));
  out.skip.assign(grid.size(), std::vector<ImageTensor>(jobs.size()));
  std::vector<std::int64_t> evals(group_count(jobs.size(), p.batch), 0);
  const std::span<const ChainJob> all(jobs);
  parallel_for(evals.size(), [&](std::size_t g) {
    const auto slice = group_slice(all, g, p.batch);
    const std::size_t base = g * static_cast<std::size_t>(std::max(p.batch, 1));
    ChainGroup main(slice, bptr);
    std::vector<std::vector<ImageTensor>> snapshots(grid.size());
    for (int t = s.T; t >= 1; --t) {
      for (std::size_t k = 0; k < grid.size(); ++k) {
        if (grid[k] == t) snapshots[k] = main.x;
      }
      main.step(s, *p.denoiser, t, true);
    }
    std::int64_t total = main.evaluations;
    for (std::size_t i = 0; i < slice.size(); ++i) out.vanilla[base + i] = p.finish(main.x[i]);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      ChainGroup mean_grp(slice, bptr);
      mean_grp.x = snapshots[k];
      for (int t = grid[k]; t >= 1; --t) mean_grp.step(s, *p.denoiser, t, false);
      ChainGroup skip_grp(slice, bptr);
      skip_grp.x = std::move(snapshots[k]);
      skip_grp.exit_at(*p.denoiser, grid[k]);
      total += mean_grp.evaluations + skip_grp.evaluations;
      for (std::size_t i = 0; i < slice.size(); ++i) {
        out.mean[k][base + i] = p.finish(mean_grp.x[i]);
        out.skip[k][base + i] = p.finish(skip_grp.x[i]);
      }
    }
    evals[g] = total * static_cast<std::int64_t>(slice.size());
  });
  for (auto e : evals) out.evaluations += e;
  return out;
}

}  // namespace bridgestain
