#include "bridgestain/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>

#include "bridgestain/checkpoint.hpp"
#include "bridgestain/denoiser.hpp"
#include "bridgestain/error.hpp"
#include "bridgestain/evaluation.hpp"
#include "bridgestain/parallel.hpp"
#include "bridgestain/sampling.hpp"
#include "bridgestain/schedule.hpp"
#include "bridgestain/synthdata.hpp"
#include "bridgestain/tensor_io.hpp"
#include "bridgestain/training.hpp"
#include "json_io.hpp"

namespace bridgestain {

namespace fs = std::filesystem;

namespace {

// Typed access to a command's JSON config. Every key read is echoed, with its
// default filled in, into the resolved config.
class Params {
 public:
  explicit Params(json in) : in_(std::move(in)) {
    require(in_.is_object(), ErrorCode::invalid_config, "command config must be a JSON object");
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    T v = std::move(fallback);
    if (in_.contains(key) && !in_.at(key).is_null()) v = convert<T>(key);
    used_.insert(key);
    out_[key] = v;
    return v;
  }

  template <typename T>
  T required(const std::string& key) {
    require(in_.contains(key) && !in_.at(key).is_null(), ErrorCode::invalid_config,
            "missing required config key '" + key + "'");
    T v = convert<T>(key);
    used_.insert(key);
    out_[key] = v;
    return v;
  }

  std::optional<std::string> optional_string(const std::string& key) {
    used_.insert(key);
    if (!in_.contains(key) || in_.at(key).is_null()) {
      out_[key] = nullptr;
      return std::nullopt;
    }
    auto v = convert<std::string>(key);
    out_[key] = v;
    return v;
  }

  json object(const std::string& key) {
    used_.insert(key);
    json v = in_.contains(key) ? in_.at(key) : json::object();
    require(v.is_object(), ErrorCode::invalid_config, "'" + key + "' must be an object");
    return v;
  }

  void set_resolved(const std::string& key, json v) { out_[key] = std::move(v); }

  void finish() const {
    for (const auto& [key, value] : in_.items()) {
      require(used_.count(key) > 0, ErrorCode::invalid_config, "unknown config key '" + key + "'");
    }
  }

  const json& resolved() const { return out_; }

 private:
  template <typename T>
  T convert(const std::string& key) const {
    try {
      return in_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::invalid_config, "config key '" + key + "': " + e.what());
    }
  }

  json in_;
  json out_ = json::object();
  std::set<std::string> used_;
};

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header) : os_(path, std::ios::binary) {
    require(os_.good(), ErrorCode::io, "cannot write " + path.string());
    row(header);
  }
  void row(const std::vector<std::string>& fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) os_ << (k ? "," : "") << csv_field(fields[k]);
    os_ << "\r\n";
  }

 private:
  std::ofstream os_;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorCode::io, "cannot write " + path.string());
  os << j.dump(2) << "\n";
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::io, "cannot create output directory " + dir + ": " + ec.message());
  return dir;
}

void finish_config(const Params& p, const std::string& command, const fs::path& out) {
  p.finish();
  json j = p.resolved();
  j["command"] = command;
  write_json(out / "resolved_config.json", j);
}

class Stopwatch {
 public:
  explicit Stopwatch(bool on) : on_(on), start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    if (!on_) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  bool on_;
  std::chrono::steady_clock::time_point start_;
};

// A trained model ready for sampling.
struct Model {
  Checkpoint ckpt;
  BridgeSchedule schedule;
  std::unique_ptr<NetworkModel<float>> net_f;
  std::unique_ptr<NetworkModel<double>> net_d;
  std::unique_ptr<Denoiser> denoiser;
  std::unique_ptr<Conditioner> conditioner;
  Pipeline pipeline;
};

std::unique_ptr<Model> load_model(const std::string& path, const std::string& precision, int batch) {
  require(precision == "float" || precision == "double", ErrorCode::invalid_config,
          "precision must be 'float' or 'double'");
  require(batch >= 1, ErrorCode::invalid_config, "batch must be >= 1");
  auto m = std::make_unique<Model>();
  m->ckpt = load_checkpoint(path);
  m->schedule = build_schedule(m->ckpt.spec.T);
  if (precision == "float") {
    m->net_f = NetworkModel<float>::from_checkpoint(m->ckpt);
    m->denoiser = std::make_unique<NetworkDenoiser<float>>(*m->net_f);
    m->conditioner = std::make_unique<NetworkConditioner<float>>(*m->net_f);
  } else {
    m->net_d = NetworkModel<double>::from_checkpoint(m->ckpt);
    m->denoiser = std::make_unique<NetworkDenoiser<double>>(*m->net_d);
    m->conditioner = std::make_unique<NetworkConditioner<double>>(*m->net_d);
  }
  m->pipeline.conditioner = m->conditioner.get();
  m->pipeline.denoiser = m->denoiser.get();
  m->pipeline.output_stats = &m->ckpt.target_stats;
  m->pipeline.batch = batch;
  return m;
}

void check_compatible(const Checkpoint& ck, const DatasetManifest& m) {
  require(ck.spec.conditioner.factor == m.factor && ck.spec.conditioner.in_channels == m.channels,
          ErrorCode::incompatible_checkpoint,
          "checkpoint expects factor " + std::to_string(ck.spec.conditioner.factor) + " with " +
              std::to_string(ck.spec.conditioner.in_channels) + " input channels, dataset has factor " +
              std::to_string(m.factor) + " with " + std::to_string(m.channels));
}

struct Split {
  DatasetManifest manifest;
  std::vector<PairedSample> samples;
};

Split load_data(const std::string& dir, const std::string& split, int limit) {
  require(split == "train" || split == "test", ErrorCode::invalid_config,
          "split must be 'train' or 'test'");
  require(limit >= 0, ErrorCode::invalid_config, "limit must be >= 0");
  Split s;
  s.manifest = load_manifest(dir);
  s.samples = load_split(dir, s.manifest, split, limit);
  return s;
}

void save_image(const fs::path& stem, const ImageTensor& img) {
  save_tensor(fs::path(stem.string() + ".btns"), img);
  save_png(fs::path(stem.string() + ".png"), img);
}

// Primary output tensors ({id}.btns) of a sample directory, sorted by id.
std::vector<std::string> output_ids(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::not_found, "no such directory " + dir.string());
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".btns") continue;
    const std::string stem = e.path().stem().string();
    if (stem.find("_run") != std::string::npos || stem.find("_cv") != std::string::npos) continue;
    ids.push_back(stem);
  }
  std::sort(ids.begin(), ids.end());
  require(!ids.empty(), ErrorCode::empty_result, "no output tensors in " + dir.string());
  return ids;
}

const PairedSample& sample_by_id(const std::map<std::string, const PairedSample*>& index,
                                 const std::string& id) {
  auto it = index.find(id);
  require(it != index.end(), ErrorCode::invalid_input,
          "image id " + id + " is not in the dataset split");
  return *it->second;
}

std::map<std::string, const PairedSample*> index_samples(const std::vector<PairedSample>& v) {
  std::map<std::string, const PairedSample*> out;
  for (const auto& s : v) out[s.id] = &s;
  return out;
}

SamplerConfig sampler_from(Params& p) {
  SamplerConfig c;
  c.strategy = parse_strategy(p.get<std::string>("strategy", "mean"));
  c.exit_point = p.get<int>("exit", c.exit_point);
  c.averaging = p.get<int>("avg", c.averaging);
  c.seed = p.get<std::uint64_t>("seed", 0);
  c.clip_x0 = p.get<bool>("clip_x0", false);
  return c;
}

// ---------------------------------------------------------------- gen-data

json cmd_gen_data(Params& p) {
  DatasetConfig c;
  const auto out = prepare_out(p.required<std::string>("out"));
  c.dir = out;
  c.size = p.get<int>("size", c.size);
  c.factor = p.get<int>("factor", c.factor);
  c.channels = p.get<int>("channels", c.channels);
  c.train_count = p.get<int>("train_count", c.train_count);
  c.test_count = p.get<int>("test_count", c.test_count);
  c.train_seed = p.get<std::uint64_t>("train_seed", c.train_seed);
  c.test_seed = p.get<std::uint64_t>("test_seed", c.test_seed);
  finish_config(p, "gen-data", out);
  validate(c);
  const DatasetManifest m = build_dataset(c);
  const auto missing = validate_dataset(out, m);
  require(missing.empty(), ErrorCode::io, "dataset incomplete after generation");
  return {{"out", out.string()},
          {"train", m.train.ids.size()},
          {"test", m.test.ids.size()},
          {"target_stats", to_json_value(m.target_stats)},
          {"input_stats", to_json_value(m.input_stats)}};
}

// ------------------------------------------------------------------- train

json cmd_train(Params& p) {
  const std::string data_dir = p.required<std::string>("data");
  const auto out = prepare_out(p.required<std::string>("out"));
  TrainingConfig tc;
  tc.max_steps = p.get<int>("steps", tc.max_steps);
  tc.batch_size = p.get<int>("batch_size", tc.batch_size);
  tc.learning_rate = p.get<double>("lr", tc.learning_rate);
  tc.seed = p.get<std::uint64_t>("seed", tc.seed);
  tc.weight_decay = p.get<double>("weight_decay", tc.weight_decay);
  tc.clip_norm = p.get<double>("clip_norm", tc.clip_norm);
  tc.cosine_decay = p.get<bool>("cosine_decay", tc.cosine_decay);
  tc.augment = p.get<bool>("augment", tc.augment);
  tc.init_from = p.optional_string("init_from");
  const std::string precision = p.get<std::string>("precision", "float");
  const bool timing = p.get<bool>("timing", true);
  const int checkpoint_every = p.get<int>("checkpoint_every", 0);
  const json unet_j = p.object("unet");
  const int hidden = p.get<int>("hidden", nn::ConditionerConfig{}.hidden);
  const int T = p.get<int>("T", 1000);
  require(precision == "float" || precision == "double", ErrorCode::invalid_config,
          "precision must be 'float' or 'double'");
  require(checkpoint_every >= 0, ErrorCode::invalid_config, "checkpoint_every must be >= 0");

  const Split data = load_data(data_dir, "train", 0);
  ModelSpec spec;
  if (tc.init_from) {
    spec = load_checkpoint(*tc.init_from).spec;
  } else {
    require(unet_j.is_object(), ErrorCode::invalid_config, "unet must be a JSON object");
    const json known = to_json_value(nn::UNetConfig{});
    for (const auto& item : unet_j.items())
      require(known.contains(item.key()), ErrorCode::invalid_config,
              "unknown config key 'unet." + item.key() + "'");
    spec.unet = unet_config_from(unet_j);
    spec.conditioner.hidden = hidden;
    spec.conditioner.in_channels = data.manifest.channels;
    spec.conditioner.factor = data.manifest.factor;
    spec.T = T;
  }
  p.set_resolved("model", to_json_value(spec));
  finish_config(p, "train", out);
  Checkpoint probe;
  probe.spec = spec;
  check_compatible(probe, data.manifest);

  const fs::path ckpt_path = out / "checkpoint.btck";
  TrainHooks hooks;
  hooks.timing = timing;
  hooks.checkpoint_every = checkpoint_every;
  hooks.on_checkpoint = [&](const Checkpoint& c) { save_checkpoint(ckpt_path, c); };
  const TrainResult r =
      precision == "float"
          ? train<float>(tc, spec, data.samples, data.manifest.target_stats,
                         data.manifest.input_stats, hooks)
          : train<double>(tc, spec, data.samples, data.manifest.target_stats,
                          data.manifest.input_stats, hooks);
  save_checkpoint(ckpt_path, r.checkpoint);
  {
    CsvWriter csv(out / "train_log.csv", {"step", "loss", "lr", "wall_ms"});
    for (const auto& row : r.log) {
      csv.row({std::to_string(row.step), num(row.loss), num(row.lr), num(row.wall_ms)});
    }
  }
  json res{{"checkpoint", ckpt_path.string()}, {"step", r.checkpoint.step}, {"steps_run", r.log.size()}};
  if (!r.log.empty()) {
    const int window = std::max<int>(1, std::min<int>(100, static_cast<int>(r.log.size()) / 10));
    const auto [first, last] = smoothed_loss_ends(r.log, window);
    res["smoothed_loss_first"] = first;
    res["smoothed_loss_last"] = last;
  }
  return res;
}

// ------------------------------------------------------------------ sample

json cmd_sample(Params& p) {
  const std::string ckpt_path = p.required<std::string>("checkpoint");
  const std::string data_dir = p.required<std::string>("data");
  const std::string split = p.get<std::string>("split", "test");
  const int limit = p.get<int>("limit", 0);
  const auto out = prepare_out(p.required<std::string>("out"));
  const SamplerConfig cfg = sampler_from(p);
  const bool timing = p.get<bool>("timing", true);
  const int batch = p.get<int>("batch", 8);
  const std::string precision = p.get<std::string>("precision", "float");
  finish_config(p, "sample", out);

  const auto model = load_model(ckpt_path, precision, batch);
  validate(cfg, model->ckpt.spec.T);
  const Split data = load_data(data_dir, split, limit);
  check_compatible(model->ckpt, data.manifest);
  require(!data.samples.empty(), ErrorCode::empty_result, "no samples to run");

  std::vector<ImageTensor> y0;
  std::vector<int> tiles;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    y0.push_back(data.samples[i].input);
    tiles.push_back(static_cast<int>(i));
  }
  const Stopwatch clock(timing);
  const auto results = sample_tiles(model->schedule, model->pipeline, y0, tiles, cfg);
  const double per_tile_ms = clock.ms() / static_cast<double>(results.size());

  json manifest{{"strategy", to_string(cfg.strategy)},
                {"exit", cfg.exit_point},
                {"avg", cfg.averaging},
                {"seed", cfg.seed},
                {"T", model->ckpt.spec.T},
                {"evaluations_per_chain", evaluations_per_chain(cfg, model->ckpt.spec.T)}};
  json tiles_j = json::array();
  std::int64_t total = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const std::string& id = data.samples[i].id;
    save_image(out / id, results[i].average);
    if (cfg.averaging > 1) {
      for (std::size_t r = 0; r < results[i].runs.size(); ++r) {
        save_image(out / (id + "_run" + std::to_string(r)), results[i].runs[r]);
      }
    }
    total += results[i].evaluations;
    json seeds = json::array();
    for (int r = 0; r < cfg.averaging; ++r) seeds.push_back(chain_seed(cfg.seed, static_cast<int>(i), r));
    tiles_j.push_back({{"id", id},
                       {"seeds", seeds},
                       {"evaluations", results[i].evaluations},
                       {"wall_ms", per_tile_ms}});
  }
  manifest["tiles"] = tiles_j;
  manifest["total_evaluations"] = total;
  write_json(out / "manifest.json", manifest);
  return {{"out", out.string()},
          {"tiles", results.size()},
          {"evaluations_per_chain", manifest["evaluations_per_chain"]},
          {"total_evaluations", total},
          {"wall_ms_per_tile", per_tile_ms}};
}

// -------------------------------------------------------------------- eval

struct Metrics {
  double ssim = 0, psnr_db = 0, mse = 0, perceptual = 0;
};

std::vector<Metrics> score(const std::vector<ImageTensor>& outputs,
                           const std::vector<ImageTensor>& truths, const FeatureExtractor& fx) {
  std::vector<Metrics> m(outputs.size());
  parallel_for(outputs.size(), [&](std::size_t i) {
    const auto mp = mse_psnr(truths[i], outputs[i]);
    m[i] = {ssim(truths[i], outputs[i]), mp.psnr_db, mp.mse,
            perceptual_distance(outputs[i], truths[i], fx)};
  });
  return m;
}

void write_metrics(const fs::path& path, const std::vector<std::string>& ids,
                   const std::vector<Metrics>& m) {
  CsvWriter csv(path, {"image_id", "ssim", "psnr_db", "mse", "perceptual"});
  std::vector<double> cols[4];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    csv.row({ids[i], num(m[i].ssim), num(m[i].psnr_db), num(m[i].mse), num(m[i].perceptual)});
    cols[0].push_back(m[i].ssim);
    cols[1].push_back(m[i].psnr_db);
    cols[2].push_back(m[i].mse);
    cols[3].push_back(m[i].perceptual);
  }
  MeanSe agg[4];
  for (int k = 0; k < 4; ++k) agg[k] = mean_and_stderr(cols[k]);
  csv.row({"mean", num(agg[0].mean), num(agg[1].mean), num(agg[2].mean), num(agg[3].mean)});
  csv.row({"stderr", num(agg[0].stderr_), num(agg[1].stderr_), num(agg[2].stderr_),
           num(agg[3].stderr_)});
}

ImageTensor load_output(const fs::path& dir, const std::string& id) {
  const fs::path path = dir / (id + ".btns");
  require(fs::exists(path), ErrorCode::invalid_input, "image id " + id + " missing from " + dir.string());
  return load_tensor(path);
}

json cmd_eval(Params& p) {
  const fs::path pred = p.required<std::string>("pred");
  const auto reference = p.optional_string("reference");
  const auto data_dir = p.optional_string("data");
  const std::string split = p.get<std::string>("split", "test");
  const auto compare = p.optional_string("compare");
  const auto out = prepare_out(p.required<std::string>("out"));
  const std::uint64_t fx_seed = p.get<std::uint64_t>("perceptual_seed", 0);
  finish_config(p, "eval", out);
  require(reference || data_dir, ErrorCode::invalid_config, "eval needs 'data' or 'reference'");
  const bool bilinear = compare && *compare == "bilinear";
  require(!bilinear || data_dir, ErrorCode::invalid_config, "bilinear comparison needs 'data'");

  const auto ids = output_ids(pred);
  std::optional<Split> data;
  std::map<std::string, const PairedSample*> index;
  if (data_dir) {
    data = load_data(*data_dir, split, 0);
    index = index_samples(data->samples);
  }
  std::vector<ImageTensor> outputs, truths;
  for (const auto& id : ids) {
    outputs.push_back(load_output(pred, id));
    truths.push_back(reference ? load_output(*reference, id) : sample_by_id(index, id).target);
  }
  const RandomConvExtractor fx(fx_seed);
  const auto m = score(outputs, truths, fx);
  write_metrics(out / "metrics.csv", ids, m);
  json res{{"images", ids.size()}};
  std::vector<double> s;
  for (const auto& x : m) s.push_back(x.ssim);
  res["ssim_mean"] = mean_and_stderr(s).mean;
  if (!compare) return res;

  std::vector<ImageTensor> others;
  if (bilinear) {
    std::vector<ImageTensor> ins, tgs;
    for (const auto& t : load_split(*data_dir, data->manifest, "train")) {
      ins.push_back(t.input);
      tgs.push_back(t.target);
    }
    const auto fitted = AffineBaseline::fit(ins, tgs);
    for (const auto& id : ids) {
      const auto& smp = sample_by_id(index, id);
      others.push_back(fitted.predict(smp.input, smp.target.height(), smp.target.width()));
    }
  } else {
    const auto other_ids = output_ids(*compare);
    require(other_ids == ids, ErrorCode::invalid_input,
            "image ids differ between " + pred.string() + " and " + *compare);
    for (const auto& id : ids) others.push_back(load_output(*compare, id));
  }
  const auto mc = score(others, truths, fx);
  write_metrics(out / "compare_metrics.csv", ids, mc);
  CsvWriter csv(out / "ttest.csv", {"metric", "t_score", "p_value", "n", "mean_a", "mean_b"});
  const std::pair<const char*, double Metrics::*> fields[] = {
      {"ssim", &Metrics::ssim}, {"psnr_db", &Metrics::psnr_db},
      {"mse", &Metrics::mse}, {"perceptual", &Metrics::perceptual}};
  for (const auto& [name, field] : fields) {
    std::vector<double> a, b;
    for (std::size_t i = 0; i < m.size(); ++i) {
      a.push_back(m[i].*field);
      b.push_back(mc[i].*field);
    }
    const bool finite = std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); }) &&
                        std::all_of(b.begin(), b.end(), [](double v) { return std::isfinite(v); });
    if (!finite || a.size() < 2) continue;
    const auto t = paired_ttest(a, b);
    const double ma = mean_and_stderr(a).mean, mb = mean_and_stderr(b).mean;
    csv.row({name, num(t.t_score), num(t.p_value), std::to_string(t.n), num(ma), num(mb)});
    res[std::string(name)] = {{"t_score", t.t_score}, {"p_value", t.p_value}, {"mean_a", ma}, {"mean_b", mb}};
  }
  return res;
}

// ------------------------------------------------------------------- sweep

std::vector<int> grid_from(Params& p, std::vector<int> fallback) {
  auto g = p.get<std::vector<int>>("grid", std::move(fallback));
  require(!g.empty(), ErrorCode::invalid_config, "sweep grid is empty");
  return g;
}

double mean_of(const std::vector<double>& v) { return mean_and_stderr(v).mean; }

struct SweepRow {
  std::string strategy;
  int grid_value = 0;
  double ssim = 0, perceptual = 0;
  std::optional<double> mean_cv;
  double wall_ms = 0;
};

void write_sweep(const fs::path& path, const std::vector<SweepRow>& rows) {
  CsvWriter csv(path, {"strategy", "grid_value", "ssim", "perceptual", "mean_cv", "wall_ms"});
  for (const auto& r : rows) {
    csv.row({r.strategy, std::to_string(r.grid_value), num(r.ssim), num(r.perceptual),
             r.mean_cv ? num(*r.mean_cv) : "", num(r.wall_ms)});
  }
}

// Quality of a set of outputs[tile][rep] against the tiles' targets, with
// the CV across reps when there are at least two.
SweepRow summarize(const std::vector<std::vector<ImageTensor>>& outs,
                   const std::vector<PairedSample>& tiles, const FeatureExtractor& fx) {
  std::vector<double> s, d, cv;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    for (const auto& o : outs[i]) {
      s.push_back(ssim(tiles[i].target, o));
      d.push_back(perceptual_distance(o, tiles[i].target, fx));
    }
    if (outs[i].size() >= 2) cv.push_back(cv_map(outs[i]).overall);
  }
  SweepRow r;
  r.ssim = mean_of(s);
  r.perceptual = mean_of(d);
  if (!cv.empty()) r.mean_cv = mean_of(cv);
  return r;
}

json cmd_sweep(Params& p) {
  const std::string kind = p.get<std::string>("kind", "exit");
  require(kind == "exit" || kind == "averaging" || kind == "factor", ErrorCode::invalid_config,
          "sweep kind must be exit, averaging or factor");
  const auto out = prepare_out(p.required<std::string>("out"));
  const std::string split = p.get<std::string>("split", "test");
  const int limit = p.get<int>("limit", 0);
  const std::uint64_t seed = p.get<std::uint64_t>("seed", 0);
  const bool timing = p.get<bool>("timing", true);
  const int batch = p.get<int>("batch", 8);
  const bool clip = p.get<bool>("clip_x0", false);
  const std::string precision = p.get<std::string>("precision", "float");
  const RandomConvExtractor fx(p.get<std::uint64_t>("perceptual_seed", 0));
  std::vector<SweepRow> rows;

  if (kind == "factor") {
    const json runs = p.get<json>("runs", json::array());
    const int exit = p.get<int>("exit", 50);
    const int reps = p.get<int>("reps", 1);
    finish_config(p, "sweep", out);
    require(runs.is_array() && !runs.empty(), ErrorCode::invalid_config,
            "factor sweep needs a non-empty 'runs' list of {factor, checkpoint, data}");
    require(reps >= 1, ErrorCode::invalid_config, "reps must be >= 1");
    for (const auto& run : runs) {
      Params rp(run);
      const int factor = rp.required<int>("factor");
      const auto model = load_model(rp.required<std::string>("checkpoint"), precision, batch);
      const Split data = load_data(rp.required<std::string>("data"), split, limit);
      rp.finish();
      check_compatible(model->ckpt, data.manifest);
      require(data.manifest.factor == factor, ErrorCode::invalid_config,
              "run factor " + std::to_string(factor) + " does not match its dataset");
      std::vector<ImageTensor> y0;
      std::vector<int> ids;
      for (std::size_t i = 0; i < data.samples.size(); ++i) {
        y0.push_back(data.samples[i].input);
        ids.push_back(static_cast<int>(i));
      }
      SamplerConfig cfg;
      cfg.exit_point = exit;
      cfg.averaging = reps;
      cfg.seed = seed;
      cfg.clip_x0 = clip;
      const Stopwatch clock(timing);
      const auto res = sample_tiles(model->schedule, model->pipeline, y0, ids, cfg);
      const double ms = clock.ms();
      std::vector<std::vector<ImageTensor>> outs;
      for (const auto& r : res) outs.push_back(r.runs);
      SweepRow row = summarize(outs, data.samples, fx);
      row.strategy = "mean";
      row.grid_value = factor;
      row.wall_ms = ms / static_cast<double>(res.size() * static_cast<std::size_t>(reps));
      rows.push_back(row);
    }
    write_sweep(out / "sweep.csv", rows);
    return {{"out", out.string()}, {"rows", rows.size()}};
  }

  const std::string ckpt_path = p.required<std::string>("checkpoint");
  const std::string data_dir = p.required<std::string>("data");
  const bool averaging = kind == "averaging";
  const std::vector<int> grid =
      averaging ? grid_from(p, {1, 2, 3, 5})
                : grid_from(p, std::vector<int>(std::begin(kDefaultExitGrid), std::end(kDefaultExitGrid)));
  const int reps = p.get<int>("reps", averaging ? 5 : 1);
  const int exit = averaging ? p.get<int>("exit", 50) : 0;
  finish_config(p, "sweep", out);
  require(reps >= 1, ErrorCode::invalid_config, "reps must be >= 1");
  if (averaging) {
    require(reps >= 2, ErrorCode::invalid_config, "averaging sweep needs reps >= 2 for the CV");
    for (int n : grid) require(n >= 1, ErrorCode::invalid_config, "averaging factors must be >= 1");
  }

  const auto model = load_model(ckpt_path, precision, batch);
  const Split data = load_data(data_dir, split, limit);
  check_compatible(model->ckpt, data.manifest);
  require(!data.samples.empty(), ErrorCode::empty_result, "no samples to run");
  const int T = model->ckpt.spec.T;
  const int runs_per_rep = averaging ? *std::max_element(grid.begin(), grid.end()) : 1;
  const int chains = reps * runs_per_rep;

  std::vector<ImageTensor> y0;
  std::vector<int> ids;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    for (int c = 0; c < chains; ++c) {
      y0.push_back(data.samples[i].input);
      ids.push_back(static_cast<int>(i));
      seeds.push_back(chain_seed(seed, static_cast<int>(i), c));
    }
  }
  const std::vector<int> exit_grid = averaging ? std::vector<int>{exit} : grid;
  const Stopwatch clock(timing);
  const ExitSweep sw = exit_sweep(model->schedule, model->pipeline, y0, ids, seeds, exit_grid, clip);
  const double ms_per_eval = clock.ms() / static_cast<double>(sw.evaluations);
  const std::size_t tiles = data.samples.size();
  auto job = [&](std::size_t tile, int c) { return tile * static_cast<std::size_t>(chains) + c; };

  if (averaging) {
    for (const char* strategy : {"vanilla", "mean"}) {
      const std::vector<ImageTensor>& src = std::string(strategy) == "vanilla" ? sw.vanilla : sw.mean[0];
      for (int n : grid) {
        std::vector<std::vector<ImageTensor>> outs(tiles);
        for (std::size_t i = 0; i < tiles; ++i) {
          for (int r = 0; r < reps; ++r) {
            ImageTensor avg = src[job(i, r * runs_per_rep)];
            for (int k = 1; k < n; ++k) axpy(1.0, src[job(i, r * runs_per_rep + k)], avg);
            outs[i].push_back((1.0 / n) * avg);
          }
        }
        SweepRow row = summarize(outs, data.samples, fx);
        row.strategy = strategy;
        row.grid_value = n;
        row.wall_ms = ms_per_eval * static_cast<double>(T) * n;
        rows.push_back(row);
      }
    }
  } else {
    auto collect = [&](const std::vector<ImageTensor>& src) {
      std::vector<std::vector<ImageTensor>> outs(tiles);
      for (std::size_t i = 0; i < tiles; ++i) {
        for (int r = 0; r < reps; ++r) outs[i].push_back(src[job(i, r)]);
      }
      return outs;
    };
    SweepRow v = summarize(collect(sw.vanilla), data.samples, fx);
    v.strategy = "vanilla";
    v.grid_value = 0;
    v.wall_ms = ms_per_eval * T;
    rows.push_back(v);
    for (const char* strategy : {"mean", "skip"}) {
      const bool is_mean = std::string(strategy) == "mean";
      for (std::size_t k = 0; k < grid.size(); ++k) {
        SweepRow row = summarize(collect(is_mean ? sw.mean[k] : sw.skip[k]), data.samples, fx);
        row.strategy = strategy;
        row.grid_value = grid[k];
        SamplerConfig c;
        c.strategy = is_mean ? Strategy::mean : Strategy::skip;
        c.exit_point = grid[k];
        row.wall_ms = ms_per_eval * static_cast<double>(evaluations_per_chain(c, T));
        rows.push_back(row);
      }
    }
  }
  write_sweep(out / "sweep.csv", rows);
  return {{"out", out.string()}, {"rows", rows.size()}, {"evaluations", sw.evaluations}};
}

// ---------------------------------------------------------------- spectrum

json cmd_spectrum(Params& p) {
  const std::string data_dir = p.required<std::string>("data");
  const fs::path pred = p.required<std::string>("pred");
  const std::string split = p.get<std::string>("split", "test");
  const auto out = prepare_out(p.required<std::string>("out"));
  const int bins_cfg = p.get<int>("bins", 0);
  const int channel = p.get<int>("input_channel", 0);
  finish_config(p, "spectrum", out);

  const Split data = load_data(data_dir, split, 0);
  const auto index = index_samples(data.samples);
  const auto ids = output_ids(pred);
  require(channel >= 0 && channel < data.manifest.channels, ErrorCode::invalid_config,
          "input_channel outside the dataset's channels");
  const int size = data.manifest.size;
  const int bins = bins_cfg > 0 ? bins_cfg : size / 2 + 1;
  CsvWriter csv(out / "spectrum.csv", {"image_id", "bin", "frequency", "input", "output", "truth"});
  for (const auto& id : ids) {
    const PairedSample& s = sample_by_id(index, id);
    const ImageTensor output = load_output(pred, id);
    const ImageTensor up = resize_bilinear(select_channel(s.input, channel), size, size);
    const auto si = radial_power_spectrum(up, bins);
    const auto so = radial_power_spectrum(output, bins);
    const auto st = radial_power_spectrum(s.target, bins);
    for (int b = 0; b < bins; ++b) {
      csv.row({id, std::to_string(b), num(st.frequency[b]), num(si.power[b]), num(so.power[b]),
               num(st.power[b])});
    }
  }
  return {{"out", out.string()}, {"images", ids.size()}, {"bins", bins}};
}

// --------------------------------------------------------------- cv-report

json cmd_cv_report(Params& p) {
  const fs::path pred = p.required<std::string>("pred");
  const auto out = prepare_out(p.required<std::string>("out"));
  finish_config(p, "cv-report", out);
  const auto ids = output_ids(pred);
  CsvWriter csv(out / "cv.csv", {"image_id", "channel", "mean_cv", "guarded"});
  json res{{"images", 0}};
  std::vector<double> overall;
  for (const auto& id : ids) {
    std::vector<ImageTensor> runs;
    for (int r = 0;; ++r) {
      const fs::path f = pred / (id + "_run" + std::to_string(r) + ".btns");
      if (!fs::exists(f)) break;
      runs.push_back(load_tensor(f));
    }
    if (runs.empty()) continue;
    require(runs.size() >= 2, ErrorCode::invalid_input, id + " has a single run; CV needs two");
    const CvReport rep = cv_map(runs);
    save_tensor(out / (id + "_cv.btns"), rep.map);
    ImageTensor heat(rep.map.height(), rep.map.width(), 1, Semantics::rgb, kUnitRange);
    double peak = 0.0;
    for (std::size_t q = 0; q < heat.pixels(); ++q) {
      double v = 0.0;
      for (int c = 0; c < 3; ++c) v += rep.map.data()[q * 3 + c] / 3.0;
      heat.data()[q] = v;
      peak = std::max(peak, v);
    }
    if (peak > 0.0) heat = (1.0 / peak) * heat;
    save_png(out / (id + "_cv.png"), heat);
    const char* names[] = {"Y", "Cb", "Cr"};
    for (int c = 0; c < 3; ++c) {
      csv.row({id, names[c], num(rep.mean_cv[c]), std::to_string(rep.guarded)});
    }
    csv.row({id, "all", num(rep.overall), std::to_string(rep.guarded)});
    overall.push_back(rep.overall);
  }
  require(!overall.empty(), ErrorCode::empty_result, "no multi-run outputs in " + pred.string());
  res["images"] = overall.size();
  res["mean_cv"] = mean_of(overall);
  return res;
}

// ----------------------------------------------------------- schedule-dump

json cmd_schedule_dump(Params& p) {
  const int T = p.get<int>("T", 1000);
  const auto out = prepare_out(p.required<std::string>("out"));
  finish_config(p, "schedule-dump", out);
  const BridgeSchedule s = build_schedule(T);
  std::ofstream os(out / "schedule.csv", std::ios::binary);
  require(os.good(), ErrorCode::io, "cannot write schedule.csv");
  write_schedule_csv(os, s);
  return {{"out", out.string()}, {"T", T}};
}

using Handler = json (*)(Params&);

const std::vector<std::pair<std::string, Handler>>& handlers() {
  static const std::vector<std::pair<std::string, Handler>> h = {
      {"gen-data", cmd_gen_data},   {"train", cmd_train},
      {"sample", cmd_sample},       {"eval", cmd_eval},
      {"sweep", cmd_sweep},         {"spectrum", cmd_spectrum},
      {"cv-report", cmd_cv_report}, {"schedule-dump", cmd_schedule_dump}};
  return h;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : handlers()) n.push_back(name);
    return n;
  }();
  return names;
}

std::string run_command(std::string_view name, std::string_view config_json) {
  const auto& h = handlers();
  const auto it = std::find_if(h.begin(), h.end(), [&](const auto& e) { return e.first == name; });
  require(it != h.end(), ErrorCode::invalid_config, "unknown command '" + std::string(name) + "'");
  json cfg;
  try {
    cfg = config_json.empty() ? json::object() : json::parse(config_json);
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_config, std::string("config is not valid JSON: ") + e.what());
  }
  Params p(std::move(cfg));
  try {
    return it->second(p).dump();
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_config, e.what());
  }
}

}  // namespace bridgestain
