#include "bridgestain/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "bridgestain/error.hpp"
#include "bridgestain/parallel.hpp"
#include "bridgestain/rng.hpp"
#include "bridgestain/tensor_io.hpp"
#include "json_io.hpp"

namespace bridgestain {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> gaussian_kernel(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  return k;
}

// Separable Gaussian blur with periodic boundaries on a size x size field.
std::vector<double> blur(const std::vector<double>& f, int n, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  auto wrap = [n](int i) { return ((i % n) + n) % n; };
  std::vector<double> tmp(f.size()), out(f.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int d = -r; d <= r; ++d) acc += k[d + r] * f[i * n + wrap(j + d)];
      tmp[i * n + j] = acc;
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int d = -r; d <= r; ++d) acc += k[d + r] * tmp[wrap(i + d) * n + j];
      out[i * n + j] = acc;
    }
  }
  return out;
}

void standardize(std::vector<double>& f) {
  double mean = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());
  double var = 0.0;
  for (double v : f) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(f.size()));
  for (double& v : f) v = (v - mean) / std::max(sd, 1e-12);
}

ImageTensor field_image(int n, const std::vector<double>& f) {
  return ImageTensor(n, n, 1, f, Semantics::normalized_latent, kUnitRange);
}

// Optical-density stain vectors for hematoxylin and eosin.
constexpr double kHem[3] = {0.650, 0.704, 0.286};
constexpr double kEos[3] = {0.072, 0.990, 0.105};

struct AfMix {
  double nuc, stroma, cyto, stroma_cyto, nuc_cyto, bias, gamma;
};

constexpr AfMix kAfMixes[kMaxAfChannels] = {
    {0.80, 0.10, 0.00, 0.00, 0.00, 0.05, 0.7},   // nuclear dye-like
    {0.15, 0.60, 0.20, 0.00, 0.00, 0.02, 1.4},   // fibre-rich
    {0.00, 0.00, 0.30, 0.50, 0.00, 0.10, 0.8},   // cytoplasm x fibre
    {0.00, -0.30, 0.00, 0.00, 0.40, 0.40, 1.2},  // nuclei in dense cytoplasm
};

}  // namespace

SceneFields generate_scene(std::uint64_t seed, int size) {
  require(size >= 4, ErrorCode::invalid_input, "scene size must be >= 4");
  RngStream rng(stream_key(seed, stream_tag::synth));
  const int n = size;
  const std::size_t P = static_cast<std::size_t>(n) * n;

  std::vector<double> white(P);
  for (double& v : white) v = rng.normal();
  std::vector<double> fine = blur(white, n, 1.2);
  const std::vector<double> coarse = blur(white, n, 3.5);
  for (std::size_t k = 0; k < P; ++k) fine[k] -= coarse[k];
  standardize(fine);
  std::vector<double> stroma(P);
  for (std::size_t k = 0; k < P; ++k) stroma[k] = logistic(1.6 * fine[k] + 0.3);

  std::vector<double> white2(P);
  for (double& v : white2) v = rng.normal();
  std::vector<double> smooth = blur(white2, n, 4.0);
  standardize(smooth);
  std::vector<double> cyto(P);
  for (std::size_t k = 0; k < P; ++k) cyto[k] = logistic(1.5 * smooth[k]);

  std::vector<double> nuc(P, 0.0);
  const int count = 2 + rng.uniform_int(0, std::max(1, static_cast<int>(P / 128)));
  for (int e = 0; e < count; ++e) {
    const double ci = rng.uniform() * n, cj = rng.uniform() * n;
    const double a = 1.5 + 2.0 * rng.uniform();
    const double b = 1.2 + (a - 1.2) * rng.uniform();
    const double th = std::numbers::pi * rng.uniform();
    const double ct = std::cos(th), st = std::sin(th);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double di = i + 0.5 - ci, dj = j + 0.5 - cj;
        const double u = (ct * dj + st * di) / a, v = (-st * dj + ct * di) / b;
        const double m = logistic(6.0 * (1.0 - std::sqrt(u * u + v * v)));
        double& cell = nuc[static_cast<std::size_t>(i) * n + j];
        cell = std::max(cell, m);
      }
    }
  }
  return {field_image(n, nuc), field_image(n, stroma), field_image(n, cyto)};
}

ImageTensor render_target(const SceneFields& scene) {
  const int n = scene.nuclei.height();
  ImageTensor out(n, scene.nuclei.width(), 3, Semantics::rgb, kUnitRange);
  const auto nuc = scene.nuclei.data();
  const auto str = scene.stroma.data();
  const auto cyt = scene.cyto.data();
  auto o = out.data();
  for (std::size_t p = 0; p < nuc.size(); ++p) {
    const double od_h = 1.6 * nuc[p];
    const double od_e = 1.2 * str[p] * (0.35 + 0.65 * cyt[p]) * (1.0 - 0.7 * nuc[p]);
    for (int c = 0; c < 3; ++c) {
      o[p * 3 + c] = std::clamp(std::exp(-(od_h * kHem[c] + od_e * kEos[c])), 0.0, 1.0);
    }
  }
  return out;
}

ImageTensor render_autofluorescence(const SceneFields& scene, int channels) {
  require(channels >= 1 && channels <= kMaxAfChannels, ErrorCode::invalid_input,
          "pseudo-AF channel count must be in [1, 4]");
  const int n = scene.nuclei.height();
  ImageTensor out(n, scene.nuclei.width(), channels, Semantics::af_stack, kUnitRange);
  const auto nuc = scene.nuclei.data();
  const auto str = scene.stroma.data();
  const auto cyt = scene.cyto.data();
  auto o = out.data();
  for (std::size_t p = 0; p < nuc.size(); ++p) {
    for (int c = 0; c < channels; ++c) {
      const AfMix& m = kAfMixes[c];
      const double lin = m.nuc * nuc[p] + m.stroma * str[p] + m.cyto * cyt[p] +
                         m.stroma_cyto * str[p] * cyt[p] + m.nuc_cyto * nuc[p] * cyt[p] + m.bias;
      o[p * static_cast<std::size_t>(channels) + c] = std::pow(std::clamp(lin, 0.0, 1.0), m.gamma);
    }
  }
  return out;
}

std::string sample_id(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(seed));
  return buf;
}

PairedSample generate_pair(std::uint64_t seed, int size, int factor, int channels) {
  require(factor >= 1 && size % factor == 0, ErrorCode::invalid_input,
          "tile size " + std::to_string(size) + " is not divisible by factor " +
              std::to_string(factor));
  require(channels >= 2 && channels <= kMaxAfChannels, ErrorCode::invalid_input,
          "AF channel count must be in [2, 4]");
  const SceneFields scene = generate_scene(seed, size);
  PairedSample s;
  s.id = sample_id(seed);
  s.seed = seed;
  s.factor = factor;
  s.target = render_target(scene);
  s.input = bin_pixels(render_autofluorescence(scene, channels), factor);
  return s;
}

void validate(const DatasetConfig& cfg) {
  require(cfg.train_count >= 1 && cfg.test_count >= 1, ErrorCode::invalid_config,
          "train_count and test_count must be >= 1");
  require(cfg.factor >= 1 && cfg.size % cfg.factor == 0, ErrorCode::invalid_input,
          "tile size " + std::to_string(cfg.size) + " is not divisible by factor " +
              std::to_string(cfg.factor));
  require(cfg.channels >= 2 && cfg.channels <= kMaxAfChannels, ErrorCode::invalid_config,
          "AF channel count must be in [2, 4]");
  const std::uint64_t a0 = cfg.train_seed, a1 = a0 + static_cast<std::uint64_t>(cfg.train_count);
  const std::uint64_t b0 = cfg.test_seed, b1 = b0 + static_cast<std::uint64_t>(cfg.test_count);
  require(a1 <= b0 || b1 <= a0, ErrorCode::invalid_config,
          "train and test seed ranges overlap");
}

const SplitInfo& DatasetManifest::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "test") return test;
  fail(ErrorCode::invalid_config, "unknown split '" + name + "'");
}

std::filesystem::path target_path(const std::filesystem::path& dir, const std::string& split,
                                  const std::string& id) {
  return dir / split / (id + "_target.btns");
}

std::filesystem::path input_path(const std::filesystem::path& dir, const std::string& split,
                                 const std::string& id) {
  return dir / split / (id + "_input.btns");
}

namespace {

json split_json(const SplitInfo& s) {
  return json{{"seed_start", s.seed_start}, {"ids", s.ids}, {"seeds", s.seeds}};
}

SplitInfo split_from(const json& j) {
  SplitInfo s;
  s.seed_start = j.at("seed_start").get<std::uint64_t>();
  s.ids = j.at("ids").get<std::vector<std::string>>();
  s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  require(s.ids.size() == s.seeds.size(), ErrorCode::invalid_config,
          "manifest split ids/seeds length mismatch");
  return s;
}

}  // namespace

void save_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
  const json j{{"format_version", m.format_version},
               {"generator", {{"size", m.size}, {"factor", m.factor}, {"channels", m.channels}}},
               {"splits", {{"train", split_json(m.train)}, {"test", split_json(m.test)}}},
               {"stats",
                {{"target", to_json_value(m.target_stats)},
                 {"input", to_json_value(m.input_stats)}}}};
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  require(static_cast<bool>(os), ErrorCode::io, "cannot write manifest in " + dir.string());
  os << j.dump(2) << '\n';
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::not_found, "no dataset manifest at " + path.string());
  DatasetManifest m;
  try {
    const json j = json::parse(is);
    m.format_version = j.at("format_version").get<int>();
    const json& g = j.at("generator");
    m.size = g.at("size").get<int>();
    m.factor = g.at("factor").get<int>();
    m.channels = g.at("channels").get<int>();
    m.train = split_from(j.at("splits").at("train"));
    m.test = split_from(j.at("splits").at("test"));
    m.target_stats = stats_from(j.at("stats").at("target"));
    m.input_stats = stats_from(j.at("stats").at("input"));
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_config, "malformed manifest " + path.string() + ": " + e.what());
  }
  require(m.format_version == kDatasetFormatVersion, ErrorCode::invalid_config,
          "unsupported dataset format version " + std::to_string(m.format_version));
  return m;
}

DatasetManifest build_dataset(const DatasetConfig& cfg) {
  validate(cfg);
  DatasetManifest m;
  m.size = cfg.size;
  m.factor = cfg.factor;
  m.channels = cfg.channels;
  auto make_split = [](std::uint64_t start, int count) {
    SplitInfo s;
    s.seed_start = start;
    for (int k = 0; k < count; ++k) {
      s.seeds.push_back(start + static_cast<std::uint64_t>(k));
      s.ids.push_back(sample_id(s.seeds.back()));
    }
    return s;
  };
  m.train = make_split(cfg.train_seed, cfg.train_count);
  m.test = make_split(cfg.test_seed, cfg.test_count);

  std::filesystem::create_directories(cfg.dir / "train");
  std::filesystem::create_directories(cfg.dir / "test");
  std::vector<ImageTensor> train_targets, train_inputs;
  for (const char* name : {"train", "test"}) {
    const SplitInfo& split = m.split(name);
    std::vector<PairedSample> samples(split.seeds.size());
    parallel_for(samples.size(), [&](std::size_t k) {
      samples[k] = generate_pair(split.seeds[k], cfg.size, cfg.factor, cfg.channels);
    });
    for (const auto& s : samples) {
      save_tensor(target_path(cfg.dir, name, s.id), s.target);
      save_tensor(input_path(cfg.dir, name, s.id), s.input);
    }
    if (std::string(name) == "train") {
      // Statistics are taken from the stored (single precision) tensors so a
      // recomputation from disk reproduces them.
      for (const auto& s : samples) {
        train_targets.push_back(load_tensor(target_path(cfg.dir, name, s.id)));
        train_inputs.push_back(load_tensor(input_path(cfg.dir, name, s.id)));
      }
    }
  }
  m.target_stats = compute_stats(train_targets);
  m.input_stats = compute_stats(train_inputs);
  save_manifest(cfg.dir, m);
  return m;
}

std::vector<std::string> validate_dataset(const std::filesystem::path& dir,
                                          const DatasetManifest& m) {
  std::vector<std::string> missing;
  for (const char* name : {"train", "test"}) {
    for (const auto& id : m.split(name).ids) {
      if (!std::filesystem::exists(target_path(dir, name, id)) ||
          !std::filesystem::exists(input_path(dir, name, id))) {
        missing.push_back(std::string(name) + "/" + id);
      }
    }
  }
  return missing;
}

std::vector<PairedSample> load_split(const std::filesystem::path& dir, const DatasetManifest& m,
                                     const std::string& split, int limit) {
  const SplitInfo& s = m.split(split);
  std::size_t n = s.ids.size();
  if (limit > 0) n = std::min(n, static_cast<std::size_t>(limit));
  std::vector<PairedSample> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k].id = s.ids[k];
    out[k].seed = s.seeds[k];
    out[k].factor = m.factor;
    out[k].target = load_tensor(target_path(dir, split, s.ids[k]));
    out[k].input = load_tensor(input_path(dir, split, s.ids[k]));
  }
  return out;
}

}  // namespace bridgestain
