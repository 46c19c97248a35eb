#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "bridgestain/checkpoint.hpp"
#include "bridgestain/commands.hpp"
#include "bridgestain/evaluation.hpp"
#include "bridgestain/sampling.hpp"
#include "bridgestain/synthdata.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bridgestain;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "" : "FAILED ") + what);
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

json run(const std::string& name, const json& cfg) {
  return json::parse(run_command(name, cfg.dump()));
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

// ------------------------------------------------------------ desk fixture

struct Desk {
  fs::path data, run, checkpoint;
  json train_result;
  double train_seconds = 0;
};

json desk_train_config(const fs::path& data, const fs::path& run) {
  return {{"data", data.string()},
          {"out", run.string()},
          {"steps", 2000},
          {"batch_size", 8},
          {"lr", 1e-3},
          {"seed", 1},
          {"timing", false},
          {"T", 1000},
          {"hidden", 32},
          {"unet",
           {{"levels", 3},
            {"base_width", 16},
            {"attention_heads", 4},
            {"time_embed_dim", 64},
            {"norm_groups", 8},
            {"attention_min_level", 2}}}};
}

Desk desk(const fs::path& work, bool build) {
  Desk d;
  d.data = work / "desk" / "data";
  d.run = work / "desk" / "run";
  d.checkpoint = d.run / "checkpoint.btck";
  const fs::path stamp = work / "desk" / "fixture.json";
  const json cfg = desk_train_config(d.data, d.run);
  if (fs::exists(stamp) && fs::exists(d.checkpoint)) {
    std::ifstream is(stamp);
    const json j = json::parse(is);
    if (j.at("config") == cfg) {
      d.train_result = j.at("result");
      d.train_seconds = j.at("train_seconds");
      return d;
    }
  }
  if (!build) throw std::runtime_error("desk fixture missing; run with --prepare first");
  std::printf("building desk fixture in %s\n", (work / "desk").c_str());
  std::fflush(stdout);
  run("gen-data", {{"out", d.data.string()}});
  const Clock clock;
  d.train_result = run("train", cfg);
  d.train_seconds = clock.seconds();
  std::ofstream(stamp) << json{{"config", cfg}, {"result", d.train_result}, {"train_seconds", d.train_seconds}}.dump(2);
  return d;
}

// ---------------------------------------------------------------- criteria

Outcome schedule_exactness(const fs::path&) {
  Outcome o;
  const Clock clock;
  const BridgeSchedule s = build_schedule(1000);
  o.check(s.m[500] == 0.5 && s.delta[500] == 0.5, "m_500 = delta_500 = 0.5");
  o.check(s.delta[0] == 0.0 && s.delta[1000] == 0.0, "delta_0 = delta_T = 0");
  o.check(s.delta_tilde[1] == 0.0, "delta_tilde_1 = 0");
  double worst = 0;
  for (int t = 0; t <= 1000; ++t) worst = std::max(worst, std::abs(s.delta[t] - s.delta[1000 - t]));
  o.check(worst <= 1e-15, fmt("max |delta_t - delta_{T-t}| = %.3g", worst));
  const double sec = clock.seconds();
  o.check(sec < 1.0, fmt("%.3f s", sec));
  return o;
}

Outcome coefficient_oracle(const fs::path&) {
  Outcome o;
  const Clock clock;
  const int T = 10;
  const BridgeSchedule s = build_schedule(T);
  double worst = 0;
  for (int t = 2; t <= T - 1; ++t) {
    const auto g = testutil::conditioning_oracle(T, t);
    worst = std::max({worst, std::abs(s.c_x[t] - g.c_x), std::abs(s.c_y[t] - g.c_y),
                      std::abs(s.c_eps[t] - g.c_eps), std::abs(s.delta_tilde[t] - g.var)});
  }
  o.check(worst < 1e-10, fmt("t in [2,9] max deviation %.3g", worst));
  const double m = double(T - 1) / T, x0 = 0.37, y = -0.81;
  const double mean = s.c_x[T] * y + s.c_y[T] * y - s.c_eps[T] * (y - x0);
  const double dm = std::abs(mean - ((1 - m) * x0 + m * y));
  const double dv = std::abs(s.delta_tilde[T] - 2 * m * (1 - m));
  o.check(dm < 1e-10 && dv < 1e-10, fmt("pinned step vs marginal at T-1: mean %.3g, var %.3g", dm, dv));
  const double sec = clock.seconds();
  o.check(sec < 1.0, fmt("%.3f s", sec));
  return o;
}

Outcome forward_marginal(const fs::path&) {
  Outcome o;
  const Clock clock;
  const BridgeSchedule s = build_schedule(1000);
  const double x0 = 0.6, y = -0.4;
  const ImageTensor X0(1, 1, 1, {x0}, Semantics::normalized_latent, {-1e300, 1e300});
  const ImageTensor Y(1, 1, 1, {y}, Semantics::normalized_latent, {-1e300, 1e300});
  for (int t : {250, 500, 750}) {
    RngStream rng(stream_key(99, stream_tag::training_step, t));
    const int n = 20000;
    double sum = 0, sq = 0;
    for (int k = 0; k < n; ++k) {
      const double v = forward_sample(s, X0, Y, t, rng).x_t.data()[0];
      sum += v;
      sq += v * v;
    }
    const double em = sum / n, ev = (sq - n * em * em) / (n - 1);
    const double mean = (1 - s.m[t]) * x0 + s.m[t] * y, var = s.delta[t];
    const double z = std::abs(em - mean) / std::sqrt(var / n);
    o.check(z < 4.0 && std::abs(ev / var - 1) < 0.03,
            fmt("t=%d mean off by %.2f SE, variance ratio %.4f", t, z, ev / var));
  }
  const double sec = clock.seconds();
  o.check(sec < 10.0, fmt("%.2f s", sec));
  return o;
}

Outcome oracle_end_to_end(const fs::path&) {
  Outcome o;
  const Clock clock;
  const BridgeSchedule s = build_schedule(1000);
  const ImageTensor x0 = testutil::random_normal(32, 32, 3, 1);
  const ImageTensor y0 = testutil::random_normal(32, 32, 3, 2);
  const OracleDenoiser oracle({x0});
  const IdentityConditioner cond;
  Pipeline p;
  p.conditioner = &cond;
  p.denoiser = &oracle;
  for (auto st : {Strategy::vanilla, Strategy::mean, Strategy::skip}) {
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SamplerConfig c;
      c.strategy = st;
      c.exit_point = 50;
      c.seed = seed;
      worst = std::max(worst, max_abs_diff(run_chain(s, p, y0, c).output, x0));
    }
    o.check(worst < 1e-9, fmt("%s: max |x0_hat - x0| = %.3g over 10 seeds", to_string(st), worst));
  }
  const double sec = clock.seconds();
  o.check(sec < 60.0, fmt("%.1f s", sec));
  return o;
}

Outcome gradient_check(const fs::path&) {
  Outcome o;
  const Clock clock;
  const auto r = testutil::gradient_check();
  o.check(r.checked > 0 && r.max_rel_error < 1e-4,
          fmt("%zu parameter entries, max relative error %.3g", r.checked, r.max_rel_error));
  const double sec = clock.seconds();
  o.check(sec < 120.0, fmt("%.1f s", sec));
  return o;
}

Outcome desk_training(const fs::path& work) {
  Outcome o;
  const Clock clock;
  const Desk d = desk(work, false);
  const double first = d.train_result.at("smoothed_loss_first");
  const double last = d.train_result.at("smoothed_loss_last");
  o.check(last <= 0.2 * first, fmt("smoothed loss %.4f -> %.4f (ratio %.4f)", first, last, last / first));
  const fs::path samples = work / "desk" / "c6_sample";
  run("sample", {{"checkpoint", d.checkpoint.string()}, {"data", d.data.string()}, {"out", samples.string()},
                 {"strategy", "mean"}, {"exit", 50}, {"seed", 6}, {"timing", false}});
  const json ev = run("eval", {{"pred", samples.string()}, {"data", d.data.string()}, {"compare", "bilinear"},
                               {"out", (work / "desk" / "c6_eval").string()}});
  const json& t = ev.at("ssim");
  const double gain = t.at("mean_a").get<double>() - t.at("mean_b").get<double>();
  o.check(ev.at("images") == 200, fmt("%d held-out tiles", ev.at("images").get<int>()));
  o.check(gain >= 0.02, fmt("SSIM mean %.4f vs bilinear baseline %.4f (gain %.4f)",
                            t.at("mean_a").get<double>(), t.at("mean_b").get<double>(), gain));
  o.check(t.at("p_value").get<double>() <= 0.05,
          fmt("paired t = %.2f, p = %.3g", t.at("t_score").get<double>(), t.at("p_value").get<double>()));
  const double sec = clock.seconds();
  o.check(d.train_seconds + sec <= 1800.0, fmt("training %.0f s, sampling and evaluation %.0f s", d.train_seconds, sec));
  return o;
}

Outcome variance_ordering(const fs::path& work) {
  Outcome o;
  const Clock clock;
  const Desk d = desk(work, false);
  const fs::path out = work / "desk" / "c7_sweep";
  run("sweep", {{"kind", "averaging"}, {"checkpoint", d.checkpoint.string()}, {"data", d.data.string()},
                {"limit", 8}, {"reps", 5}, {"exit", 50}, {"seed", 7}, {"timing", false}, {"out", out.string()}});
  std::map<std::string, std::map<int, double>> cv;
  const auto rows = read_csv(out / "sweep.csv");
  for (std::size_t r = 1; r < rows.size(); ++r) cv[rows[r][0]][std::stoi(rows[r][1])] = std::stod(rows[r][4]);
  const double m5 = cv["mean"][5], v5 = cv["vanilla"][5], v1 = cv["vanilla"][1];
  o.check(m5 < v5 && v5 < v1, fmt("CV mean@5 %.5f < vanilla@5 %.5f < vanilla@1 %.5f", m5, v5, v1));
  for (const char* st : {"vanilla", "mean"}) {
    const auto& c = cv[st];
    const bool mono = c.at(1) >= c.at(2) && c.at(2) >= c.at(3) && c.at(3) >= c.at(5);
    o.check(mono, fmt("%s CV n=1,2,3,5: %.5f %.5f %.5f %.5f", st, c.at(1), c.at(2), c.at(3), c.at(5)));
  }
  const double sec = clock.seconds();
  o.check(sec <= 1200.0, fmt("%.0f s", sec));
  return o;
}

Outcome exit_sweep_ordering(const fs::path& work) {
  Outcome o;
  const Clock clock;
  const Desk d = desk(work, false);
  const fs::path out = work / "desk" / "c8_sweep";
  run("sweep", {{"kind", "exit"}, {"checkpoint", d.checkpoint.string()}, {"data", d.data.string()},
                {"seed", 8}, {"timing", false}, {"out", out.string()}});
  std::map<std::string, std::map<int, double>> ss;
  const auto rows = read_csv(out / "sweep.csv");
  for (std::size_t r = 1; r < rows.size(); ++r) ss[rows[r][0]][std::stoi(rows[r][1])] = std::stod(rows[r][2]);
  o.check(ss["mean"].size() == 9, fmt("%zu exit points", ss["mean"].size()));
  for (int te : kDefaultExitGrid) {
    const double m = ss["mean"][te], k = ss["skip"][te];
    o.check(m >= k, fmt("t_e=%d mean %.5f skip %.5f", te, m, k));
  }
  const double sec = clock.seconds();
  o.check(sec <= 1800.0, fmt("%.0f s", sec));
  return o;
}

class CountingDenoiser : public Denoiser {
 public:
  explicit CountingDenoiser(const Denoiser& inner) : inner_(inner) {}
  DenoiserKind kind() const noexcept override { return inner_.kind(); }
  std::vector<ImageTensor> evaluate_batch(std::span<const DenoiseQuery> q) const override {
    calls_ += static_cast<long>(q.size());
    return inner_.evaluate_batch(q);
  }
  long take() const { return calls_.exchange(0); }

 private:
  const Denoiser& inner_;
  mutable std::atomic<long> calls_{0};
};

Outcome sampler_accounting(const fs::path& work) {
  Outcome o;
  const Desk d = desk(work, false);
  const auto net = NetworkModel<float>::from_checkpoint(load_checkpoint(d.checkpoint));
  const NetworkDenoiser<float> inner(*net);
  const NetworkConditioner<float> cond(*net);
  const CountingDenoiser counter(inner);
  Pipeline p;
  p.conditioner = &cond;
  p.denoiser = &counter;
  p.output_stats = &net->target_stats();
  const int T = net->spec().T;
  const auto tile = load_split(d.data, load_manifest(d.data), "test", 1).front();
  const BridgeSchedule s = build_schedule(T);
  std::map<std::string, double> wall;
  for (int te : {50, 200}) {
    for (auto st : {Strategy::vanilla, Strategy::mean, Strategy::skip}) {
      if (st == Strategy::vanilla && te != 50) continue;
      SamplerConfig c;
      c.strategy = st;
      c.exit_point = te;
      c.seed = 9;
      const auto r = run_chain(s, p, tile.input, c);
      const long calls = counter.take();
      double sec = INFINITY;
      for (int rep = 0; rep < 3; ++rep) {
        const Clock clock;
        run_chain(s, p, tile.input, c);
        sec = std::min(sec, clock.seconds());
      }
      counter.take();
      const long want = st == Strategy::skip ? T - te : T;
      const std::string label = st == Strategy::vanilla ? "vanilla" : fmt("%s t_e=%d", to_string(st), te);
      wall[label] = sec;
      o.check(calls == want && r.evaluations == calls,
              fmt("%s: %ld denoiser calls (expected %ld), %.2f s", label.c_str(), calls, want, sec));
    }
  }
  o.check(wall["skip t_e=50"] < wall["vanilla"] && wall["skip t_e=200"] < wall["vanilla"],
          "skip wall-clock below vanilla (best of 3 runs each)");
  return o;
}

Outcome metric_suite(const fs::path&) {
  Outcome o;
  const Clock clock;
  const ImageTensor a = testutil::random_image(64, 64, 3, 1);
  o.check(std::abs(ssim(a, a) - 1.0) < 1e-9, fmt("ssim(a,a) - 1 = %.3g", ssim(a, a) - 1.0));
  double worst = 0;
  for (std::uint64_t k = 0; k < 3; ++k) {
    const ImageTensor x = testutil::random_image(64, 64, 3, 10 + k), y = testutil::random_image(64, 64, 3, 20 + k);
    worst = std::max(worst, std::abs(ssim(x, y) - testutil::brute_ssim(x, y)));
  }
  o.check(worst < 1e-10, fmt("sliding vs brute-force SSIM max diff %.3g", worst));
  const std::vector<double> d{1, 2, 3}, z{0, 0, 0};
  const auto t = paired_ttest(d, z);
  o.check(std::abs(t.t_score - 3.4641) < 5e-5 && std::abs(t.p_value - 0.0742) < 5e-5,
          fmt("t-test t = %.4f, p = %.4f", t.t_score, t.p_value));
  const int bins = 33;
  std::vector<double> acc(bins, 0.0);
  for (std::uint64_t r = 0; r < 20; ++r) {
    ImageTensor noise(256, 256, 1, Semantics::normalized_latent, {-1e300, 1e300});
    RngStream rng(500 + r);
    for (double& v : noise.data()) v = rng.normal();
    const auto sp = radial_power_spectrum(noise, bins);
    for (int b = 0; b < bins; ++b) acc[b] += sp.power[b];
  }
  double mean = 0, spread = 0;
  for (int b = 1; b < bins; ++b) mean += acc[b] / (bins - 1);
  for (int b = 1; b < bins; ++b) spread = std::max(spread, std::abs(acc[b] / mean - 1));
  o.check(spread < 0.10, fmt("white-noise spectrum max deviation %.2f%%", 100 * spread));
  const ImageTensor g = to_grayscale(testutil::random_image(16, 16, 3, 8));
  const auto sp = radial_power_spectrum(g, 9);
  double lhs = 0, rhs = 0;
  for (std::size_t b = 0; b < sp.power.size(); ++b) lhs += sp.power[b] * static_cast<double>(sp.count[b]);
  for (const auto& f : testutil::naive_dft(g)) rhs += std::norm(f);
  o.check(std::abs(lhs / rhs - 1) < 1e-8, fmt("Parseval relative error %.3g", std::abs(lhs / rhs - 1)));
  const double sec = clock.seconds();
  o.check(sec < 60.0, fmt("%.1f s", sec));
  return o;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

std::map<std::string, std::string> pipeline_pass(const fs::path& root) {
  fs::remove_all(root);
  const auto at = [&](const char* sub) { return (root / sub).string(); };
  run("gen-data", {{"out", at("data")}, {"size", 16}, {"factor", 2}, {"train_count", 24},
                   {"test_count", 4}, {"test_seed", 500}});
  json train = {{"data", at("data")}, {"out", at("run")}, {"steps", 20}, {"batch_size", 4}, {"seed", 3},
                {"T", 50}, {"hidden", 8}, {"timing", false},
                {"unet", {{"levels", 2}, {"base_width", 8}, {"attention_heads", 2},
                          {"time_embed_dim", 16}, {"norm_groups", 4}, {"attention_min_level", 1}}}};
  run("train", train);
  const std::string ck = at("run/checkpoint.btck");
  run("train", {{"data", at("data")}, {"out", at("resume")}, {"steps", 5}, {"init_from", ck}, {"timing", false}});
  for (const char* st : {"vanilla", "mean", "skip"}) {
    run("sample", {{"checkpoint", ck}, {"data", at("data")}, {"out", at(("s_" + std::string(st)).c_str())},
                   {"strategy", st}, {"exit", 10}, {"avg", 2}, {"seed", 4}, {"timing", false}});
  }
  run("eval", {{"pred", at("s_mean")}, {"data", at("data")}, {"compare", at("s_skip")}, {"out", at("ev")}});
  run("eval", {{"pred", at("s_mean")}, {"data", at("data")}, {"compare", "bilinear"}, {"out", at("ev_bl")}});
  run("sweep", {{"kind", "exit"}, {"checkpoint", ck}, {"data", at("data")}, {"grid", {5, 10}},
                {"reps", 2}, {"seed", 5}, {"timing", false}, {"out", at("sw_exit")}});
  run("sweep", {{"kind", "averaging"}, {"checkpoint", ck}, {"data", at("data")}, {"grid", {1, 2}},
                {"reps", 2}, {"exit", 10}, {"seed", 5}, {"timing", false}, {"out", at("sw_avg")}});
  run("sweep", {{"kind", "factor"}, {"runs", {{{"factor", 2}, {"checkpoint", ck}, {"data", at("data")}}}},
                {"exit", 10}, {"seed", 5}, {"timing", false}, {"out", at("sw_factor")}});
  run("spectrum", {{"pred", at("s_mean")}, {"data", at("data")}, {"out", at("spectrum")}});
  run("cv-report", {{"pred", at("s_mean")}, {"out", at("cv")}});
  run("schedule-dump", {{"T", 50}, {"out", at("schedule")}});
  return snapshot(root);
}

Outcome determinism(const fs::path& work) {
  Outcome o;
  const fs::path root = work / "determinism";
  const auto first = pipeline_pass(root);
  const auto second = pipeline_pass(root);
  std::size_t differ = 0;
  std::string example;
  for (const auto& [name, bytes] : first) {
    const auto it = second.find(name);
    if (it == second.end() || it->second != bytes) {
      ++differ;
      if (example.empty()) example = name;
    }
  }
  o.check(first.size() == second.size() && differ == 0,
          fmt("%zu files compared across two runs of every command, %zu differ%s%s", first.size(), differ,
              example.empty() ? "" : " e.g. ", example.c_str()));
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(const fs::path&)> fn;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {1, "schedule exactness", schedule_exactness},
      {2, "coefficient oracle", coefficient_oracle},
      {3, "forward-marginal Monte Carlo", forward_marginal},
      {4, "oracle end-to-end", oracle_end_to_end},
      {5, "gradient check", gradient_check},
      {6, "desk training", desk_training},
      {7, "variance-reduction ordering", variance_ordering},
      {8, "exit-point sweep", exit_sweep_ordering},
      {9, "sampler accounting", sampler_accounting},
      {10, "metric suite", metric_suite},
      {11, "determinism", determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  bool prepare = false;
  std::string work = "acceptance_work";
  app.add_option("--only", only, "run a single criterion");
  app.add_flag("--prepare", prepare, "build the cached desk dataset and model");
  app.add_option("--work", work, "working directory for fixtures and outputs");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  if (prepare) {
    try {
      const Clock clock;
      const Desk d = desk(work, true);
      std::printf("desk fixture ready: %s (%.0f s)\n", d.checkpoint.c_str(), clock.seconds());
      return 0;
    } catch (const std::exception& e) {
      std::printf("desk fixture failed: %s\n", e.what());
      return 1;
    }
  }

  int failed = 0, ran = 0;
  for (const auto& c : criteria()) {
    if (only != 0 && c.id != only) continue;
    ++ran;
    Outcome o;
    try {
      o = c.fn(work);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    std::string detail;
    for (const auto& n : o.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  if (ran == 0) {
    std::printf("no criterion %d\n", only);
    return 2;
  }
  return failed == 0 ? 0 : 1;
}
