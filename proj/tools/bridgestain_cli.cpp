#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bridgestain/bridgestain.h"

using nlohmann::json;

namespace {

enum class Kind { text, integer, unsigned_int, real, flag, int_list };

struct Flag {
  std::string name;  // long option without dashes
  std::string key;   // config key
  Kind kind;
  std::string help;
};

const std::map<std::string, std::vector<Flag>>& command_flags() {
  static const std::map<std::string, std::vector<Flag>> flags = {
      {"gen-data",
       {{"out", "out", Kind::text, "dataset directory"},
        {"size", "size", Kind::integer, "target tile size H"},
        {"factor", "factor", Kind::integer, "super-resolution factor N"},
        {"channels", "channels", Kind::integer, "autofluorescence channels (2-4)"},
        {"train-count", "train_count", Kind::integer, "training tiles"},
        {"test-count", "test_count", Kind::integer, "held-out tiles"},
        {"train-seed", "train_seed", Kind::unsigned_int, "first training seed"},
        {"test-seed", "test_seed", Kind::unsigned_int, "first test seed"}}},
      {"train",
       {{"data", "data", Kind::text, "dataset directory"},
        {"out", "out", Kind::text, "run directory"},
        {"max-steps", "steps", Kind::integer, "optimisation steps to run"},
        {"batch-size", "batch_size", Kind::integer, "tiles per step"},
        {"lr", "lr", Kind::real, "learning rate"},
        {"seed", "seed", Kind::unsigned_int, "training seed"},
        {"init-from", "init_from", Kind::text, "checkpoint to resume or fine-tune from"},
        {"precision", "precision", Kind::text, "float or double"},
        {"T", "T", Kind::integer, "diffusion steps"},
        {"no-timing", "timing", Kind::flag, "write zero wall-clock columns"}}},
      {"sample",
       {{"checkpoint", "checkpoint", Kind::text, "trained checkpoint"},
        {"data", "data", Kind::text, "dataset directory"},
        {"split", "split", Kind::text, "train or test"},
        {"limit", "limit", Kind::integer, "first n tiles only"},
        {"out", "out", Kind::text, "output directory"},
        {"strategy", "strategy", Kind::text, "vanilla, mean or skip"},
        {"exit", "exit", Kind::integer, "exit point t_e"},
        {"avg", "avg", Kind::integer, "chains averaged per tile"},
        {"seed", "seed", Kind::unsigned_int, "sampling seed"},
        {"batch", "batch", Kind::integer, "chains per denoiser call"},
        {"precision", "precision", Kind::text, "float or double"},
        {"no-timing", "timing", Kind::flag, "write zero wall-clock fields"}}},
      {"eval",
       {{"pred", "pred", Kind::text, "directory of output tensors"},
        {"data", "data", Kind::text, "dataset directory (ground truth)"},
        {"reference", "reference", Kind::text, "directory of reference tensors instead of data"},
        {"split", "split", Kind::text, "train or test"},
        {"compare", "compare", Kind::text, "second output directory, or 'bilinear'"},
        {"out", "out", Kind::text, "report directory"}}},
      {"sweep",
       {{"kind", "kind", Kind::text, "exit, averaging or factor"},
        {"checkpoint", "checkpoint", Kind::text, "trained checkpoint"},
        {"data", "data", Kind::text, "dataset directory"},
        {"split", "split", Kind::text, "train or test"},
        {"limit", "limit", Kind::integer, "first n tiles only"},
        {"grid", "grid", Kind::int_list, "grid values"},
        {"reps", "reps", Kind::integer, "repeated inferences per configuration"},
        {"exit", "exit", Kind::integer, "exit point for averaging/factor sweeps"},
        {"seed", "seed", Kind::unsigned_int, "sampling seed"},
        {"batch", "batch", Kind::integer, "chains per denoiser call"},
        {"out", "out", Kind::text, "report directory"},
        {"no-timing", "timing", Kind::flag, "write zero wall-clock columns"}}},
      {"spectrum",
       {{"data", "data", Kind::text, "dataset directory (ground truth)"},
        {"pred", "pred", Kind::text, "directory of output tensors"},
        {"split", "split", Kind::text, "train or test"},
        {"bins", "bins", Kind::integer, "radial bins"},
        {"input-channel", "input_channel", Kind::integer, "input channel to profile"},
        {"out", "out", Kind::text, "report directory"}}},
      {"cv-report",
       {{"pred", "pred", Kind::text, "sample directory with {id}_run{k} tensors"},
        {"out", "out", Kind::text, "report directory"}}},
      {"schedule-dump",
       {{"T", "T", Kind::integer, "diffusion steps"},
        {"out", "out", Kind::text, "output directory"}}},
  };
  return flags;
}

json parse_value(const Flag& f, const std::string& raw) {
  switch (f.kind) {
    case Kind::text: return raw;
    case Kind::integer: return std::stoll(raw);
    case Kind::unsigned_int: return std::stoull(raw);
    case Kind::real: return std::stod(raw);
    case Kind::flag: return false;
    case Kind::int_list: {
      json arr = json::array();
      std::size_t pos = 0;
      while (pos <= raw.size()) {
        const std::size_t comma = raw.find(',', pos);
        const std::string item = raw.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!item.empty()) arr.push_back(std::stoll(item));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
      return arr;
    }
  }
  return raw;
}

struct Sub {
  CLI::App* app = nullptr;
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
};

int fail(int code, const std::string& msg) {
  std::cerr << "error: " << msg << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Brownian-bridge virtual staining toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", bs_version());
  std::map<std::string, Sub> subs;
  for (const auto& [name, flags] : command_flags()) {
    Sub& s = subs[name];
    s.app = app.add_subcommand(name);
    s.app->add_option("-c,--config", s.config_file, "JSON config file")->check(CLI::ExistingFile);
    s.app->add_option("--set", s.sets, "override any config key: key=json-value");
    for (const auto& f : flags) {
      if (f.kind == Kind::flag) {
        s.app->add_flag("--" + f.name, s.switches[f.key], f.help);
      } else {
        s.app->add_option("--" + f.name, s.values[f.key], f.help);
      }
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  std::string name;
  for (auto& [n, s] : subs) {
    if (s.app->parsed()) name = n;
  }
  Sub& s = subs[name];
  json cfg = json::object();
  if (!s.config_file.empty()) {
    std::ifstream is(s.config_file);
    try {
      cfg = json::parse(is);
    } catch (const json::exception& e) {
      return fail(2, s.config_file + ": " + e.what());
    }
    if (!cfg.is_object()) return fail(2, s.config_file + ": config must be a JSON object");
  }
  for (const auto& f : command_flags().at(name)) {
    const CLI::Option* opt = s.app->get_option("--" + f.name);
    if (opt->count() == 0) continue;
    try {
      cfg[f.key] = f.kind == Kind::flag ? json(false) : parse_value(f, s.values[f.key]);
    } catch (const std::exception&) {
      return fail(2, "--" + f.name + ": cannot parse '" + s.values[f.key] + "'");
    }
  }
  for (const auto& kv : s.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) return fail(2, "--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq), raw = kv.substr(eq + 1);
    try {
      cfg[key] = json::parse(raw);
    } catch (const json::exception&) {
      cfg[key] = raw;
    }
  }

  char* result = nullptr;
  const bs_status st = bs_command_run(name.c_str(), cfg.dump().c_str(), &result);
  if (st != BS_OK) {
    return fail(bs_status_exit_code(st), std::string(bs_status_name(st)) + ": " + bs_last_error());
  }
  std::cout << (result ? result : "{}") << "\n";
  bs_string_free(result);
  return 0;
}
