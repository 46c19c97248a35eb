#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bridgestain/bridgestain.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("bridgestain_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(BRIDGESTAIN_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("status codes") {
  CHECK(std::string(bs_version()) == "1.0.0");
  CHECK(std::string(bs_status_name(BS_NOT_FOUND)) == "not-found");
  CHECK(bs_status_exit_code(BS_OK) == 0);
  for (bs_status s : {BS_INVALID_INPUT, BS_INVALID_CONFIG, BS_NOT_FOUND, BS_INCOMPATIBLE_CHECKPOINT}) {
    CHECK(bs_status_exit_code(s) == 2);
  }
  for (bs_status s : {BS_IO, BS_INVALID_STEP, BS_EMPTY_RESULT, BS_INTERNAL}) CHECK(bs_status_exit_code(s) == 3);
}

TEST_CASE("tensor and metric handles") {
  const auto dir = scratch("tensor");
  const double px[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 0.0, 0.5};
  bs_tensor* a = nullptr;
  REQUIRE(bs_tensor_create(2, 2, 3, 0, 0.0, 1.0, px, &a) == BS_OK);
  REQUIRE(bs_tensor_save(a, (dir / "a.btns").c_str()) == BS_OK);
  CHECK(bs_tensor_save_png(a, (dir / "a.png").c_str()) == BS_OK);
  bs_tensor* b = nullptr;
  REQUIRE(bs_tensor_load((dir / "a.btns").c_str(), &b) == BS_OK);
  int h = 0, w = 0, c = 0;
  CHECK(bs_tensor_shape(b, &h, &w, &c) == BS_OK);
  CHECK(h * 100 + w * 10 + c == 223);
  CHECK(bs_tensor_data(b)[4] == doctest::Approx(0.5).epsilon(1e-7));
  double s = 0, mse = 1, psnr = 0;
  CHECK(bs_ssim(a, a, 1, &s) == BS_OK);
  CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(bs_mse_psnr(a, a, &mse, &psnr) == BS_OK);
  CHECK(mse == 0.0);
  CHECK(std::isinf(psnr));
  bs_tensor* wrong = nullptr;
  REQUIRE(bs_tensor_create(2, 1, 3, 0, 0.0, 1.0, nullptr, &wrong) == BS_OK);
  CHECK(bs_ssim(a, wrong, 1, &s) == BS_INVALID_INPUT);
  CHECK(std::string(bs_last_error()).size() > 0);
  CHECK(bs_tensor_load((dir / "missing.btns").c_str(), &b) != BS_OK);
  CHECK(bs_tensor_create(0, 2, 3, 0, 0.0, 1.0, nullptr, &wrong) == BS_INVALID_INPUT);
  bs_tensor_free(a);
  bs_tensor_free(b);
  bs_tensor_free(wrong);

  const double x[] = {1, 2, 3}, z[] = {0, 0, 0};
  double t = 0, p = 0;
  CHECK(bs_paired_ttest(x, z, 3, &t, &p) == BS_OK);
  CHECK(t == doctest::Approx(3.4641).epsilon(1e-4));
  CHECK(p == doctest::Approx(0.0742).epsilon(1e-3));

  bs_schedule* sc = nullptr;
  REQUIRE(bs_schedule_create(1000, &sc) == BS_OK);
  double m = 0, d = 0;
  CHECK(bs_schedule_get(sc, 500, &m, &d, nullptr, nullptr, nullptr, nullptr) == BS_OK);
  CHECK(m == 0.5);
  CHECK(d == 0.5);
  CHECK(bs_schedule_get(sc, 1001, &m, nullptr, nullptr, nullptr, nullptr, nullptr) == BS_INVALID_STEP);
  bs_schedule_free(sc);
  CHECK(bs_schedule_create(1, &sc) == BS_INVALID_CONFIG);
}

TEST_CASE("commands through the C API") {
  const std::string list = bs_command_list();
  for (const char* n : {"gen-data", "train", "sample", "eval", "sweep", "spectrum", "cv-report", "schedule-dump"}) {
    CHECK(list.find(n) != std::string::npos);
  }
  const auto dir = scratch("cmd");
  char* out = nullptr;
  const json cfg = {{"T", 20}, {"out", (dir / "s").string()}};
  REQUIRE(bs_command_run("schedule-dump", cfg.dump().c_str(), &out) == BS_OK);
  CHECK(json::parse(out).is_object());
  bs_string_free(out);
  CHECK(fs::exists(dir / "s" / "schedule.csv"));
  CHECK(fs::exists(dir / "s" / "resolved_config.json"));
  CHECK(bs_command_run("schedule-dump", R"({"out":"x","bogus":1})", &out) == BS_INVALID_CONFIG);
  CHECK(bs_command_run("schedule-dump", "not json", &out) == BS_INVALID_CONFIG);
  CHECK(bs_command_run("nope", "{}", &out) == BS_INVALID_CONFIG);
  CHECK(bs_command_run("sample", R"({"checkpoint":"/nonexistent.btck","data":"/nonexistent","out":"/tmp/x"})", &out) == BS_NOT_FOUND);
}

TEST_CASE("cli end to end") {
  const auto dir = scratch("cli");
  const auto log = dir / "log.txt";
  const std::string d = (dir / "data").string(), run = (dir / "run").string();
  REQUIRE(cli("gen-data --out " + d + " --size 16 --factor 2 --train-count 4 --test-count 2 --test-seed 100", log) == 0);
  const std::string unet = R"('--set=unet={"levels":2,"base_width":4,"attention_heads":2,"time_embed_dim":8,"norm_groups":2,"attention_min_level":1}')";
  REQUIRE(cli("train --data " + d + " --out " + run + " --max-steps 3 --batch-size 2 --T 10 --set hidden=4 " + unet + " --no-timing", log) == 0);
  const json tr = json::parse(slurp(log));
  CHECK(tr["step"] == 3);
  CHECK(fs::exists(fs::path(run) / "train_log.csv"));
  const std::string ck = run + "/checkpoint.btck";

  REQUIRE(cli("train --data " + d + " --out " + dir.string() + "/resume --max-steps 5 --init-from " + ck + " --no-timing", log) == 0);
  const json resumed = json::parse(slurp(log));
  CHECK(resumed["step"] == 8);
  CHECK(resumed["steps_run"] == 5);

  const std::string s1 = (dir / "s1").string(), s2 = (dir / "s2").string();
  REQUIRE(cli("sample --checkpoint " + ck + " --data " + d + " --out " + s1 + " --strategy mean --exit 4 --avg 2 --seed 3 --no-timing", log) == 0);
  REQUIRE(cli("sample --checkpoint " + ck + " --data " + d + " --out " + s2 + " --strategy mean --exit 4 --avg 2 --seed 3 --no-timing", log) == 0);
  const json man = json::parse(slurp(fs::path(s1) / "manifest.json"));
  CHECK(man["tiles"].size() == 2);
  CHECK(man["evaluations_per_chain"] == 10);
  CHECK(slurp(fs::path(s1) / "manifest.json") == slurp(fs::path(s2) / "manifest.json"));
  for (const auto& t : man["tiles"]) {
    const std::string id = t["id"];
    CHECK(slurp(fs::path(s1) / (id + ".btns")) == slurp(fs::path(s2) / (id + ".btns")));
    CHECK(fs::exists(fs::path(s1) / (id + "_run1.btns")));
    CHECK(fs::exists(fs::path(s1) / (id + ".png")));
  }

  REQUIRE(cli("eval --pred " + s1 + " --data " + d + " --compare bilinear --out " + dir.string() + "/ev", log) == 0);
  const std::string metrics = slurp(dir / "ev" / "metrics.csv");
  CHECK(metrics.rfind("image_id,ssim,psnr_db,mse,perceptual\r\n", 0) == 0);
  CHECK(fs::exists(dir / "ev" / "ttest.csv"));
  REQUIRE(cli("cv-report --pred " + s1 + " --out " + dir.string() + "/cv", log) == 0);
  CHECK(fs::exists(dir / "cv" / "cv.csv"));
  REQUIRE(cli("spectrum --pred " + s1 + " --data " + d + " --out " + dir.string() + "/sp", log) == 0);
  CHECK(fs::exists(dir / "sp" / "spectrum.csv"));
  REQUIRE(cli("sweep --kind exit --checkpoint " + ck + " --data " + d + " --grid 2,5 --out " + dir.string() + "/sw --no-timing", log) == 0);
  const std::string sweep = slurp(dir / "sw" / "sweep.csv");
  CHECK(sweep.rfind("strategy,grid_value,ssim,perceptual,mean_cv,wall_ms\r\n", 0) == 0);
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 6);

  CHECK(cli("sample --checkpoint " + dir.string() + "/none.btck --data " + d + " --out " + dir.string() + "/x", log) == 2);
  CHECK(slurp(log).find("error: not-found") != std::string::npos);
  CHECK(cli("sample --checkpoint " + ck + " --data " + d + " --out " + dir.string() + "/x --exit 11", log) == 2);
  CHECK(cli("sample --checkpoint " + ck + " --data " + d + " --out " + dir.string() + "/x --strategy fast", log) == 2);
  CHECK(cli("sample --checkpoint " + ck + " --data " + d + " --out " + dir.string() + "/x --set bogus=1", log) == 2);
  CHECK(cli("sample --checkpoint " + ck + " --data " + d + " --out " + dir.string() + "/x --avg 2 --set 'seed=-1'", log) == 2);
  CHECK(cli("eval --pred " + dir.string() + "/nowhere --data " + d + " --out " + dir.string() + "/y", log) == 2);
  CHECK(cli("train --data " + d + " --out " + dir.string() + "/z --max-steps 1 --set 'unet={\"widths\":4}'", log) == 2);
  CHECK(cli("frobnicate", log) == 2);
  CHECK(cli("sample --exit notanumber", log) == 2);
  fs::create_directories(dir / "empty");
  CHECK(cli("eval --pred " + dir.string() + "/empty --data " + d + " --out " + dir.string() + "/y", log) == 3);
}
