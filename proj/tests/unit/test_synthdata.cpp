#include <doctest.h>

#include <cmath>

#include "bridgestain/error.hpp"
#include "bridgestain/synthdata.hpp"
#include "bridgestain/tensor_io.hpp"
#include "helpers.hpp"

using namespace bridgestain;

TEST_CASE("generate_pair is a deterministic function of the seed") {
  const PairedSample a = generate_pair(42, 32, 4, 3), b = generate_pair(42, 32, 4, 3);
  CHECK(a.target == b.target);
  CHECK(a.input == b.input);
  CHECK_FALSE(generate_pair(43, 32, 4, 3).target == a.target);
  CHECK(a.target.height() == 32);
  CHECK(a.target.channels() == 3);
  CHECK(a.input.height() == 8);
  CHECK(a.input.width() == 8);
  CHECK(a.input.channels() == 3);
  CHECK(a.input.semantics() == Semantics::af_stack);
  CHECK_THROWS_AS(generate_pair(1, 30, 4, 4), Error);
  CHECK_THROWS_AS(generate_pair(1, 32, 2, 5), Error);
  CHECK_THROWS_AS(generate_pair(1, 32, 2, 1), Error);
}

TEST_CASE("input replays from the full-resolution pseudo-AF stack") {
  for (int n : {1, 2, 3, 4, 5}) {
    const int size = 60;
    const PairedSample p = generate_pair(7, size, n, 4);
    const SceneFields scene = generate_scene(7, size);
    CHECK(render_target(scene) == p.target);
    CHECK(bin_pixels(render_autofluorescence(scene, 4), n) == p.input);
  }
}

TEST_CASE("binning is many-to-one") {
  const SceneFields scene = generate_scene(3, 16);
  const ImageTensor af = render_autofluorescence(scene, 4);
  ImageTensor other = af;
  other.at(0, 0, 0) += 0.125;
  other.at(1, 1, 0) -= 0.125;
  CHECK_FALSE(other == af);
  CHECK(max_abs_diff(bin_pixels(other, 2), bin_pixels(af, 2)) < 1e-15);
}

TEST_CASE("targets are in range with active chroma") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const ImageTensor t = generate_pair(seed, 32, 2, 4).target;
    for (double v : t.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    const ImageTensor y = to_ycbcr(t);
    for (int c : {1, 2}) {
      double lo = 1, hi = 0;
      for (std::size_t p = 0; p < y.pixels(); ++p) {
        lo = std::min(lo, y.data()[p * 3 + c]);
        hi = std::max(hi, y.data()[p * 3 + c]);
      }
      CHECK(std::abs(0.5 * (lo + hi) - 0.5) > 0.01);
      CHECK(hi - lo > 0.02);
    }
  }
}

TEST_CASE("dataset build, stats and validation") {
  const auto dir = testutil::scratch("synth");
  DatasetConfig cfg;
  cfg.dir = dir;
  cfg.size = 16;
  cfg.factor = 2;
  cfg.train_count = 6;
  cfg.test_count = 3;
  cfg.train_seed = 0;
  cfg.test_seed = 100;
  const DatasetManifest m = build_dataset(cfg);
  CHECK(m.train.ids.size() == 6);
  CHECK(m.test.ids.size() == 3);
  for (auto s : m.train.seeds) {
    for (auto t : m.test.seeds) CHECK(s != t);
  }
  const DatasetManifest back = load_manifest(dir);
  CHECK(back.train.ids == m.train.ids);
  CHECK(back.test.seeds == m.test.seeds);

  std::vector<ImageTensor> targets, inputs;
  for (const auto& id : m.train.ids) {
    targets.push_back(load_tensor(target_path(dir, "train", id)));
    inputs.push_back(load_tensor(input_path(dir, "train", id)));
  }
  const auto ts = compute_stats(targets), is = compute_stats(inputs);
  for (int c = 0; c < 3; ++c) {
    CHECK(std::abs(ts.mean[c] - back.target_stats.mean[c]) < 1e-6);
    CHECK(std::abs(ts.std[c] - back.target_stats.std[c]) < 1e-6);
  }
  for (int c = 0; c < 4; ++c) {
    CHECK(std::abs(is.mean[c] - back.input_stats.mean[c]) < 1e-6);
    CHECK(std::abs(is.std[c] - back.input_stats.std[c]) < 1e-6);
  }
  const auto loaded = load_split(dir, back, "test", 2);
  REQUIRE(loaded.size() == 2);
  ImageTensor regen = generate_pair(back.test.seeds[1], 16, 2, 4).target;
  for (double& v : regen.data()) v = static_cast<float>(v);
  CHECK(loaded[1].target == regen);
  CHECK(loaded[1].target.semantics() == regen.semantics());
  CHECK(loaded[1].target.range() == regen.range());

  CHECK(validate_dataset(dir, back).empty());
  std::filesystem::remove(input_path(dir, "test", m.test.ids[1]));
  const auto missing = validate_dataset(dir, back);
  REQUIRE(missing.size() == 1);
  CHECK(missing[0] == "test/" + m.test.ids[1]);

  cfg.test_seed = 4;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg.test_seed = 6;
  CHECK_NOTHROW(validate(cfg));
  cfg.test_count = 0;
  CHECK_THROWS_AS(validate(cfg), Error);
}
