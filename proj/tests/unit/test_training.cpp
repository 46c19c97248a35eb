#include <doctest.h>

#include "bridgestain/error.hpp"
#include "bridgestain/training.hpp"
#include "helpers.hpp"

using namespace bridgestain;

namespace {

ModelSpec tiny_spec() {
  ModelSpec s;
  s.unet.levels = 2;
  s.unet.base_width = 4;
  s.unet.attention_heads = 2;
  s.unet.time_embed_dim = 8;
  s.unet.norm_groups = 2;
  s.conditioner.hidden = 4;
  s.T = 50;
  return s;
}

std::vector<PairedSample> tiny_data(int n = 6) {
  std::vector<PairedSample> d;
  for (int k = 0; k < n; ++k) d.push_back(generate_pair(100 + k, 8, 2, 4));
  return d;
}

struct Stats {
  NormalizationStats target, input;
};

Stats stats_of(const std::vector<PairedSample>& d) {
  std::vector<ImageTensor> t, i;
  for (const auto& s : d) {
    t.push_back(s.target);
    i.push_back(s.input);
  }
  return {compute_stats(t), compute_stats(i)};
}

}  // namespace

TEST_CASE("loss with oracle and zero denoisers") {
  const BridgeSchedule s = build_schedule(100);
  std::vector<ImageTensor> x0, y, eps;
  for (int b = 0; b < 3; ++b) {
    x0.push_back(testutil::random_normal(4, 4, 3, b));
    y.push_back(testutil::random_normal(4, 4, 3, 10 + b));
    eps.push_back(testutil::random_normal(4, 4, 3, 20 + b));
  }
  const std::vector<int> ts{1, 50, 100};
  const TrainingConfig cfg;
  CHECK(bridge_loss(s, OracleDenoiser(x0), x0, y, ts, eps, cfg).loss < 1e-12);
  double expect = 0;
  for (int b = 0; b < 3; ++b) {
    const ImageTensor tg = training_target(s, x0[b], y[b], ts[b], eps[b]);
    double acc = 0;
    for (double v : tg.data()) acc += v * v;
    expect += acc / tg.size() / 3;
  }
  CHECK(bridge_loss(s, ZeroDenoiser(), x0, y, ts, eps, cfg).loss ==
        doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(bridge_loss(s, ZeroDenoiser(), {}, {}, {}, {}, cfg), Error);
}

TEST_CASE("config validation") {
  TrainingConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(validate(c, 10), Error);
  c = {};
  c.gamma.assign(5, 1.0);
  CHECK_THROWS_AS(validate(c, 10), Error);
  c.gamma.assign(11, 1.0);
  c.gamma[3] = -1;
  CHECK_THROWS_AS(validate(c, 10), Error);
}

TEST_CASE("zero learning rate leaves parameters fixed") {
  const auto data = tiny_data();
  const Stats st = stats_of(data);
  TrainingConfig c;
  c.learning_rate = 0;
  c.max_steps = 2;
  c.batch_size = 2;
  const auto r = train<double>(c, tiny_spec(), data, st.target, st.input);
  nn::DiffusionModel<double> init(tiny_spec().unet, tiny_spec().conditioner);
  init.init(c.seed);
  Checkpoint fresh;
  export_parameters(init, fresh);
  for (const auto& b : fresh.blobs) {
    const NamedBlob* after = r.checkpoint.find(b.name);
    REQUIRE(after);
    CHECK(after->value == b.value);
  }
}

TEST_CASE("seeded training is deterministic and updates both networks") {
  const auto data = tiny_data();
  const Stats st = stats_of(data);
  TrainingConfig c;
  c.learning_rate = 1e-3;
  c.max_steps = 3;
  c.batch_size = 2;
  c.seed = 4;
  TrainHooks h;
  h.timing = false;
  const auto a = train<double>(c, tiny_spec(), data, st.target, st.input, h);
  const auto b = train<double>(c, tiny_spec(), data, st.target, st.input, h);
  REQUIRE(a.log.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(a.log[k].loss == b.log[k].loss);
    CHECK(a.log[k].wall_ms == 0.0);
  }
  for (std::size_t k = 0; k < a.checkpoint.blobs.size(); ++k) {
    CHECK(a.checkpoint.blobs[k].value == b.checkpoint.blobs[k].value);
  }
  nn::DiffusionModel<double> init(tiny_spec().unet, tiny_spec().conditioner);
  init.init(c.seed);
  Checkpoint fresh;
  export_parameters(init, fresh);
  bool cond_changed = false, unet_changed = false;
  for (const auto& blob : fresh.blobs) {
    if (!(a.checkpoint.find(blob.name)->value == blob.value)) {
      (blob.name.rfind("cond.", 0) == 0 ? cond_changed : unet_changed) = true;
    }
  }
  CHECK(cond_changed);
  CHECK(unet_changed);
}

TEST_CASE("resume continues the step counter and the trajectory") {
  const auto dir = testutil::scratch("resume");
  const auto data = tiny_data();
  const Stats st = stats_of(data);
  TrainingConfig c;
  c.learning_rate = 1e-3;
  c.batch_size = 2;
  c.max_steps = 4;
  const auto full = train<float>(c, tiny_spec(), data, st.target, st.input);
  c.max_steps = 2;
  const auto first = train<float>(c, tiny_spec(), data, st.target, st.input);
  save_checkpoint(dir / "half.btck", first.checkpoint);
  c.init_from = (dir / "half.btck").string();
  const auto second = train<float>(c, tiny_spec(), data, st.target, st.input);
  CHECK(second.checkpoint.step == 4);
  REQUIRE(second.log.size() == 2);
  CHECK(second.log[0].step == 3);
  CHECK(second.log[0].loss == full.log[2].loss);
  CHECK(second.log[1].loss == full.log[3].loss);
  ModelSpec other = tiny_spec();
  other.T = 60;
  try {
    train<float>(c, other, data, st.target, st.input);
    FAIL("expected incompatible checkpoint");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::incompatible_checkpoint);
  }
}

TEST_CASE("smoothed loss ends") {
  std::vector<LogRow> log;
  for (int k = 0; k < 10; ++k) log.push_back({k + 1, double(10 - k), 0, 0});
  const auto [a, b] = smoothed_loss_ends(log, 2);
  CHECK(a == 9.5);
  CHECK(b == 1.5);
}
