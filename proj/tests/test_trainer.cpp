#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flowguide/errors.hpp"
#include "flowguide/toy_world.hpp"
#include "flowguide/trainer.hpp"
#include "test_support.hpp"

using namespace flowguide;
using flowguide::testing::flatten;
using flowguide::testing::max_abs;
using flowguide::testing::random_params;
using flowguide::testing::small_arch;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.arch = small_arch(16, 4, 2);
  c.epochs = 3;
  c.batch_size = 64;
  c.dataset_size = 1000;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("interpolation endpoints and midpoint") {
  const Point2 x0(-0.5, 0.5), x1(1.0, 1.0);
  CHECK(interpolate(x0, x1, 0.0).x_t == x0);
  CHECK(interpolate(x0, x1, 1.0).x_t == x1);
  CHECK(interpolate(x0, x1, 0.5).x_t == Point2(0.25, 0.75));
  CHECK(interpolate(x0, x1, 0.3).xdot == Point2(1.5, 0.5));
}

TEST_CASE("beta = 0 leaves the head untouched") {
  const ModelParams p = random_params(small_arch(), 1);
  std::vector<TrainingExample> batch{{Point2(-0.5, 0.5), Point2(0.1, 0.2), 0.3},
                                     {Point2(0.5, -0.2), Point2(-1.0, 0.4), 0.8}};
  const CompoundLoss a = compound_loss(p, batch, 0.0);
  CHECK(a.grads.head[0].weight.isZero(0.0));
  CHECK(a.grads.head[1].bias.isZero(0.0));
  const CompoundLoss b = compound_loss(p, batch, 0.5);
  for (int k = p.arch.tap; k < p.arch.depth; ++k) CHECK(a.grads.trunk[k].weight == b.grads.trunk[k].weight);
  CHECK(a.diff == b.diff);
}

TEST_CASE("a perfect net has zero diffusion loss and alignment -1") {
  const TrainingExample ex{Point2(-0.25, 0.5), Point2(0.3, -0.9), 0.4};
  const Point2 xdot = ex.x1 - ex.x0;
  Arch arch = small_arch(4, 3, 1);
  ModelParams p = ModelParams::zeros(arch);
  p.trunk[0].bias.setOnes();
  p.trunk[1].bias.setOnes();
  p.trunk[2].bias = xdot;
  p.head[0].bias.setOnes();
  p.head[1].bias = phi(ex.x0);
  const CompoundLoss loss = compound_loss(p, std::vector<TrainingExample>{ex}, 0.5);
  CHECK(loss.diff == doctest::Approx(0.0).epsilon(1e-30));
  CHECK(loss.align == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("first Adam step by hand") {
  Arch arch = small_arch(1, 2, 1);
  arch.head_width = 1;
  ModelParams p = ModelParams::zeros(arch);
  ModelParams g = ModelParams::zeros(arch);
  g.trunk[0].weight(0, 0) = 1.0;
  AdamState state = AdamState::zeros_like(p);
  const AdamConfig cfg;
  adam_step(p, g, state, cfg);
  CHECK(p.trunk[0].weight(0, 0) == doctest::Approx(-cfg.learning_rate / (1.0 + cfg.epsilon)).epsilon(1e-15));
  CHECK(p.trunk[0].weight(0, 1) == 0.0);
  CHECK(state.step == 1);
  CHECK(state.m.trunk[0].weight(0, 0) == doctest::Approx(0.1));
  CHECK(state.v.trunk[0].weight(0, 0) == doctest::Approx(0.001));
}

TEST_CASE("zero gradient keeps parameters and decays moments") {
  ModelParams p = random_params(small_arch(), 2);
  const ModelParams before = p;
  AdamState state = AdamState::zeros_like(p);
  state.m.trunk[0].weight.setConstant(0.5);
  state.v.trunk[0].weight.setConstant(0.25);
  state.step = 3;
  ModelParams g = ModelParams::zeros(p.arch);
  AdamState s2 = state;
  ModelParams p2 = p;
  adam_step(p, g, state, AdamConfig{});
  CHECK(state.m.trunk[0].weight(0, 0) == doctest::Approx(0.45));
  CHECK(state.v.trunk[0].weight(0, 0) == doctest::Approx(0.24975));
  CHECK(flatten(p) != flatten(before));  // stored moments still move the weights
  adam_step(p2, g, s2, AdamConfig{});
  CHECK(flatten(p) == flatten(p2));
  ModelParams q = random_params(small_arch(), 2);
  AdamState fresh = AdamState::zeros_like(q);
  adam_step(q, g, fresh, AdamConfig{});
  CHECK(flatten(q) == flatten(before));
}

TEST_CASE("moments decaying below the normal range are flushed to zero") {
  ModelParams p = random_params(small_arch(), 2);
  AdamState state = AdamState::zeros_like(p);
  state.m.trunk[1].weight.setConstant(1.05e-300);
  state.v.trunk[1].weight.setConstant(1.0005e-300);
  state.m.trunk[1].bias.setConstant(2e-300);
  state.step = 10;
  adam_step(p, ModelParams::zeros(p.arch), state, AdamConfig{});
  CHECK(state.m.trunk[1].weight.cwiseAbs().maxCoeff() == 0.0);
  CHECK(state.v.trunk[1].weight.cwiseAbs().maxCoeff() == 0.0);
  CHECK(state.m.trunk[1].bias(0) == doctest::Approx(1.8e-300).epsilon(1e-12));
}

TEST_CASE("Adam rejects non-finite gradients") {
  ModelParams p = random_params(small_arch(), 2);
  ModelParams g = ModelParams::zeros(p.arch);
  g.head[1].bias[0] = std::nan("");
  AdamState s = AdamState::zeros_like(p);
  CHECK_THROWS_AS(adam_step(p, g, s, AdamConfig{}), NumericError);
}

TEST_CASE("zero epochs returns the initialization") {
  TrainConfig c = tiny_config();
  c.epochs = 0;
  const TrainResult r = train(c);
  CHECK(flatten(r.params) == flatten(init_params(c.arch, c.seed)));
  CHECK(r.report.loss_diff.empty());
}

TEST_CASE("training is deterministic and reduces the loss") {
  TrainConfig c = tiny_config();
  c.epochs = 8;
  int calls = 0;
  const TrainResult a = train(c, [&](int, double, double) { ++calls; });
  const TrainResult b = train(c);
  CHECK(calls == 8);
  CHECK(flatten(a.params) == flatten(b.params));
  CHECK(a.report.loss_diff == b.report.loss_diff);
  CHECK(a.report.loss_diff.back() < a.report.loss_diff.front());
  CHECK(a.report.loss_align.back() < a.report.loss_align.front());
  c.seed = 6;
  CHECK(flatten(train(c).params) != flatten(a.params));
}

TEST_CASE("config validation") {
  TrainConfig c = tiny_config();
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.batch_size = 2000;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("divergence is reported with its epoch") {
  TrainConfig c = tiny_config();
  c.learning_rate = 1e300;
  try {
    train(c);
    FAIL("expected divergence");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("loss CSV layout") {
  TrainReport r;
  r.loss_diff = {1.5, 0.25};
  r.loss_align = {-0.5, -0.75};
  CHECK(format_loss_csv(r) == "epoch,loss_diff,loss_align\n0,1.5,-0.5\n1,0.25,-0.75\n");
}
