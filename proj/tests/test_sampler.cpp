#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include "flowguide/errors.hpp"
#include "flowguide/sampler.hpp"
#include "test_support.hpp"

using namespace flowguide;
using flowguide::testing::random_params;
using flowguide::testing::small_arch;

namespace {

Guidance ipa_guidance(const Point2& target, double lambda) {
  return {make_ipa(make_weight_matrix(WeightKind::kFullMap, 1), FeatureMap::single(target)), lambda,
          GuidanceConvention::kProp2};
}

SamplerConfig sde(std::uint64_t seed, int steps = 20) {
  SamplerConfig c;
  c.mode = SamplerMode::kSde;
  c.steps = steps;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("score conversion in the point-mass world") {
  const Point2 x(1.0, 0.0);
  const Point2 s = velocity_to_score(x / 0.5, x, 0.5);
  CHECK(s == Point2(-4.0, 0.0));
  CHECK(velocity_to_score(Point2::Zero(), Point2::Zero(), 0.3) == Point2::Zero());
  CHECK_THROWS_AS(velocity_to_score(x, x, 0.0), DomainError);
  CHECK_THROWS_AS(velocity_to_score(x, x, 0.9995), DomainError);
}

TEST_CASE("score conversion reproduces the gaussian world") {
  Stream rng(1, Role::kGradcheck, 0);
  for (int i = 0; i < 1000; ++i) {
    const Point2 x(rng.normal(), rng.normal());
    const double t = rng.uniform(1e-3, 1 - 1e-3);
    for (double s0 : {0.0, 0.5, 1.0}) {
      const Point2 s = velocity_to_score(gaussian_world_velocity(x, t, s0), x, t);
      const Point2 expected = gaussian_world_score(x, t, s0);
      CHECK((s - expected).norm() <= 1e-12 * std::max(1.0, expected.norm()));
    }
  }
}

TEST_CASE("drift is v - t s computed from two separate calls") {
  const ModelParams p = random_params(small_arch(), 3);
  Stream rng(2, Role::kGradcheck, 0);
  for (int i = 0; i < 50; ++i) {
    const Point2 x(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double t = rng.uniform(0.01, 0.99);
    const Point2 v = forward_velocity(p, x, t).v;
    const Point2 expected = v - t * velocity_to_score(v, x, t);
    CHECK((drift(p, x, t, nullptr) - expected).norm() <= 1e-12 * (1 + expected.norm()));
    CHECK((drift(p, x, t, nullptr) - ((2 - t) * v + x)).norm() <= 1e-12 * (1 + expected.norm()));
  }
}

TEST_CASE("guidance term is -2 lambda t grad_x <h, phi_c>") {
  const ModelParams p = random_params(small_arch(), 4);
  const Point2 target(0.6, -0.8);
  const Guidance g = ipa_guidance(target, 1.7);
  auto scalar = [&](const Point2& x, double t) {
    const auto r = forward_velocity(p, x, t);
    return forward_projection(p, r.tape).rows.row(0).dot(target.transpose());
  };
  Stream rng(3, Role::kGradcheck, 0);
  for (int i = 0; i < 30; ++i) {
    const Point2 x(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double t = rng.uniform(0.05, 0.95);
    const Point2 term = drift(p, x, t, &g) - drift(p, x, t, nullptr);
    Point2 fd;
    const double e = 1e-6;
    for (int j = 0; j < 2; ++j) {
      Point2 a = x, b = x;
      a[j] += e;
      b[j] -= e;
      fd[j] = (scalar(a, t) - scalar(b, t)) / (2 * e);
    }
    const Point2 expected = -2.0 * 1.7 * t * fd;
    CHECK((term - expected).norm() <= 1e-3 * std::max(expected.norm(), 1e-6));
    Guidance eq7 = g;
    eq7.convention = GuidanceConvention::kEq7;
    CHECK((drift(p, x, t, &eq7) - drift(p, x, t, nullptr) - 0.5 * term).norm() <= 1e-12);
  }
}

TEST_CASE("batched drift equals the serial drift") {
  const ModelParams p = random_params(small_arch(), 5);
  const Guidance g = ipa_guidance(Point2(-1, 0), 2.0);
  NetworkField field(p);
  Eigen::MatrixXd x(2, 9);
  Stream rng(4, Role::kGradcheck, 0);
  for (int i = 0; i < 9; ++i) x.col(i) << rng.uniform(-1, 1), rng.uniform(-1, 1);
  for (double t : {1.0, 0.5, 1e-4}) {
    const Eigen::MatrixXd d = batch_drift(field, x, t, &g, 1e-3);
    for (int i = 0; i < 9; ++i) CHECK((d.col(i) - drift(p, x.col(i), t, &g)).norm() <= 1e-12 * (1 + d.col(i).norm()));
  }
}

TEST_CASE("one ODE step by hand") {
  const ModelParams p = random_params(small_arch(), 6);
  SamplerConfig c;
  c.mode = SamplerMode::kOde;
  c.steps = 1;
  c.seed = 9;
  const SampleBatch b = sample_ode(p, c, 3);
  for (std::uint32_t i = 0; i < 3; ++i) {
    const auto z = Stream(9, Role::kSamplerInit, i).normal_pair();
    const Point2 x0(z[0], z[1]);
    const Point2 expected = x0 - (1.0 - 1e-3) * forward_velocity(p, x0, 1.0).v;
    CHECK((b.points[i] - expected).norm() <= 1e-12);
  }
}

TEST_CASE("zero diffusion follows repeated drift calls") {
  const ModelParams p = random_params(small_arch(), 7);
  SamplerConfig c = sde(3, 10);
  c.diffusion_scale = 0.0;
  const SampleBatch b = sample_sde(p, c, 2);
  for (std::uint32_t i = 0; i < 2; ++i) {
    const auto z = Stream(3, Role::kSamplerInit, i).normal_pair();
    Point2 x(z[0], z[1]);
    for (int k = 0; k < c.steps; ++k) x -= c.dt() * drift(p, x, c.grid_time(k), nullptr);
    CHECK((b.points[i] - x).norm() <= 1e-11);
  }
}

TEST_CASE("zero guidance is bit-identical to plain SDE") {
  const ModelParams p = random_params(small_arch(), 8);
  SamplerConfig guided = sde(4);
  guided.mode = SamplerMode::kGuidedSde;
  guided.guidance = ipa_guidance(Point2(0, -1), 0.0);
  CHECK(sample_sde(p, guided, 300).points == sample_sde(p, sde(4), 300).points);
}

TEST_CASE("sampling is deterministic and thread-count independent") {
  const ModelParams p = random_params(small_arch(), 9);
  SamplerConfig c = sde(5);
  c.mode = SamplerMode::kGuidedSde;
  c.guidance = ipa_guidance(Point2(0, -1), 2.0);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const SampleBatch a = sample_sde(p, c, 300);
  omp_set_num_threads(3);
  const SampleBatch b = sample_sde(p, c, 300);
  omp_set_num_threads(saved);
  CHECK(a.points == b.points);
  // chain i depends only on its own streams
  const SampleBatch head = sample_sde(p, c, 5);
  for (int i = 0; i < 5; ++i) CHECK(head.points[i] == a.points[i]);
}

TEST_CASE("SDE and ODE agree in the gaussian world") {
  GaussianField field(0.5);
  SamplerConfig c;
  c.steps = 250;
  c.seed = 1;
  c.mode = SamplerMode::kOde;
  const Eigen::MatrixXd ode = run_sampler(field, c, 4000).final.as_matrix();
  c.mode = SamplerMode::kSde;
  const Eigen::MatrixXd sde_x = run_sampler(field, c, 4000).final.as_matrix();
  for (const auto* m : {&ode, &sde_x}) {
    const Eigen::Vector2d mean = m->rowwise().mean();
    const Eigen::Vector2d var = (m->colwise() - mean).array().square().rowwise().mean();
    const double expected = gaussian_world_variance(1e-3, 0.5);
    CHECK(std::abs(mean[0]) <= 4 * std::sqrt(expected / 4000));
    CHECK(var[0] == doctest::Approx(expected).epsilon(0.08));
    CHECK(var[1] == doctest::Approx(expected).epsilon(0.08));
  }
}

TEST_CASE("trajectory recording") {
  GaussianField field(1.0);
  SamplerConfig c;
  c.steps = 4;
  c.mode = SamplerMode::kOde;
  c.record_trajectory = true;
  const TrajectoryRecord r = run_sampler(field, c, 3);
  REQUIRE(r.states.size() == 5);
  CHECK(r.states.back() == r.final.as_matrix());
}

TEST_CASE("config validation") {
  const ModelParams p = random_params(small_arch(), 1);
  SamplerConfig c = sde(1);
  c.steps = 0;
  CHECK_THROWS_AS(sample_sde(p, c, 3), ConfigError);
  c = sde(1);
  c.mode = SamplerMode::kGuidedSde;
  CHECK_THROWS_AS(sample_sde(p, c, 3), ConfigError);
  c.guidance = ipa_guidance(Point2(1, 0), -1.0);
  CHECK_THROWS_AS(sample_sde(p, c, 3), ConfigError);
  CHECK_THROWS_AS(sample_ode(p, sde(1), 3), ConfigError);
}
