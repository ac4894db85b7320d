#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flowguide/errors.hpp"
#include "flowguide/evaluator.hpp"
#include "flowguide/toy_world.hpp"

using namespace flowguide;

namespace {

// Oracle values from tests/oracles/compute_oracles.py (numpy, 2000^2 midpoints per cell).
struct BlockOracle {
  Point2 target;
  Cell block;
  double mass;
};

const BlockOracle kBlocks[] = {
    {{-1, 0}, {-1.0, -0.75, 0.75, 1.0}, 0.022655754515420127},
    {{-1, 0}, {0.375, 0.625, -0.25, 0.0}, 0.04213396612779467},
    {{0, -1}, {-1.0, -0.75, 0.75, 1.0}, 0.02079105498327652},
    {{0, -1}, {0.375, 0.625, -0.25, 0.0}, 0.004143007011109801},
};

std::size_t count_in(const SampleBatch& b, const Cell& c) {
  std::size_t n = 0;
  for (const auto& p : b.points)
    if (p[0] >= c.x_lo && p[0] < c.x_hi && p[1] >= c.y_lo && p[1] < c.y_hi) ++n;
  return n;
}

}  // namespace

TEST_CASE("phi at a hand-checked point") {
  const Point2 f = phi(Point2(-0.25, 0.5));
  CHECK(f[0] == doctest::Approx(0.5773502691896257).epsilon(1e-14));
  CHECK(f[1] == doctest::Approx(-0.8164965809277261).epsilon(1e-14));
}

TEST_CASE("phi is a unit vector with nonnegative first component") {
  const SampleBatch b = sample_p0(10000, 4);
  for (const auto& p : b.points) {
    const Point2 f = phi(p);
    CHECK(std::abs(f.norm() - 1.0) <= 1e-12);
    CHECK(f[0] >= 0.0);
  }
}

TEST_CASE("phi at the cell center and outside the support") {
  CHECK(phi(Point2(-0.5, 0.5)) == Point2(1.0, 0.0));
  CHECK(phi(Point2(0.5, -0.5)) == Point2(1.0, 0.0));
  CHECK_THROWS_AS(phi(Point2(0.5, 0.5)), DomainError);
  CHECK(phi_nearest(Point2(-0.5, 1.02)) == phi(Point2(-0.5, 1.0)));
  CHECK(project_to_support(Point2(0.3, 0.2)) == Point2(0.3, 0.0));
}

TEST_CASE("sample_p0 support, balance and determinism") {
  const SampleBatch b = sample_p0(100000, 17);
  std::size_t c1 = 0;
  for (const auto& p : b.points) {
    REQUIRE(ToyDensity::in_support(p));
    if (ToyDensity::kC1.contains(p)) ++c1;
  }
  const double frac = static_cast<double>(c1) / 100000.0;
  CHECK(frac >= 0.4905);
  CHECK(frac <= 0.5095);
  CHECK(sample_p0(50, 3).points == sample_p0(50, 3).points);
  CHECK(sample_p0(50, 3).points != sample_p0(50, 4).points);
}

TEST_CASE("quadrature agrees with the independent oracle") {
  for (const auto& o : kBlocks) {
    const ConditionFeature cond(o.target, 2.0);
    const double z = tilted_normalizer(cond, 400);
    CHECK(tilted_rect_mass(cond, o.block, 50, z) == doctest::Approx(o.mass).epsilon(1e-3));
    CHECK(tilted_rect_mass(cond, ToyDensity::kC1, 200, z) == doctest::Approx(0.5).epsilon(1e-9));
  }
}

TEST_CASE("centered sub-squares keep their area share under any tilt") {
  // phi depends only on the direction from the cell center near the center.
  for (double lambda : {0.5, 2.0, 4.0}) {
    const ConditionFeature cond(Point2(0.6, -0.8), lambda);
    const double z = tilted_normalizer(cond, 400);
    const double m = tilted_rect_mass(cond, Cell{-0.75, -0.25, 0.25, 0.75}, 100, z);
    CHECK(m == doctest::Approx(0.125).epsilon(1e-3));
  }
}

TEST_CASE("rejection sampler matches quadrature per block") {
  for (const Point2 target : {Point2(-1, 0), Point2(0, -1)}) {
    const ConditionFeature cond(target, 2.0);
    const SampleBatch b = rejection_sample(cond, 50000, 8);
    for (const auto& p : b.points) REQUIRE(ToyDensity::in_support(p));
    for (const auto& o : kBlocks) {
      if (o.target != target) continue;
      const double frac = static_cast<double>(count_in(b, o.block)) / 50000.0;
      CHECK(std::abs(frac - o.mass) <= 0.01);
    }
  }
}

TEST_CASE("untilted oracle is p0") {
  const ConditionFeature cond(Point2(0, 1), 0.0);
  const SampleBatch a = rejection_sample(cond, 2000, 1);
  const double d = energy_distance(a, sample_p0(2000, 2));
  const double self = energy_distance(sample_p0(2000, 3), sample_p0(2000, 4));
  CHECK(d <= 5.0 * self);
}

TEST_CASE("rejection sampler refuses a hopeless envelope") {
  // <phi, [-1, 0]> <= -0.57, so acceptance is below exp(-157).
  CHECK_THROWS_AS(rejection_sample(ConditionFeature(Point2(-1, 0), 100.0), 10, 0), EnvelopeError);
}

TEST_CASE("condition feature validation") {
  CHECK_THROWS_AS(ConditionFeature(Point2(1, 1), 1.0), DomainError);
  CHECK_THROWS_AS(ConditionFeature(Point2(1, 0), -1.0), DomainError);
}

TEST_CASE("gaussian world closed forms") {
  const Point2 x(0.7, -0.2);
  CHECK(gaussian_world_variance(0.3, 0.8) == doctest::Approx(0.40360000000000007).epsilon(1e-15));
  const Point2 s = gaussian_world_score(x, 0.3, 0.8);
  CHECK(s[0] == doctest::Approx(-1.7343904856293355).epsilon(1e-14));
  CHECK(s[1] == doctest::Approx(0.4955401387512388).epsilon(1e-14));
  const Point2 v = gaussian_world_velocity(x, 0.3, 0.8);
  CHECK(v[0] == doctest::Approx(-0.25668979187314184).epsilon(1e-14));
  CHECK(v[1] == doctest::Approx(0.07333994053518338).epsilon(1e-14));

  // point mass: v = x / t, s = -x / t^2
  const Point2 e(1.0, 0.0);
  CHECK(gaussian_world_velocity(e, 0.5, 0.0) == Point2(2.0, 0.0));
  CHECK(gaussian_world_score(e, 0.5, 0.0) == Point2(-4.0, 0.0));
  CHECK(gaussian_world_variance(0.25, 1.0) == 0.75 * 0.75 + 0.25 * 0.25);
  CHECK_THROWS_AS(gaussian_world_score(e, 1.0, 1.0), DomainError);
}

TEST_CASE("rejection histogram matches quadrature on the evaluation grid") {
  const GridSpec spec;
  const double width = (spec.hi - spec.lo) / spec.resolution;
  for (const double lambda : {0.0, 1.0, 2.0}) {
    for (const Point2 target : {Point2(-1, 0), Point2(0, -1)}) {
      const ConditionFeature cond(target, lambda);
      const double z = tilted_normalizer(cond, 400);
      std::vector<double> expected(static_cast<std::size_t>(spec.resolution * spec.resolution));
      const double denom = 1.0 + static_cast<double>(expected.size()) * spec.smoothing;
      for (int i = 0; i < spec.resolution; ++i) {
        for (int j = 0; j < spec.resolution; ++j) {
          const Cell rect{spec.lo + i * width, spec.lo + (i + 1) * width, spec.lo + j * width, spec.lo + (j + 1) * width};
          expected[GridHistogram::cell_of(rect.center(), spec)] =
              (tilted_rect_mass(cond, rect, 15, z) + spec.smoothing) / denom;
        }
      }
      const auto hist = GridHistogram::build(rejection_sample(cond, 50000, 21), spec);
      CAPTURE(lambda);
      CHECK(symmetric_kl(hist.mass, expected) <= 0.02);
    }
  }
}
