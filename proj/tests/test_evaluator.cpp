#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "flowguide/errors.hpp"
#include "flowguide/evaluator.hpp"
#include "test_support.hpp"

using namespace flowguide;
using flowguide::testing::random_params;
using flowguide::testing::small_arch;

namespace {

SampleBatch constant_batch(const Point2& p, std::size_t n) {
  SampleBatch b;
  b.points.assign(n, p);
  return b;
}

}  // namespace

TEST_CASE("energy distance identities") {
  const SampleBatch a = sample_p0(500, 1);
  CHECK(std::abs(energy_distance(a, a)) <= 1e-12);
  SampleBatch shuffled = a;
  std::reverse(shuffled.points.begin(), shuffled.points.end());
  CHECK(energy_distance(a, shuffled) == 0.0);
  const SampleBatch b = sample_p0(400, 2);
  CHECK(energy_distance(a, b) == doctest::Approx(energy_distance(b, a)).epsilon(1e-12));
  CHECK(energy_distance(constant_batch({0, 0}, 10), constant_batch({0.6, 0.8}, 10)) ==
        doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("energy distance is positive between different densities") {
  const SampleBatch a = sample_p0(1000, 3);
  const SampleBatch b = rejection_sample(ConditionFeature(Point2(0, -1), 2.0), 1000, 4);
  const SampleBatch c = sample_p0(1000, 5);
  CHECK(energy_distance(a, b) > 2.0 * energy_distance(a, c));
}

TEST_CASE("subsampling cap applies to large batches") {
  const SampleBatch a = sample_p0(5000, 6), b = sample_p0(5000, 7);
  const double capped = energy_distance(a, b, {1000, 1});
  CHECK(capped == energy_distance(a, b, {1000, 1}));
  CHECK(capped != energy_distance(a, b, {1000, 2}));
}

TEST_CASE("parallel pairwise mean matches the serial reference") {
  const Eigen::MatrixXd a = sample_p0(700, 8).as_matrix(), b = sample_p0(300, 9).as_matrix();
  CHECK(mean_pairwise_distance(a, b) == doctest::Approx(mean_pairwise_distance_reference(a, b)).epsilon(1e-13));
}

TEST_CASE("grid histogram") {
  GridSpec spec;
  CHECK(GridHistogram::cell_of({-1.5, -1.5}, spec) == 0);
  CHECK(GridHistogram::cell_of({1.5, 1.5}, spec) == 40 * 40 - 1);
  CHECK(GridHistogram::cell_of({9.0, -9.0}, spec) == 39);
  const GridHistogram h = GridHistogram::build(sample_p0(1000, 1), spec);
  double total = 0;
  for (double m : h.mass) total += m;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("symmetric KL on a two-cell layout") {
  GridSpec spec;
  spec.resolution = 2;
  const SampleBatch a = constant_batch({-1.0, -1.0}, 7);
  const SampleBatch b = constant_batch({1.0, 1.0}, 3);
  // numpy oracle: 2 (1/(1+4e)) log((1+e)/e), e = 1e-4
  CHECK(symmetric_kl_grid(a, b, spec) == doctest::Approx(18.41351532782191).epsilon(1e-12));
  CHECK(symmetric_kl_grid(a, b, spec) == symmetric_kl_grid(b, a, spec));
  CHECK(symmetric_kl_grid(a, a, spec) == 0.0);
}

TEST_CASE("coverage") {
  SampleBatch c1;
  c1.points = {{-0.5, 0.5}, {-0.1, 0.9}, {-0.9, 0.1}};
  const Coverage cv = coverage(c1, 0.0);
  CHECK(cv.in_support == 1.0);
  CHECK(cv.c1 == 1.0);
  CHECK(cv.c2 == 0.0);

  const Coverage p0 = coverage(sample_p0(100000, 2), 0.0);
  CHECK(p0.in_support == 1.0);
  CHECK(std::abs(p0.c1 - 0.5) <= 0.0095);

  SampleBatch out;
  out.points = {{0.5, 0.5}, {-0.5, 1.04}, {0.02, 0.02}};
  const Coverage o = coverage(out, 0.05);
  CHECK(o.in_support == doctest::Approx(2.0 / 3.0));
  CHECK(o.c1 + o.c2 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("alignment score") {
  const SampleBatch pts = sample_p0(1000, 10);
  const double untrained = alignment_score(init_params(Arch{}, 1), pts);
  CHECK(std::abs(untrained) <= 0.2);

  // constant head equal to phi at the only point in the batch
  Arch arch = small_arch(4, 3, 1);
  ModelParams p = ModelParams::zeros(arch);
  p.trunk[0].bias.setOnes();
  p.head[0].bias.setOnes();
  const Point2 x(-0.25, 0.5);
  p.head[1].bias = phi(x);
  SampleBatch one;
  one.points = {x, x};
  CHECK(alignment_score(p, one) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("pearson correlation") {
  CHECK(pearson_correlation({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson_correlation({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(pearson_correlation({1, 2, 3, 4}, {1, -1, -1, 1}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(pearson_correlation({1}, {1}), DomainError);
}

TEST_CASE("embed scan bookkeeping") {
  const ModelParams p = random_params(small_arch(8, 3, 1), 3);
  SamplerConfig s;
  s.steps = 5;
  std::vector<std::pair<Point2, Point2>> pairs{{{1, 0}, {1, 0}}, {{1, 0}, {0, 1}}, {{0.6, 0.8}, {-0.8, 0.6}}};
  const EmbedScanReport zero = embed_scan(p, pairs, 0.0, 50, s);
  CHECK_FALSE(zero.pairs[0].used);
  CHECK(zero.pairs[1].used);
  CHECK(zero.pairs[1].d2 == 0.0);
  const EmbedScanReport r = embed_scan(p, pairs, 2.0, 50, s);
  CHECK(r.a <= r.b);
  CHECK(r.pairs[1].feature_sq == doctest::Approx(2.0));
  CHECK(r.pairs[1].d2_stderr > 0.0);
  const auto j = to_json(r);
  for (const char* key : {"A", "B", "ratio", "correlation", "pairs"}) CHECK(j.contains(key));
}

TEST_CASE("random unit pairs") {
  const auto pairs = random_unit_pairs(20, 3);
  REQUIRE(pairs.size() == 20);
  for (const auto& [a, b] : pairs) {
    CHECK(a.norm() == doctest::Approx(1.0));
    CHECK(b.norm() == doctest::Approx(1.0));
  }
  CHECK(random_unit_pairs(20, 3) == pairs);
}
