#pragma once

// The two-square toy density, its unit-circle feature map, a rejection
// sampler for the tilted density p0 * exp(lambda <phi(x), phi_c>), and the
// closed-form Gaussian world used to check score/velocity algebra.

#include <cstdint>
#include <string>
#include <vector>

#include "flowguide/feature_map.hpp"

namespace flowguide {

/// Ordered points plus the settings that produced them.
struct SampleBatch {
  std::vector<Point2> points;
  std::uint64_t seed = 0;
  std::string origin;  // short description of the generator, e.g. "p0"

  std::size_t size() const { return points.size(); }
  /// 2 x n matrix view (copy).
  Eigen::MatrixXd as_matrix() const;
  static SampleBatch from_matrix(const Eigen::MatrixXd& m, std::uint64_t seed, std::string origin);
};

struct Cell {
  double x_lo, x_hi, y_lo, y_hi;

  bool contains(const Point2& p, double margin = 0.0) const {
    return p[0] >= x_lo - margin && p[0] <= x_hi + margin && p[1] >= y_lo - margin && p[1] <= y_hi + margin;
  }
  Point2 center() const { return {0.5 * (x_lo + x_hi), 0.5 * (y_lo + y_hi)}; }
  double area() const { return (x_hi - x_lo) * (y_hi - y_lo); }
  /// Euclidean distance from p to the closed rectangle (0 inside).
  double distance(const Point2& p) const;
};

/// C1 = [-1,0] x [0,1], C2 = [0,1] x [-1,0]; p0 = 1/2 on their union.
struct ToyDensity {
  static constexpr Cell kC1{-1.0, 0.0, 0.0, 1.0};
  static constexpr Cell kC2{0.0, 1.0, -1.0, 0.0};

  static bool in_support(const Point2& p) { return kC1.contains(p) || kC2.contains(p); }
  static double density(const Point2& p) { return in_support(p) ? 0.5 : 0.0; }
};

/// Divisors turning raw distances into t, h, w. Defaults are the maximum
/// attainable values inside a unit cell, so each quantity lies in [0, 1].
struct PhiNormalization {
  double center = 0.70710678118654752440;  // sqrt(2)/2
  double vertical_edge = 0.5;
  double horizontal_edge = 0.5;
};

struct ConditionFeature {
  Point2 target;       // unit vector phi_c
  double lambda = 0.0; // guidance scale

  ConditionFeature(Point2 target, double lambda);
};

SampleBatch sample_p0(std::size_t n, std::uint64_t seed);

/// phi(x) for x in C1 u C2; DomainError outside. The exact cell center
/// (t = 0 and h == w, within 1e-12) maps to [1, 0].
Point2 phi(const Point2& x, const PhiNormalization& norm = {});

/// phi of the nearest support point; used when a generated sample falls
/// slightly outside the cells.
Point2 phi_nearest(const Point2& x, const PhiNormalization& norm = {});

/// Nearest point of C1 u C2.
Point2 project_to_support(const Point2& x);

/// Unnormalized tilted density p0(x) exp(lambda <phi(x), phi_c>).
double tilted_density(const Point2& x, const ConditionFeature& cond);

/// Exact draws from the tilted density by proposing from p0 and accepting with
/// probability exp(lambda (<phi(x), phi_c> - 1)). Raises EnvelopeError when a
/// probe batch of 1e6 proposals yields an acceptance rate below 1e-6.
SampleBatch rejection_sample(const ConditionFeature& cond, std::size_t n, std::uint64_t seed);

/// Mass of the normalized tilted density inside the axis-aligned rectangle,
/// by midpoint quadrature on `sub` x `sub` sub-cells clipped to the support.
/// `normalizer` is typically tilted_normalizer(cond, grid).
double tilted_rect_mass(const ConditionFeature& cond, const Cell& rect, int sub, double normalizer);
/// Normalizing constant of the tilted density on a grid x grid midpoint rule.
double tilted_normalizer(const ConditionFeature& cond, int grid);

/// Gaussian world: p0 = N(0, sigma0^2 I), p1 = N(0, I), x_t = (1-t) x0 + t x1.
double gaussian_world_variance(double t, double sigma0);
Point2 gaussian_world_score(const Point2& x, double t, double sigma0);
/// E[x1 - x0 | x_t = x] in closed form: x (t - (1-t) sigma0^2) / var_t.
Point2 gaussian_world_velocity(const Point2& x, double t, double sigma0);

}  // namespace flowguide
