#include "flowguide/toy_world.hpp"

#include <algorithm>
#include <cmath>

#include "flowguide/errors.hpp"
#include "flowguide/rng.hpp"

namespace flowguide {

Eigen::MatrixXd SampleBatch::as_matrix() const {
  Eigen::MatrixXd m(2, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = points[i];
  return m;
}

SampleBatch SampleBatch::from_matrix(const Eigen::MatrixXd& m, std::uint64_t seed, std::string origin) {
  SampleBatch b;
  b.seed = seed;
  b.origin = std::move(origin);
  b.points.reserve(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.cols(); ++i) b.points.emplace_back(m(0, i), m(1, i));
  return b;
}

double Cell::distance(const Point2& p) const {
  const double dx = std::max({x_lo - p[0], 0.0, p[0] - x_hi});
  const double dy = std::max({y_lo - p[1], 0.0, p[1] - y_hi});
  return std::hypot(dx, dy);
}

ConditionFeature::ConditionFeature(Point2 t, double l) : target(std::move(t)), lambda(l) {
  if (std::abs(target.norm() - 1.0) > 1e-6) throw DomainError("condition feature must have unit norm");
  if (!std::isfinite(lambda) || lambda < 0.0) throw DomainError("guidance scale must be finite and >= 0");
}

SampleBatch sample_p0(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("sample_p0: n must be >= 1");
  Stream rng(seed, Role::kData, 0);
  SampleBatch b;
  b.seed = seed;
  b.origin = "p0";
  b.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Cell& cell = rng.uniform() < 0.5 ? ToyDensity::kC1 : ToyDensity::kC2;
    const double u = rng.uniform();
    const double v = rng.uniform();
    b.points.emplace_back(cell.x_lo + u * (cell.x_hi - cell.x_lo), cell.y_lo + v * (cell.y_hi - cell.y_lo));
  }
  return b;
}

Point2 phi(const Point2& x, const PhiNormalization& norm) {
  const Cell* cell = nullptr;
  if (ToyDensity::kC1.contains(x))
    cell = &ToyDensity::kC1;
  else if (ToyDensity::kC2.contains(x))
    cell = &ToyDensity::kC2;
  else
    throw DomainError("phi: point outside C1 u C2");

  const double t = (x - cell->center()).norm() / norm.center;
  const double h = std::min(x[0] - cell->x_lo, cell->x_hi - x[0]) / norm.vertical_edge;
  const double w = std::min(x[1] - cell->y_lo, cell->y_hi - x[1]) / norm.horizontal_edge;
  const double r = std::hypot(t, h - w);
  if (r < 1e-12) return {1.0, 0.0};
  return {t / r, (h - w) / r};
}

Point2 project_to_support(const Point2& x) {
  auto clamp_to = [&](const Cell& c) {
    return Point2(std::clamp(x[0], c.x_lo, c.x_hi), std::clamp(x[1], c.y_lo, c.y_hi));
  };
  const Point2 a = clamp_to(ToyDensity::kC1);
  const Point2 b = clamp_to(ToyDensity::kC2);
  return (a - x).squaredNorm() <= (b - x).squaredNorm() ? a : b;
}

Point2 phi_nearest(const Point2& x, const PhiNormalization& norm) { return phi(project_to_support(x), norm); }

double tilted_density(const Point2& x, const ConditionFeature& cond) {
  if (!ToyDensity::in_support(x)) return 0.0;
  return 0.5 * std::exp(cond.lambda * phi(x).dot(cond.target));
}

SampleBatch rejection_sample(const ConditionFeature& cond, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("rejection_sample: n must be >= 1");
  constexpr std::size_t kProbe = 1'000'000;
  Stream rng(seed, Role::kOracle, 0);
  SampleBatch b;
  b.seed = seed;
  b.origin = "rejection";
  b.points.reserve(n);
  std::size_t proposals = 0;
  while (b.points.size() < n) {
    const Cell& cell = rng.uniform() < 0.5 ? ToyDensity::kC1 : ToyDensity::kC2;
    const Point2 x(cell.x_lo + rng.uniform() * (cell.x_hi - cell.x_lo),
                   cell.y_lo + rng.uniform() * (cell.y_hi - cell.y_lo));
    const double accept = std::exp(cond.lambda * (phi(x).dot(cond.target) - 1.0));
    if (rng.uniform() < accept) b.points.push_back(x);
    if (++proposals == kProbe && static_cast<double>(b.points.size()) < 1e-6 * kProbe)
      throw EnvelopeError("rejection_sample: acceptance rate below 1e-6; use a smaller lambda");
  }
  return b;
}

namespace {

// Midpoint sum of the unnormalized tilted density over `rect`, split into
// sub x sub pieces, each clipped against both support cells.
double tilted_rect_integral(const ConditionFeature& cond, const Cell& rect, int sub) {
  const double dx = (rect.x_hi - rect.x_lo) / sub;
  const double dy = (rect.y_hi - rect.y_lo) / sub;
  double total = 0.0;
  for (int i = 0; i < sub; ++i) {
    for (int j = 0; j < sub; ++j) {
      const Cell piece{rect.x_lo + i * dx, rect.x_lo + (i + 1) * dx, rect.y_lo + j * dy, rect.y_lo + (j + 1) * dy};
      for (const Cell& c : {ToyDensity::kC1, ToyDensity::kC2}) {
        const Cell clip{std::max(piece.x_lo, c.x_lo), std::min(piece.x_hi, c.x_hi), std::max(piece.y_lo, c.y_lo),
                        std::min(piece.y_hi, c.y_hi)};
        if (clip.x_hi <= clip.x_lo || clip.y_hi <= clip.y_lo) continue;
        total += clip.area() * tilted_density(clip.center(), cond);
      }
    }
  }
  return total;
}

}  // namespace

double tilted_normalizer(const ConditionFeature& cond, int grid) {
  return tilted_rect_integral(cond, Cell{-1.0, 1.0, -1.0, 1.0}, grid);
}

double tilted_rect_mass(const ConditionFeature& cond, const Cell& rect, int sub, double normalizer) {
  return tilted_rect_integral(cond, rect, sub) / normalizer;
}

double gaussian_world_variance(double t, double sigma0) {
  return (1.0 - t) * (1.0 - t) * sigma0 * sigma0 + t * t;
}

Point2 gaussian_world_score(const Point2& x, double t, double sigma0) {
  if (!(t > 0.0 && t < 1.0)) throw DomainError("gaussian_world_score: t must lie in (0, 1)");
  if (sigma0 < 0.0) throw DomainError("gaussian_world_score: sigma0 must be >= 0");
  return -x / gaussian_world_variance(t, sigma0);
}

Point2 gaussian_world_velocity(const Point2& x, double t, double sigma0) {
  if (!(t > 0.0 && t < 1.0)) throw DomainError("gaussian_world_velocity: t must lie in (0, 1)");
  if (sigma0 < 0.0) throw DomainError("gaussian_world_velocity: sigma0 must be >= 0");
  return x * (t - (1.0 - t) * sigma0 * sigma0) / gaussian_world_variance(t, sigma0);
}

}  // namespace flowguide
