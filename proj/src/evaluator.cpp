#include "flowguide/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowguide/batch_kernels.hpp"
#include "flowguide/errors.hpp"
#include "flowguide/rng.hpp"

namespace flowguide {

namespace {

// Lexicographically sorted copy, then a seeded subsample (kept in sorted order)
// when larger than the cap.
Eigen::MatrixXd canonical(const SampleBatch& batch, const EnergyOptions& options, std::uint32_t side) {
  std::vector<Point2> pts = batch.points;
  std::sort(pts.begin(), pts.end(), [](const Point2& p, const Point2& q) {
    return p[0] < q[0] || (p[0] == q[0] && p[1] < q[1]);
  });
  std::vector<std::size_t> keep(pts.size());
  std::iota(keep.begin(), keep.end(), std::size_t{0});
  if (options.cap > 0 && pts.size() > options.cap) {
    Stream rng(options.seed, Role::kSubsample, side);
    for (std::size_t i = 0; i < options.cap; ++i) std::swap(keep[i], keep[i + rng.below(pts.size() - i)]);
    keep.resize(options.cap);
    std::sort(keep.begin(), keep.end());
  }
  Eigen::MatrixXd m(2, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = pts[keep[i]];
  return m;
}

}  // namespace

double mean_pairwise_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::Index na = a.cols();
  const Eigen::Index nb = b.cols();
  std::vector<double> rows(static_cast<std::size_t>(na));
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < na; ++i)
    rows[static_cast<std::size_t>(i)] = (b.colwise() - a.col(i)).colwise().norm().sum();
  double total = 0.0;
  for (double r : rows) total += r;
  return total / (static_cast<double>(na) * static_cast<double>(nb));
}

double mean_pairwise_distance_reference(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) total += std::hypot(a(0, i) - b(0, j), a(1, i) - b(1, j));
  return total / (static_cast<double>(a.cols()) * static_cast<double>(b.cols()));
}

double energy_distance(const SampleBatch& a, const SampleBatch& b, const EnergyOptions& options) {
  if (a.size() == 0 || b.size() == 0) throw DomainError("energy_distance: empty batch");
  const Eigen::MatrixXd ca = canonical(a, options, 0);
  const Eigen::MatrixXd cb = canonical(b, options, 1);
  return 2.0 * mean_pairwise_distance(ca, cb) - mean_pairwise_distance(ca, ca) - mean_pairwise_distance(cb, cb);
}

std::size_t GridHistogram::cell_of(const Point2& p, const GridSpec& spec) {
  const double width = (spec.hi - spec.lo) / spec.resolution;
  auto index = [&](double v) {
    const double k = std::floor((v - spec.lo) / width);
    return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(spec.resolution - 1)));
  };
  // row = y index, column = x index
  return index(p[1]) * static_cast<std::size_t>(spec.resolution) + index(p[0]);
}

GridHistogram GridHistogram::build(const SampleBatch& batch, const GridSpec& spec) {
  if (spec.resolution < 1 || !(spec.hi > spec.lo) || !(spec.smoothing >= 0.0))
    throw ConfigError("grid histogram: invalid grid settings");
  if (batch.size() == 0) throw DomainError("grid histogram: empty batch");
  GridHistogram g;
  g.spec = spec;
  const std::size_t cells = static_cast<std::size_t>(spec.resolution) * spec.resolution;
  g.counts.assign(cells, 0);
  for (const auto& p : batch.points) ++g.counts[cell_of(p, spec)];
  g.mass.resize(cells);
  const double n = static_cast<double>(batch.size());
  const double denom = 1.0 + static_cast<double>(cells) * spec.smoothing;
  for (std::size_t k = 0; k < cells; ++k) g.mass[k] = (static_cast<double>(g.counts[k]) / n + spec.smoothing) / denom;
  return g;
}

double symmetric_kl(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ShapeError("symmetric_kl: histogram sizes differ");
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) total += (p[k] - q[k]) * (std::log(p[k]) - std::log(q[k]));
  return total;
}

double symmetric_kl_grid(const SampleBatch& a, const SampleBatch& b, const GridSpec& spec) {
  return symmetric_kl(GridHistogram::build(a, spec).mass, GridHistogram::build(b, spec).mass);
}

Coverage coverage(const SampleBatch& batch, double margin) {
  if (!(margin >= 0.0)) throw DomainError("coverage: margin must be >= 0");
  Coverage c;
  if (batch.size() == 0) return c;
  std::size_t inside = 0, in1 = 0, in2 = 0;
  for (const auto& p : batch.points) {
    const bool a = ToyDensity::kC1.contains(p, margin);
    const bool b = ToyDensity::kC2.contains(p, margin);
    if (!a && !b) continue;
    ++inside;
    if (a && (!b || ToyDensity::kC1.distance(p) <= ToyDensity::kC2.distance(p)))
      ++in1;
    else
      ++in2;
  }
  const double n = static_cast<double>(batch.size());
  c.in_support = static_cast<double>(inside) / n;
  c.c1 = static_cast<double>(in1) / n;
  c.c2 = static_cast<double>(in2) / n;
  return c;
}

double alignment_score(const ModelParams& params, const SampleBatch& batch) {
  if (batch.size() == 0) throw DomainError("alignment_score: empty batch");
  const Eigen::MatrixXd pts = batch.as_matrix();
  const Eigen::Index total = pts.cols();
  const Eigen::Index num_chunks = (total + kChunkColumns - 1) / kChunkColumns;
  std::vector<double> sums(static_cast<std::size_t>(num_chunks), 0.0);
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(num_chunks));
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < num_chunks; ++c) {
    try {
      const Eigen::Index begin = c * kChunkColumns;
      const Eigen::Index len = std::min(kChunkColumns, total - begin);
      BatchTape tape;
      batch_forward(params, make_input(pts.middleCols(begin, len), 0.0), tape, true);
      double s = 0.0;
      for (Eigen::Index i = 0; i < len; ++i)
        s += tape.head_unit.col(i).dot(phi(Point2(pts.col(begin + i))));
      sums[static_cast<std::size_t>(c)] = s;
    } catch (...) {
      failures[static_cast<std::size_t>(c)] = std::current_exception();
    }
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);
  double total_sum = 0.0;
  for (double s : sums) total_sum += s;
  return total_sum / static_cast<double>(total);
}

std::vector<std::pair<Point2, Point2>> random_unit_pairs(std::size_t count, std::uint64_t seed) {
  Stream rng(seed, Role::kEmbedPairs, 0);
  std::vector<std::pair<Point2, Point2>> out;
  out.reserve(count);
  const double two_pi = 2.0 * std::acos(-1.0);
  for (std::size_t i = 0; i < count; ++i) {
    const double a = two_pi * rng.uniform();
    const double b = two_pi * rng.uniform();
    out.emplace_back(Point2(std::cos(a), std::sin(a)), Point2(std::cos(b), std::sin(b)));
  }
  return out;
}

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("pearson_correlation: need two equal-length series");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

EmbedScanReport embed_scan(const VelocityField& field, const std::vector<std::pair<Point2, Point2>>& pairs,
                           double lambda, std::size_t n_per_condition, const SamplerConfig& sampler) {
  if (!(lambda >= 0.0)) throw DomainError("embed_scan: lambda must be >= 0");
  if (n_per_condition < 2) throw DomainError("embed_scan: need at least two samples per condition");
  EmbedScanReport report;
  report.lambda = lambda;
  report.n_per_condition = n_per_condition;

  auto features_for = [&](const Point2& target) {
    SamplerConfig cfg = sampler;
    cfg.mode = SamplerMode::kGuidedSde;
    cfg.guidance = Guidance{make_ipa(make_weight_matrix(WeightKind::kFullMap, 1), FeatureMap::single(target)),
                            lambda, sampler.guidance ? sampler.guidance->convention : GuidanceConvention::kProp2};
    const SampleBatch batch = run_sampler(field, cfg, n_per_condition).final;
    Eigen::MatrixXd f(2, static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) f.col(static_cast<Eigen::Index>(i)) = phi_nearest(batch.points[i]);
    return f;
  };

  std::vector<double> used_d2, used_sq;
  for (const auto& [p1, p2] : pairs) {
    EmbedPair e;
    e.phi1 = p1.normalized();
    e.phi2 = p2.normalized();
    const Point2 u = e.phi1 - e.phi2;
    e.feature_sq = u.squaredNorm();
    if (e.feature_sq >= 1e-6) {
      const Eigen::MatrixXd f1 = features_for(e.phi1);
      const Eigen::MatrixXd f2 = features_for(e.phi2);
      // Per-chain projected differences; chains are paired by their shared noise.
      const Eigen::RowVectorXd proj = u.transpose() * (f1 - f2);
      const double n = static_cast<double>(proj.size());
      const double mean = proj.mean();
      const double var = (proj.array() - mean).square().sum() / (n - 1.0);
      e.d2 = lambda * mean;
      e.d2_stderr = lambda * std::sqrt(var / n);
      e.ratio = e.d2 / e.feature_sq;
      e.used = true;
      used_d2.push_back(e.d2);
      used_sq.push_back(e.feature_sq);
    }
    report.pairs.push_back(e);
  }
  if (!used_d2.empty()) {
    bool first = true;
    for (const auto& e : report.pairs) {
      if (!e.used) continue;
      report.a = first ? e.ratio : std::min(report.a, e.ratio);
      report.b = first ? e.ratio : std::max(report.b, e.ratio);
      first = false;
    }
    report.b_over_a = report.a != 0.0 ? report.b / report.a : 0.0;
  }
  if (used_d2.size() >= 2) report.pearson = pearson_correlation(used_d2, used_sq);
  return report;
}

EmbedScanReport embed_scan(const ModelParams& params, const std::vector<std::pair<Point2, Point2>>& pairs,
                           double lambda, std::size_t n_per_condition, const SamplerConfig& sampler) {
  NetworkField field(params);
  return embed_scan(field, pairs, lambda, n_per_condition, sampler);
}

nlohmann::json to_json(const Coverage& c) {
  return {{"fraction_in_support", c.in_support}, {"fraction_c1", c.c1}, {"fraction_c2", c.c2}};
}

nlohmann::json to_json(const EmbedScanReport& r) {
  auto pairs = nlohmann::json::array();
  for (const auto& e : r.pairs) {
    pairs.push_back({{"phi1", {e.phi1[0], e.phi1[1]}},
                     {"phi2", {e.phi2[0], e.phi2[1]}},
                     {"feature_sq", e.feature_sq},
                     {"d2", e.d2},
                     {"d2_stderr", e.d2_stderr},
                     {"ratio", e.ratio},
                     {"used", e.used}});
  }
  return {{"A", r.a},           {"B", r.b},       {"ratio", r.b_over_a}, {"correlation", r.pearson},
          {"lambda", r.lambda}, {"n_per_condition", r.n_per_condition}, {"pairs", pairs}};
}

}  // namespace flowguide
