#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <json.hpp>

#include "flowguide/flow_net.hpp"
#include "flowguide/sampler.hpp"
#include "flowguide/toy_world.hpp"

namespace flowguide {

struct EnergyOptions {
  std::size_t cap = 4000;  // per-side subsample cap for the all-pairs means
  std::uint64_t seed = 0;
};

/// 2 E|A-B| - E|A-A'| - E|B-B'| with V-statistic (all-pairs, diagonal
/// included) means. Both batches are sorted lexicographically first, so any
/// permutation of a batch gives the same value.
double energy_distance(const SampleBatch& a, const SampleBatch& b, const EnergyOptions& options = {});

/// Mean pairwise Euclidean distance between the columns of a and b.
/// Rows of the outer loop run in parallel; the final sum is in row order.
double mean_pairwise_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
/// Serial reference for mean_pairwise_distance.
double mean_pairwise_distance_reference(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct GridSpec {
  double lo = -1.5;
  double hi = 1.5;
  int resolution = 40;     // cells per axis
  double smoothing = 1e-4; // additive mass per cell before renormalization
};

struct GridHistogram {
  GridSpec spec;
  std::vector<std::size_t> counts;  // row-major, resolution^2
  std::vector<double> mass;         // smoothed, sums to 1

  /// Points outside the bounds are clamped into boundary cells.
  static GridHistogram build(const SampleBatch& batch, const GridSpec& spec);
  /// Cell index of a point after clamping.
  static std::size_t cell_of(const Point2& p, const GridSpec& spec);
};

/// sum_k (p_k - q_k)(log p_k - log q_k) over smoothed grid masses.
double symmetric_kl_grid(const SampleBatch& a, const SampleBatch& b, const GridSpec& spec = {});
double symmetric_kl(const std::vector<double>& p, const std::vector<double>& q);

struct Coverage {
  double in_support = 0.0;  // fraction inside C1 u C2 dilated by the margin
  double c1 = 0.0;          // fraction assigned to C1 (nearest cell among in-support points)
  double c2 = 0.0;
};

Coverage coverage(const SampleBatch& batch, double margin);

/// Mean <h(f(x, 0)), phi(x)> over the batch.
double alignment_score(const ModelParams& params, const SampleBatch& batch);

struct EmbedPair {
  Point2 phi1, phi2;
  double feature_sq = 0.0;  // |phi1 - phi2|^2
  double d2 = 0.0;          // lambda <E1[phi] - E2[phi], phi1 - phi2>
  double d2_stderr = 0.0;   // Monte-Carlo standard error of d2
  double ratio = 0.0;       // d2 / feature_sq
  bool used = false;        // false when feature_sq < 1e-6
};

struct EmbedScanReport {
  std::vector<EmbedPair> pairs;
  double a = 0.0;  // min ratio
  double b = 0.0;  // max ratio
  double b_over_a = 0.0;
  double pearson = 0.0;  // correlation of d2 with feature_sq over used pairs
  double lambda = 0.0;
  std::size_t n_per_condition = 0;
};

/// Random pairs of unit vectors from stream (seed, kEmbedPairs, 0).
std::vector<std::pair<Point2, Point2>> random_unit_pairs(std::size_t count, std::uint64_t seed);

/// Draws guided batches for each condition of each pair (same sampler seed
/// for every condition, so chain i sees identical noise in both members of a
/// pair), estimates E[phi(x)] by batch means and evaluates d2 per pair.
EmbedScanReport embed_scan(const VelocityField& field, const std::vector<std::pair<Point2, Point2>>& pairs,
                           double lambda, std::size_t n_per_condition, const SamplerConfig& sampler);
EmbedScanReport embed_scan(const ModelParams& params, const std::vector<std::pair<Point2, Point2>>& pairs,
                           double lambda, std::size_t n_per_condition, const SamplerConfig& sampler);

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y);

nlohmann::json to_json(const Coverage& c);
nlohmann::json to_json(const EmbedScanReport& r);

}  // namespace flowguide
