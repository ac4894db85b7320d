#pragma once

#include <cmath>

#include <Eigen/Core>

#include "flowguide/errors.hpp"

namespace flowguide {

/// A point of the 2D data space (and of the sampler state).
using Point2 = Eigen::Vector2d;

/// N x d array of feature rows. The toy world uses N = 1, d = 2.
struct FeatureMap {
  Eigen::MatrixXd rows;
  bool normalized = false;

  FeatureMap() = default;
  explicit FeatureMap(Eigen::MatrixXd r, bool unit = false) : rows(std::move(r)), normalized(unit) {}

  /// Normalizes every row to unit length. Throws DegenerateDirectionError when
  /// a row has norm below `floor`.
  static FeatureMap unit_rows(const Eigen::MatrixXd& r, double floor = 1e-12) {
    FeatureMap out(r, true);
    for (Eigen::Index n = 0; n < r.rows(); ++n) {
      const double norm = r.row(n).norm();
      if (!(norm >= floor)) throw DegenerateDirectionError("feature row has near-zero norm");
      out.rows.row(n) /= norm;
    }
    return out;
  }

  /// 1 x 2 map holding a single unit row.
  static FeatureMap single(const Point2& v) { return unit_rows(v.transpose()); }

  Eigen::Index num_rows() const { return rows.rows(); }
  Eigen::Index dim() const { return rows.cols(); }

  /// True when every row norm is within tol of 1.
  bool rows_are_unit(double tol = 1e-6) const {
    for (Eigen::Index n = 0; n < rows.rows(); ++n)
      if (std::abs(rows.row(n).norm() - 1.0) > tol) return false;
    return true;
  }
};

}  // namespace flowguide
