#pragma once

// Reverse-time samplers on a uniform grid t_k = t_start - k dt, k = 0..steps,
// dt = (t_start - t_end) / steps. The state at t_end is returned as is.
//
//   ode:        x <- x - dt v(x, t_k)
//   sde:        x <- x - dt drift(x, t_k) + sqrt(2 t_k dt) xi
//   guided_sde: drift gains -c lambda t grad_x V(h(f(x, t)), phi_c),
//               c = 2 (default) or c = 1 (GuidanceConvention::kEq7).
//
// Chains are processed in fixed chunks; chain i always draws its initial noise
// from stream (seed, kSamplerInit, i) and its increments from
// (seed, kSamplerNoise, i), so results do not depend on the thread count.

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "flowguide/flow_net.hpp"
#include "flowguide/potentials.hpp"
#include "flowguide/toy_world.hpp"

namespace flowguide {

enum class SamplerMode { kOde, kSde, kGuidedSde };
enum class GuidanceConvention { kProp2, kEq7 };

struct Guidance {
  PotentialSpec potential;
  double lambda = 0.0;
  GuidanceConvention convention = GuidanceConvention::kProp2;

  /// Multiplier c in -c lambda t grad V.
  double factor() const { return convention == GuidanceConvention::kProp2 ? 2.0 : 1.0; }
};

struct SamplerConfig {
  int steps = 250;
  double t_start = 1.0;
  double t_end = 1e-3;  // also the clip epsilon for the score conversion
  SamplerMode mode = SamplerMode::kSde;
  std::optional<Guidance> guidance;
  std::uint64_t seed = 0;
  double diffusion_scale = 1.0;  // 0 turns the SDE into its drift-only skeleton
  bool record_trajectory = false;

  void validate() const;
  double dt() const { return (t_start - t_end) / steps; }
  double grid_time(int k) const { return t_start - k * dt(); }
};

struct TrajectoryRecord {
  std::vector<Eigen::MatrixXd> states;  // steps + 1 entries (2 x n) when recorded
  SampleBatch final;
};

/// Source of velocities (and optionally potential gradients) for a batch of points.
class VelocityField {
 public:
  virtual ~VelocityField() = default;
  /// Velocities at the columns of `x` (2 x B). When `potential` is non-null,
  /// also writes grad_x V(h(f(x, t)), .) to *grad.
  virtual void evaluate(const Eigen::MatrixXd& x, double t, const PotentialSpec* potential,
                        Eigen::MatrixXd& velocity, Eigen::MatrixXd* grad) const = 0;
};

/// The learned network.
class NetworkField final : public VelocityField {
 public:
  explicit NetworkField(const ModelParams& params) : params_(params) {}
  void evaluate(const Eigen::MatrixXd& x, double t, const PotentialSpec* potential, Eigen::MatrixXd& velocity,
                Eigen::MatrixXd* grad) const override;

 private:
  const ModelParams& params_;
};

/// Closed-form velocity of the Gaussian world; has no feature head.
class GaussianField final : public VelocityField {
 public:
  explicit GaussianField(double sigma0) : sigma0_(sigma0) {}
  void evaluate(const Eigen::MatrixXd& x, double t, const PotentialSpec* potential, Eigen::MatrixXd& velocity,
                Eigen::MatrixXd* grad) const override;

 private:
  double sigma0_;
};

/// Inverts v = -x/(1-t) - t/(1-t) s for the score s. DomainError when t is
/// outside [eps, 1 - eps].
Point2 velocity_to_score(const Point2& v, const Point2& x, double t, double eps = 1e-3);

/// Serial single-point drift through the reference network path.
/// t is clipped to [eps, 1 - eps] before use.
Point2 drift(const ModelParams& params, const Point2& x, double t, const Guidance* guidance, double eps = 1e-3);

/// Batched drift for a block of points (2 x B).
Eigen::MatrixXd batch_drift(const VelocityField& field, const Eigen::MatrixXd& x, double t,
                            const Guidance* guidance, double eps);

SampleBatch sample_ode(const ModelParams& params, const SamplerConfig& config, std::size_t n);
SampleBatch sample_sde(const ModelParams& params, const SamplerConfig& config, std::size_t n);

/// Generic driver used by both entry points and by the analytic-world tests.
TrajectoryRecord run_sampler(const VelocityField& field, const SamplerConfig& config, std::size_t n);

}  // namespace flowguide
