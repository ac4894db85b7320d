#include "flowguide/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

#include "flowguide/batch_kernels.hpp"
#include "flowguide/errors.hpp"
#include "flowguide/rng.hpp"

namespace flowguide {

void SamplerConfig::validate() const {
  if (steps < 1) throw ConfigError("sampler: steps must be >= 1");
  if (!(t_end > 0.0 && t_end < t_start && t_start <= 1.0))
    throw ConfigError("sampler: need 0 < t_end < t_start <= 1");
  if (guidance && !(guidance->lambda >= 0.0 && std::isfinite(guidance->lambda)))
    throw ConfigError("sampler: lambda must be finite and >= 0");
  if (mode == SamplerMode::kGuidedSde && !guidance) throw ConfigError("sampler: guided_sde needs a guidance spec");
  if (!(diffusion_scale >= 0.0)) throw ConfigError("sampler: diffusion scale must be >= 0");
}

void NetworkField::evaluate(const Eigen::MatrixXd& x, double t, const PotentialSpec* potential,
                            Eigen::MatrixXd& velocity, Eigen::MatrixXd* grad) const {
  BatchTape tape;
  batch_forward(params_, make_input(x, t), tape, potential != nullptr);
  velocity = tape.velocity();
  if (!potential) return;
  const Eigen::Index b = x.cols();
  Eigen::MatrixXd h_grad(params_.arch.feature_dim, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const FeatureMap h(Eigen::MatrixXd(tape.head_unit.col(i).transpose()), true);
    h_grad.col(i) = grad_potential(*potential, h).transpose();
  }
  batch_backward(params_, tape, nullptr, &h_grad, nullptr, grad);
}

void GaussianField::evaluate(const Eigen::MatrixXd& x, double t, const PotentialSpec* potential,
                             Eigen::MatrixXd& velocity, Eigen::MatrixXd*) const {
  if (potential) throw ConfigError("the Gaussian world has no feature head to guide");
  velocity = x * ((t - (1.0 - t) * sigma0_ * sigma0_) / gaussian_world_variance(t, sigma0_));
}

Point2 velocity_to_score(const Point2& v, const Point2& x, double t, double eps) {
  if (!(t >= eps && t <= 1.0 - eps)) throw DomainError("velocity_to_score: t outside [eps, 1 - eps]");
  return -((1.0 - t) * v + x) / t;
}

Point2 drift(const ModelParams& params, const Point2& x, double t, const Guidance* guidance, double eps) {
  const double tc = std::clamp(t, eps, 1.0 - eps);
  const auto fwd = forward_velocity(params, x, tc);
  Point2 d = fwd.v - tc * velocity_to_score(fwd.v, x, tc, eps);
  if (guidance && guidance->lambda != 0.0) {
    const FeatureMap h = forward_projection(params, fwd.tape);
    const FeatureMap h_grad(grad_potential(guidance->potential, h));
    const Gradients g = backward(params, fwd.tape, std::nullopt, h_grad);
    d -= guidance->factor() * guidance->lambda * tc * g.x;
  }
  if (!d.allFinite()) throw NumericError("drift: non-finite value");
  return d;
}

Eigen::MatrixXd batch_drift(const VelocityField& field, const Eigen::MatrixXd& x, double t,
                            const Guidance* guidance, double eps) {
  const double tc = std::clamp(t, eps, 1.0 - eps);
  const bool guided = guidance && guidance->lambda != 0.0;
  Eigen::MatrixXd v, grad;
  field.evaluate(x, tc, guided ? &guidance->potential : nullptr, v, guided ? &grad : nullptr);
  // v - t s with s = -((1 - t) v + x) / t
  Eigen::MatrixXd d = v + ((1.0 - tc) * v + x);
  if (guided) d -= (guidance->factor() * guidance->lambda * tc) * grad;
  return d;
}

TrajectoryRecord run_sampler(const VelocityField& field, const SamplerConfig& config, std::size_t n) {
  config.validate();
  if (n == 0) throw ConfigError("sampler: n must be >= 1");
  const auto total = static_cast<Eigen::Index>(n);
  const double dt = config.dt();
  const bool stochastic = config.mode != SamplerMode::kOde;
  const Guidance* guidance = config.mode == SamplerMode::kGuidedSde ? &*config.guidance : nullptr;

  TrajectoryRecord record;
  Eigen::MatrixXd result(2, total);
  if (config.record_trajectory) record.states.assign(config.steps + 1, Eigen::MatrixXd(2, total));

  const Eigen::Index num_chunks = (total + kChunkColumns - 1) / kChunkColumns;
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(num_chunks));

#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index c = 0; c < num_chunks; ++c) {
    try {
      const Eigen::Index begin = c * kChunkColumns;
      const Eigen::Index len = std::min(kChunkColumns, total - begin);
      Eigen::MatrixXd x(2, len);
      std::vector<Stream> noise;
      noise.reserve(static_cast<std::size_t>(len));
      for (Eigen::Index i = 0; i < len; ++i) {
        const auto chain = static_cast<std::uint32_t>(begin + i);
        Stream init(config.seed, Role::kSamplerInit, chain);
        const auto z = init.normal_pair();
        x.col(i) << z[0], z[1];
        noise.emplace_back(config.seed, Role::kSamplerNoise, chain);
      }
      if (config.record_trajectory) record.states[0].middleCols(begin, len) = x;

      Eigen::MatrixXd v, step, xi(2, len);
      for (int k = 0; k < config.steps; ++k) {
        const double t = config.grid_time(k);
        if (stochastic) {
          step = batch_drift(field, x, t, guidance, config.t_end);
        } else {
          field.evaluate(x, t, nullptr, v, nullptr);
          step = std::move(v);
        }
        if (!step.allFinite()) {
          std::ostringstream msg;
          msg << "sampler: non-finite drift at step " << k << " (t = " << t << ")";
          throw NumericError(msg.str());
        }
        x -= dt * step;
        if (stochastic) {
          for (Eigen::Index i = 0; i < len; ++i) {
            const auto z = noise[static_cast<std::size_t>(i)].normal_pair();
            xi.col(i) << z[0], z[1];
          }
          x += (config.diffusion_scale * std::sqrt(2.0 * t * dt)) * xi;
        }
        if (config.record_trajectory) record.states[k + 1].middleCols(begin, len) = x;
      }
      result.middleCols(begin, len) = x;
    } catch (...) {
      failures[static_cast<std::size_t>(c)] = std::current_exception();
    }
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);

  const char* origin = config.mode == SamplerMode::kOde ? "ode" : (guidance ? "guided_sde" : "sde");
  record.final = SampleBatch::from_matrix(result, config.seed, origin);
  return record;
}

SampleBatch sample_ode(const ModelParams& params, const SamplerConfig& config, std::size_t n) {
  if (config.mode != SamplerMode::kOde) throw ConfigError("sample_ode: mode must be ode");
  NetworkField field(params);
  return run_sampler(field, config, n).final;
}

SampleBatch sample_sde(const ModelParams& params, const SamplerConfig& config, std::size_t n) {
  if (config.mode == SamplerMode::kOde) throw ConfigError("sample_sde: mode must be sde or guided_sde");
  NetworkField field(params);
  return run_sampler(field, config, n).final;
}

}  // namespace flowguide
