#include "flowguide/trainer.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>

#include "flowguide/batch_kernels.hpp"
#include "flowguide/checkpoint.hpp"
#include "flowguide/errors.hpp"
#include "flowguide/rng.hpp"
#include "flowguide/toy_world.hpp"

namespace flowguide {

namespace {

std::vector<std::span<double>> flat_views(ModelParams& p) {
  std::vector<std::span<double>> out;
  visit_arrays(p, [&](const std::string&, auto& a) {
    out.emplace_back(a.data(), static_cast<std::size_t>(a.size()));
  });
  return out;
}

std::vector<std::span<const double>> flat_views(const ModelParams& p) {
  std::vector<std::span<const double>> out;
  visit_arrays(p, [&](const std::string&, const auto& a) {
    out.emplace_back(a.data(), static_cast<std::size_t>(a.size()));
  });
  return out;
}

void add_into(ModelParams& dst, const ModelParams& src) {
  auto d = flat_views(dst);
  auto s = flat_views(src);
  for (std::size_t k = 0; k < d.size(); ++k)
    for (std::size_t i = 0; i < d[k].size(); ++i) d[k][i] += s[k][i];
}

struct ChunkResult {
  double diff_sum = 0.0;
  double align_sum = 0.0;
  ModelParams grads;
};

void chunk_loss(const ModelParams& params, std::span<const TrainingExample> chunk, double beta, double scale,
                ChunkResult& r) {
  const auto n = static_cast<Eigen::Index>(chunk.size());
  Eigen::MatrixXd input(3, n), xdot(2, n), target(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ex = chunk[static_cast<std::size_t>(i)];
    const Interpolant ip = interpolate(ex.x0, ex.x1, ex.t);
    input.col(i) << ip.x_t[0], ip.x_t[1], ex.t;
    xdot.col(i) = ip.xdot;
    target.col(i) = phi(ex.x0);
  }
  BatchTape tape;
  batch_forward(params, input, tape, true);
  const Eigen::MatrixXd residual = tape.velocity() - xdot;

  r.diff_sum = residual.squaredNorm();
  r.align_sum = -(tape.head_unit.array() * target.array()).sum();
  if (r.grads.trunk.empty() || !(r.grads.arch == params.arch))
    r.grads = ModelParams::zeros(params.arch);
  else
    r.grads.set_zero();
  const Eigen::MatrixXd v_grad = 2.0 * scale * residual;
  if (beta != 0.0) {
    const Eigen::MatrixXd h_grad = -beta * scale * target;
    batch_backward(params, tape, &v_grad, &h_grad, &r.grads, nullptr);
  } else {
    batch_backward(params, tape, &v_grad, nullptr, &r.grads, nullptr);
  }
}

}  // namespace

void TrainConfig::validate() const {
  arch.validate();
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (dataset_size < 1) throw ConfigError("dataset_size must be >= 1");
  if (batch_size > dataset_size) throw ConfigError("batch_size must not exceed dataset_size");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"dataset_size", dataset_size},
          {"learning_rate", learning_rate},
          {"beta", beta},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_epsilon", adam_epsilon},
          {"seed", seed},
          {"schedule", "alpha_t=1-t,sigma_t=t"},
          {"arch", arch_to_json(arch)}};
}

Interpolant interpolate(const Point2& x0, const Point2& x1, double t) {
  return {(1.0 - t) * x0 + t * x1, x1 - x0};
}

CompoundLoss compound_loss(const ModelParams& params, std::span<const TrainingExample> batch, double beta) {
  if (batch.empty()) throw ShapeError("compound_loss: empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  const auto chunk = static_cast<std::size_t>(kChunkColumns);
  const std::size_t num_chunks = (batch.size() + chunk - 1) / chunk;
  // Per-chunk gradient buffers are kept between calls; reallocating them for
  // every batch dominated the system time of a training run.
  // Bound to a plain reference: inside the parallel region the thread_local
  // name would resolve to each worker's own (empty) instance.
  thread_local std::vector<ChunkResult> cache;
  if (cache.size() < num_chunks) cache.resize(num_chunks);
  std::vector<ChunkResult>& parts = cache;

  std::vector<std::exception_ptr> failures(num_chunks);

#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < num_chunks; ++c) {
    try {
      const std::size_t begin = c * chunk;
      const std::size_t len = std::min(chunk, batch.size() - begin);
      chunk_loss(params, batch.subspan(begin, len), beta, scale, parts[c]);
    } catch (...) {
      failures[c] = std::current_exception();
    }
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);

  CompoundLoss out;
  out.grads = parts[0].grads;
  double diff = parts[0].diff_sum, align = parts[0].align_sum;
  for (std::size_t c = 1; c < num_chunks; ++c) {
    add_into(out.grads, parts[c].grads);
    diff += parts[c].diff_sum;
    align += parts[c].align_sum;
  }
  out.diff = diff * scale;
  out.align = align * scale;
  return out;
}

CompoundLoss compound_loss_reference(const ModelParams& params, std::span<const TrainingExample> batch,
                                     double beta) {
  if (batch.empty()) throw ShapeError("compound_loss_reference: empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  CompoundLoss out;
  out.grads = ModelParams::zeros(params.arch);
  for (const auto& ex : batch) {
    const Interpolant ip = interpolate(ex.x0, ex.x1, ex.t);
    const auto fwd = forward_velocity(params, ip.x_t, ex.t);
    const FeatureMap h = forward_projection(params, fwd.tape);
    const Point2 target = phi(ex.x0);
    const Point2 residual = fwd.v - ip.xdot;
    out.diff += residual.squaredNorm() * scale;
    out.align -= h.rows.row(0).dot(target.transpose()) * scale;
    std::optional<FeatureMap> h_grad;
    if (beta != 0.0) h_grad = FeatureMap(Eigen::MatrixXd(-beta * scale * target.transpose()));
    const Gradients g = backward(params, fwd.tape, Point2(2.0 * scale * residual), h_grad);
    add_into(out.grads, g.params);
  }
  return out;
}

AdamState AdamState::zeros_like(const ModelParams& params) {
  return {ModelParams::zeros(params.arch), ModelParams::zeros(params.arch), 0};
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const AdamConfig& config) {
  if (state.step < 0) throw ShapeError("adam_step: negative step counter");
  auto p = flat_views(params);
  auto g = flat_views(grads);
  auto m = flat_views(state.m);
  auto v = flat_views(state.v);
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
    throw ShapeError("adam_step: state/gradient shapes differ from params");
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (g[k].size() != p[k].size() || m[k].size() != p[k].size() || v[k].size() != p[k].size())
      throw ShapeError("adam_step: state/gradient shapes differ from params");
    for (double x : g[k])
      if (!std::isfinite(x)) throw NumericError("adam_step: non-finite gradient entry");
  }
  const std::int64_t step = state.step + 1;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  // Moments of parameters that stop receiving gradient (dead ReLU units)
  // decay geometrically; once subnormal, every step on them costs ~100x.
  // Flushing below 1e-300 changes updates by less than lr * 1e-292.
  constexpr double kFlush = 1e-300;
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      const double gi = g[k][i];
      const double mi = config.beta1 * m[k][i] + (1.0 - config.beta1) * gi;
      const double vi = config.beta2 * v[k][i] + (1.0 - config.beta2) * (std::abs(gi) < 1e-150 ? 0.0 : gi * gi);
      m[k][i] = std::abs(mi) < kFlush ? 0.0 : mi;
      v[k][i] = vi < kFlush ? 0.0 : vi;
      const double m_hat = m[k][i] / c1;
      const double v_hat = v[k][i] / c2;
      p[k][i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
  state.step = step;
}

TrainResult train(const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  TrainResult result{init_params(config.arch, config.seed), {}};
  if (config.epochs == 0) return result;

  const SampleBatch data = sample_p0(static_cast<std::size_t>(config.dataset_size), config.seed);
  const AdamConfig adam{config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_epsilon};
  AdamState state = AdamState::zeros_like(result.params);
  const std::size_t n = data.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t num_batches = n / batch;  // remainder dropped
  std::vector<std::size_t> order(n);
  std::vector<TrainingExample> examples(batch);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto e = static_cast<std::uint32_t>(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Stream shuffle(config.seed, Role::kShuffle, e);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);
    Stream noise(config.seed, Role::kTrainNoise, e);
    Stream times(config.seed, Role::kTrainTime, e);

    double diff_sum = 0.0, align_sum = 0.0;
    for (std::size_t b = 0; b < num_batches; ++b) {
      for (std::size_t i = 0; i < batch; ++i) {
        const auto z = noise.normal_pair();
        examples[i] = {data.points[order[b * batch + i]], Point2(z[0], z[1]), times.uniform()};
      }
      auto diverged = [&](const std::string& why) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << ", batch " << b << ": " << why;
        return NumericError(msg.str());
      };
      CompoundLoss loss;
      try {
        loss = compound_loss(result.params, examples, config.beta);
      } catch (const DegenerateDirectionError& e) {
        throw diverged(e.what());
      } catch (const DomainError& e) {
        throw diverged(e.what());
      }
      if (!std::isfinite(loss.diff) || !std::isfinite(loss.align)) throw diverged("non-finite loss");
      adam_step(result.params, loss.grads, state, adam);
      diff_sum += loss.diff;
      align_sum += loss.align;
    }
    const double diff = diff_sum / static_cast<double>(num_batches);
    const double align = align_sum / static_cast<double>(num_batches);
    result.report.loss_diff.push_back(diff);
    result.report.loss_align.push_back(align);
    if (on_epoch) on_epoch(epoch, diff, align);
  }
  result.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::string format_loss_csv(const TrainReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss_diff,loss_align\n";
  for (std::size_t e = 0; e < report.loss_diff.size(); ++e)
    out << e << ',' << report.loss_diff[e] << ',' << report.loss_align[e] << '\n';
  return out.str();
}

}  // namespace flowguide
