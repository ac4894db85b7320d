#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowguide/flow_net.hpp"

namespace flowguide {

struct TrainConfig {
  int epochs = 300;
  int batch_size = 512;
  int dataset_size = 100'000;
  double learning_rate = 1e-3;
  double beta = 0.5;  // weight of the alignment loss
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  Arch arch;

  void validate() const;
  nlohmann::json to_json() const;
};

struct TrainReport {
  std::vector<double> loss_diff;   // per-epoch mean
  std::vector<double> loss_align;  // per-epoch mean
  double seconds = 0.0;
  std::string checkpoint_path;
};

struct Interpolant {
  Point2 x_t;
  Point2 xdot;
};

/// Linear path x_t = (1-t) x0 + t x1 and its time derivative x1 - x0.
Interpolant interpolate(const Point2& x0, const Point2& x1, double t);

struct TrainingExample {
  Point2 x0;
  Point2 x1;
  double t;
};

struct CompoundLoss {
  double diff = 0.0;   // mean |v - xdot|^2
  double align = 0.0;  // -mean <h, phi(x0)>
  ModelParams grads;   // gradient of diff + beta * align
};

/// Batched kernel: fixed 128-column chunks run in parallel, reduced in chunk order.
CompoundLoss compound_loss(const ModelParams& params, std::span<const TrainingExample> batch, double beta);
/// Serial reference: one forward/backward per example through the
/// single-example network path.
CompoundLoss compound_loss_reference(const ModelParams& params, std::span<const TrainingExample> batch,
                                     double beta);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::int64_t step = 0;

  static AdamState zeros_like(const ModelParams& params);
};

/// One bias-corrected Adam update in place. NumericError on non-finite gradients.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const AdamConfig& config);

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

using EpochCallback = std::function<void(int epoch, double loss_diff, double loss_align)>;

TrainResult train(const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Writes "epoch,loss_diff,loss_align" rows.
std::string format_loss_csv(const TrainReport& report);

}  // namespace flowguide
