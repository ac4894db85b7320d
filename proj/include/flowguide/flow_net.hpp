#pragma once

// Dense ReLU network with a tapped hidden layer and a projection head.
//
//   trunk:  [x; t] -> L1 -> ReLU -> ... -> L(depth-1) -> ReLU -> L(depth) -> v
//   head:   ReLU output of trunk layer `tap` -> H1 -> ReLU -> H2 -> u,  h = u / |u|
//
// The functions in this header are the serial single-example reference path.
// The batched kernels used for training and sampling live in batch_kernels.hpp
// and are tested against these.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowguide/feature_map.hpp"

namespace flowguide {

struct Arch {
  int depth = 5;         // number of trunk linear layers
  int width = 512;       // trunk hidden width
  int tap = 3;           // 1-based trunk layer whose ReLU output feeds the head
  int in_dim = 3;        // 2 spatial coordinates + time
  int out_dim = 2;
  int head_width = 512;  // hidden width of the 2-layer projection head
  int feature_dim = 2;

  bool operator==(const Arch&) const = default;
  void validate() const;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

struct ModelParams {
  Arch arch;
  std::vector<DenseLayer> trunk;
  std::vector<DenseLayer> head;  // always two layers

  /// All-zero parameters with the shapes implied by `arch`.
  static ModelParams zeros(const Arch& arch);

  /// Checks shape composition, tap range and finiteness.
  void validate() const;
  std::size_t num_values() const;
  void set_zero();
};

/// Visits every array in canonical order: trunk W1, b1, ..., head W1, b1, W2, b2.
/// `f(name, array)` receives an Eigen::MatrixXd& or Eigen::VectorXd&.
template <class Params, class F>
void visit_arrays(Params& p, F&& f) {
  for (std::size_t k = 0; k < p.trunk.size(); ++k) {
    f("trunk." + std::to_string(k) + ".weight", p.trunk[k].weight);
    f("trunk." + std::to_string(k) + ".bias", p.trunk[k].bias);
  }
  for (std::size_t k = 0; k < p.head.size(); ++k) {
    f("head." + std::to_string(k) + ".weight", p.head[k].weight);
    f("head." + std::to_string(k) + ".bias", p.head[k].bias);
  }
}

/// Weights uniform on +-sqrt(6 / (fan_in + fan_out)), biases zero.
ModelParams init_params(const Arch& arch, std::uint64_t seed);

struct ForwardTape {
  Eigen::Vector3d input;                  // (x1, x2, t)
  std::vector<Eigen::VectorXd> pre;       // per trunk layer, before activation
  std::vector<Eigen::VectorXd> post;      // per trunk layer, after activation (last = v)

  const Eigen::VectorXd& tapped(const Arch& arch) const { return post[arch.tap - 1]; }
};

struct VelocityResult {
  Point2 v;
  ForwardTape tape;
};

VelocityResult forward_velocity(const ModelParams& params, const Point2& x, double t);

/// Unit-normalized head output h(f(x, t)) as a 1 x feature_dim map.
FeatureMap forward_projection(const ModelParams& params, const ForwardTape& tape);

/// Raw (unnormalized) head output u.
Eigen::VectorXd forward_projection_raw(const ModelParams& params, const ForwardTape& tape);

struct Gradients {
  ModelParams params;  // same shapes as the network
  Point2 x;
};

/// Reverse-mode gradient of <v_grad, v> + <h_grad, h> with respect to all
/// parameters and to the spatial input. h is the normalized head output.
Gradients backward(const ModelParams& params, const ForwardTape& tape,
                   const std::optional<Point2>& v_grad,
                   const std::optional<FeatureMap>& h_grad);

}  // namespace flowguide
