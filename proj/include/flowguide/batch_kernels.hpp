#pragma once

// Batched forward/backward kernels. One column per example; every product is
// a dense GEMM. These are single-threaded: callers parallelize over fixed-size
// column chunks (kChunkColumns) and reduce in chunk order, which keeps results
// independent of the thread count.

#include <Eigen/Core>

#include "flowguide/flow_net.hpp"

namespace flowguide {

inline constexpr Eigen::Index kChunkColumns = 128;

struct BatchTape {
  Eigen::MatrixXd input;               // in_dim x B
  std::vector<Eigen::MatrixXd> pre;    // per trunk layer
  std::vector<Eigen::MatrixXd> post;   // per trunk layer, last = velocities (out_dim x B)
  bool has_head = false;
  Eigen::MatrixXd head_pre;            // head_width x B
  Eigen::MatrixXd head_post;
  Eigen::MatrixXd head_raw;            // feature_dim x B, before normalization
  Eigen::MatrixXd head_unit;           // unit columns
  Eigen::RowVectorXd head_norm;

  Eigen::Index batch() const { return input.cols(); }
  const Eigen::MatrixXd& velocity() const { return post.back(); }
};

/// Packs points (2 x B) and a common time into a 3 x B input block.
Eigen::MatrixXd make_input(const Eigen::MatrixXd& points, double t);

/// Forward pass over all columns of `input`. With `with_head`, also evaluates
/// the projection head; a column with |u| < 1e-12 raises DegenerateDirectionError.
void batch_forward(const ModelParams& params, const Eigen::MatrixXd& input,
                   BatchTape& tape, bool with_head);

/// Reverse pass for the scalar sum_b <v_grad_b, v_b> + <h_grad_b, h_b>.
/// Parameter gradients are accumulated into *param_grads when non-null;
/// spatial input gradients (2 x B) are written to *x_grad when non-null.
/// Either cotangent may be null, not both.
void batch_backward(const ModelParams& params, const BatchTape& tape,
                    const Eigen::MatrixXd* v_grad, const Eigen::MatrixXd* h_grad,
                    ModelParams* param_grads, Eigen::MatrixXd* x_grad);

}  // namespace flowguide
