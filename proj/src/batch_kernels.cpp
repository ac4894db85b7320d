#include "flowguide/batch_kernels.hpp"

#include "flowguide/errors.hpp"

namespace flowguide {

namespace {

void affine_forward(const DenseLayer& layer, const Eigen::MatrixXd& in, Eigen::MatrixXd& out) {
  out.noalias() = layer.weight * in;
  out.colwise() += layer.bias;
}

// Accumulates parameter gradients (optional) and returns W^T dz when wanted.
void affine_backward(const DenseLayer& layer, const Eigen::MatrixXd& in, const Eigen::MatrixXd& dz,
                     DenseLayer* grad, Eigen::MatrixXd* din) {
  if (grad) {
    grad->weight.noalias() += dz * in.transpose();
    grad->bias += dz.rowwise().sum();
  }
  if (din) din->noalias() = layer.weight.transpose() * dz;
}

void relu_mask(const Eigen::MatrixXd& pre, Eigen::MatrixXd& d) {
  d = (pre.array() > 0.0).select(d, 0.0);
}

}  // namespace

Eigen::MatrixXd make_input(const Eigen::MatrixXd& points, double t) {
  Eigen::MatrixXd in(3, points.cols());
  in.topRows(2) = points;
  in.row(2).setConstant(t);
  return in;
}

void batch_forward(const ModelParams& params, const Eigen::MatrixXd& input, BatchTape& tape,
                   bool with_head) {
  const Arch& arch = params.arch;
  if (input.rows() != arch.in_dim) throw ShapeError("batch_forward: input rows != in_dim");
  if (!input.allFinite()) throw DomainError("batch_forward: non-finite input");
  tape.input = input;
  tape.pre.resize(arch.depth);
  tape.post.resize(arch.depth);
  for (int k = 0; k < arch.depth; ++k) {
    const Eigen::MatrixXd& in = k == 0 ? tape.input : tape.post[k - 1];
    affine_forward(params.trunk[k], in, tape.pre[k]);
    if (k == arch.depth - 1)
      tape.post[k] = tape.pre[k];
    else
      tape.post[k] = tape.pre[k].cwiseMax(0.0);
  }
  tape.has_head = with_head;
  if (!with_head) return;
  affine_forward(params.head[0], tape.post[arch.tap - 1], tape.head_pre);
  tape.head_post = tape.head_pre.cwiseMax(0.0);
  affine_forward(params.head[1], tape.head_post, tape.head_raw);
  tape.head_norm = tape.head_raw.colwise().norm();
  if (!(tape.head_norm.minCoeff() >= 1e-12))
    throw DegenerateDirectionError("projection output has near-zero norm");
  tape.head_unit = tape.head_raw.array().rowwise() / tape.head_norm.array();
}

void batch_backward(const ModelParams& params, const BatchTape& tape,
                    const Eigen::MatrixXd* v_grad, const Eigen::MatrixXd* h_grad,
                    ModelParams* param_grads, Eigen::MatrixXd* x_grad) {
  if (!v_grad && !h_grad) throw ShapeError("batch_backward: need a velocity or feature cotangent");
  const Arch& arch = params.arch;
  const Eigen::Index batch = tape.batch();
  const int tap = arch.tap - 1;

  Eigen::MatrixXd tap_grad;
  if (h_grad) {
    if (!tape.has_head) throw ShapeError("batch_backward: tape has no head activations");
    if (h_grad->rows() != arch.feature_dim || h_grad->cols() != batch)
      throw ShapeError("batch_backward: feature cotangent shape mismatch");
    // Through normalization: du = (g - h <h, g>) / |u|, column-wise.
    const Eigen::RowVectorXd proj = (tape.head_unit.array() * h_grad->array()).colwise().sum();
    Eigen::MatrixXd du = *h_grad - tape.head_unit * proj.asDiagonal();
    du = du.array().rowwise() / tape.head_norm.array();
    Eigen::MatrixXd da;
    affine_backward(params.head[1], tape.head_post, du, param_grads ? &param_grads->head[1] : nullptr, &da);
    relu_mask(tape.head_pre, da);
    affine_backward(params.head[0], tape.post[tap], da, param_grads ? &param_grads->head[0] : nullptr,
                    &tap_grad);
  }

  Eigen::MatrixXd d;
  int top;
  if (v_grad) {
    if (v_grad->rows() != arch.out_dim || v_grad->cols() != batch)
      throw ShapeError("batch_backward: velocity cotangent shape mismatch");
    d = *v_grad;
    top = arch.depth - 1;
  } else {
    // Nothing above the tap receives a cotangent.
    d = tap_grad;
    top = tap;
  }
  Eigen::MatrixXd next;
  for (int k = top; k >= 0; --k) {
    if (k < arch.depth - 1) {
      if (k == tap && h_grad && v_grad) d += tap_grad;
      relu_mask(tape.pre[k], d);
    }
    const Eigen::MatrixXd& in = k == 0 ? tape.input : tape.post[k - 1];
    const bool need_input = k > 0 || x_grad != nullptr;
    affine_backward(params.trunk[k], in, d, param_grads ? &param_grads->trunk[k] : nullptr,
                    need_input ? &next : nullptr);
    if (need_input) d.swap(next);
  }
  if (x_grad) *x_grad = d.topRows(2);
}

}  // namespace flowguide
