#include "flowguide/flow_net.hpp"

#include <cmath>

#include "flowguide/errors.hpp"
#include "flowguide/rng.hpp"

namespace flowguide {

namespace {

DenseLayer zero_layer(int out, int in) {
  return {Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)};
}

// y = W x + b with explicit loops; the reference path avoids Eigen products.
Eigen::VectorXd affine(const DenseLayer& layer, const Eigen::VectorXd& x) {
  const auto rows = layer.weight.rows();
  const auto cols = layer.weight.cols();
  Eigen::VectorXd y(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double acc = layer.bias[r];
    for (Eigen::Index c = 0; c < cols; ++c) acc += layer.weight(r, c) * x[c];
    y[r] = acc;
  }
  return y;
}

Eigen::VectorXd relu(const Eigen::VectorXd& z) {
  Eigen::VectorXd a(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
  return a;
}

// Accumulates dW += dz x^T, db += dz and returns W^T dz.
Eigen::VectorXd affine_backward(const DenseLayer& layer, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& dz, DenseLayer& grad) {
  const auto rows = layer.weight.rows();
  const auto cols = layer.weight.cols();
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    grad.bias[r] += dz[r];
    for (Eigen::Index c = 0; c < cols; ++c) {
      grad.weight(r, c) += dz[r] * x[c];
      dx[c] += layer.weight(r, c) * dz[r];
    }
  }
  return dx;
}

// Subgradient 0 at z == 0.
void relu_backward(const Eigen::VectorXd& pre, Eigen::VectorXd& d) {
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (!(pre[i] > 0.0)) d[i] = 0.0;
}

}  // namespace

void Arch::validate() const {
  if (depth < 2) throw ShapeError("network depth must be at least 2");
  if (tap < 1 || tap > depth - 1) throw ShapeError("tap layer must be a hidden layer in [1, depth-1]");
  if (width < 1 || head_width < 1 || in_dim < 1 || out_dim < 1 || feature_dim < 1)
    throw ShapeError("layer widths must be positive");
}

ModelParams ModelParams::zeros(const Arch& arch) {
  arch.validate();
  ModelParams p;
  p.arch = arch;
  for (int k = 0; k < arch.depth; ++k) {
    const int in = k == 0 ? arch.in_dim : arch.width;
    const int out = k == arch.depth - 1 ? arch.out_dim : arch.width;
    p.trunk.push_back(zero_layer(out, in));
  }
  p.head.push_back(zero_layer(arch.head_width, arch.width));
  p.head.push_back(zero_layer(arch.feature_dim, arch.head_width));
  return p;
}

void ModelParams::validate() const {
  arch.validate();
  if (static_cast<int>(trunk.size()) != arch.depth) throw ShapeError("trunk layer count != depth");
  if (head.size() != 2) throw ShapeError("projection head must have two layers");
  auto check_layer = [](const DenseLayer& l, Eigen::Index out, Eigen::Index in, const char* what) {
    if (l.weight.rows() != out || l.weight.cols() != in || l.bias.size() != out)
      throw ShapeError(std::string("layer shapes do not compose: ") + what);
    if (!l.weight.allFinite() || !l.bias.allFinite())
      throw NumericError(std::string("non-finite parameter in ") + what);
  };
  for (int k = 0; k < arch.depth; ++k) {
    const int in = k == 0 ? arch.in_dim : arch.width;
    const int out = k == arch.depth - 1 ? arch.out_dim : arch.width;
    check_layer(trunk[k], out, in, "trunk");
  }
  check_layer(head[0], arch.head_width, arch.width, "head");
  check_layer(head[1], arch.feature_dim, arch.head_width, "head");
}

std::size_t ModelParams::num_values() const {
  std::size_t n = 0;
  visit_arrays(*this, [&](const std::string&, const auto& a) { n += static_cast<std::size_t>(a.size()); });
  return n;
}

void ModelParams::set_zero() {
  visit_arrays(*this, [](const std::string&, auto& a) { a.setZero(); });
}

ModelParams init_params(const Arch& arch, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(arch);
  Stream rng(seed, Role::kInit, 0);
  auto fill = [&](DenseLayer& l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = rng.uniform(-bound, bound);
  };
  for (auto& l : p.trunk) fill(l);
  for (auto& l : p.head) fill(l);
  return p;
}

VelocityResult forward_velocity(const ModelParams& params, const Point2& x, double t) {
  if (!x.allFinite() || !std::isfinite(t)) throw DomainError("forward_velocity: non-finite input");
  if (t < 0.0 || t > 1.0) throw DomainError("forward_velocity: t must lie in [0, 1]");
  const int depth = params.arch.depth;
  VelocityResult out;
  out.tape.input = Eigen::Vector3d(x[0], x[1], t);
  out.tape.pre.reserve(depth);
  out.tape.post.reserve(depth);
  Eigen::VectorXd a = out.tape.input;
  for (int k = 0; k < depth; ++k) {
    Eigen::VectorXd z = affine(params.trunk[k], a);
    a = k == depth - 1 ? z : relu(z);
    out.tape.pre.push_back(std::move(z));
    out.tape.post.push_back(a);
  }
  out.v = Point2(a[0], a[1]);
  return out;
}

Eigen::VectorXd forward_projection_raw(const ModelParams& params, const ForwardTape& tape) {
  const Eigen::VectorXd hidden = relu(affine(params.head[0], tape.tapped(params.arch)));
  return affine(params.head[1], hidden);
}

FeatureMap forward_projection(const ModelParams& params, const ForwardTape& tape) {
  const Eigen::VectorXd u = forward_projection_raw(params, tape);
  const double norm = u.norm();
  if (!(norm >= 1e-12)) throw DegenerateDirectionError("projection output has near-zero norm");
  return FeatureMap(Eigen::MatrixXd(u.transpose() / norm), true);
}

Gradients backward(const ModelParams& params, const ForwardTape& tape,
                   const std::optional<Point2>& v_grad,
                   const std::optional<FeatureMap>& h_grad) {
  if (!v_grad && !h_grad) throw ShapeError("backward: need a velocity or feature cotangent");
  const Arch& arch = params.arch;
  if (static_cast<int>(tape.pre.size()) != arch.depth) throw ShapeError("backward: tape/network depth mismatch");
  if (h_grad && (h_grad->num_rows() != 1 || h_grad->dim() != arch.feature_dim))
    throw ShapeError("backward: feature cotangent must be 1 x feature_dim");

  Gradients g{ModelParams::zeros(arch), Point2::Zero()};
  const int depth = arch.depth;

  // Cotangent flowing into the tap activation from the head.
  Eigen::VectorXd tap_grad = Eigen::VectorXd::Zero(arch.width);
  if (h_grad) {
    const Eigen::VectorXd& tapped = tape.tapped(arch);
    const Eigen::VectorXd z1 = affine(params.head[0], tapped);
    const Eigen::VectorXd a1 = relu(z1);
    const Eigen::VectorXd u = affine(params.head[1], a1);
    const double norm = u.norm();
    if (!(norm >= 1e-12)) throw DegenerateDirectionError("projection output has near-zero norm");
    const Eigen::VectorXd h = u / norm;
    const Eigen::VectorXd gh = h_grad->rows.row(0).transpose();
    // d(u/|u|)^T gh = (gh - h <h, gh>) / |u|
    const Eigen::VectorXd du = (gh - h * h.dot(gh)) / norm;
    Eigen::VectorXd da1 = affine_backward(params.head[1], a1, du, g.params.head[1]);
    relu_backward(z1, da1);
    tap_grad = affine_backward(params.head[0], tapped, da1, g.params.head[0]);
  }

  Eigen::VectorXd d = Eigen::VectorXd::Zero(arch.out_dim);
  if (v_grad) d = *v_grad;
  for (int k = depth - 1; k >= 0; --k) {
    if (k < depth - 1) {
      // d holds the cotangent of post[k]
      if (k == arch.tap - 1) d += tap_grad;
      relu_backward(tape.pre[k], d);
    }
    const Eigen::VectorXd& in = k == 0 ? Eigen::VectorXd(tape.input) : tape.post[k - 1];
    d = affine_backward(params.trunk[k], in, d, g.params.trunk[k]);
  }
  g.x = Point2(d[0], d[1]);
  return g;
}

}  // namespace flowguide
