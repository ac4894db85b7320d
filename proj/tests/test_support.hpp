#pragma once

#include <cmath>
#include <vector>

#include "flowguide/flow_net.hpp"
#include "flowguide/rng.hpp"

namespace flowguide::testing {

inline std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  visit_arrays(p, [&](const std::string&, const auto& a) { out.insert(out.end(), a.data(), a.data() + a.size()); });
  return out;
}

inline double max_abs_diff(const ModelParams& a, const ModelParams& b) {
  const auto x = flatten(a), y = flatten(b);
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

inline double max_abs(const ModelParams& a) {
  double m = 0.0;
  for (double v : flatten(a)) m = std::max(m, std::abs(v));
  return m;
}

inline Arch small_arch(int width = 16, int depth = 4, int tap = 2) {
  Arch a;
  a.depth = depth;
  a.width = width;
  a.tap = tap;
  a.head_width = width;
  return a;
}

/// Initialized net with nonzero biases, so every code path sees them.
inline ModelParams random_params(const Arch& arch, std::uint64_t seed) {
  ModelParams p = init_params(arch, seed);
  Stream rng(seed, Role::kGradcheck, 999);
  visit_arrays(p, [&](const std::string& name, auto& a) {
    if (name.ends_with("bias"))
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(-0.3, 0.3);
  });
  return p;
}

}  // namespace flowguide::testing
