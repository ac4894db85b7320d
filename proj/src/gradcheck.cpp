#include "flowguide/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "flowguide/potentials.hpp"
#include "flowguide/trainer.hpp"
#include "flowguide/toy_world.hpp"

// The finite-difference side is evaluated by a separate long double
// implementation of the network and potentials. Gradient entries near the
// 1e-8 denominator floor need ~1e-12 absolute accuracy, below what double
// differencing at step 1e-4 resolves.

namespace flowguide {

namespace {

using Real = long double;
using LMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using LVec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using LRow = Eigen::Matrix<Real, 1, Eigen::Dynamic>;

struct LayerLD {
  LMat weight;
  LVec bias;
};

struct NetLD {
  Arch arch;
  std::vector<LayerLD> trunk, head;

  explicit NetLD(const ModelParams& p) : arch(p.arch) {
    for (const auto& l : p.trunk) trunk.push_back({l.weight.cast<Real>(), l.bias.cast<Real>()});
    for (const auto& l : p.head) head.push_back({l.weight.cast<Real>(), l.bias.cast<Real>()});
  }

  // Same traversal order and storage order as visit_arrays.
  std::vector<Real*> slots() {
    std::vector<Real*> out;
    for (auto* group : {&trunk, &head})
      for (auto& l : *group) {
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) out.push_back(l.weight.data() + i);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) out.push_back(l.bias.data() + i);
      }
    return out;
  }
};

struct OutputLD {
  LVec v;
  LVec h;  // unit feature
  std::vector<bool> pattern;
};

OutputLD forward_ld(const NetLD& net, Real x0, Real x1, Real t) {
  OutputLD out;
  LVec a(3);
  a << x0, x1, t;
  LVec tapped;
  for (int k = 0; k < net.arch.depth; ++k) {
    LVec z = net.trunk[k].weight * a + net.trunk[k].bias;
    if (k + 1 < net.arch.depth) {
      for (Eigen::Index i = 0; i < z.size(); ++i) out.pattern.push_back(z[i] > 0);
      z = z.cwiseMax(Real(0));
    }
    a = z;
    if (k == net.arch.tap - 1) tapped = a;
  }
  out.v = a;
  LVec z = net.head[0].weight * tapped + net.head[0].bias;
  for (Eigen::Index i = 0; i < z.size(); ++i) out.pattern.push_back(z[i] > 0);
  const LVec u = net.head[1].weight * z.cwiseMax(Real(0)) + net.head[1].bias;
  out.h = u / u.norm();
  return out;
}

Real eval_ld(const PotentialSpec& spec, const LMat& h) {
  return std::visit(
      [&](const auto& p) -> Real {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IpaPotential>) {
          const LMat target = p.target.rows.template cast<Real>();
          if (p.weights.kind == WeightKind::kAverageConcept) {
            const LRow a = h.colwise().mean();
            const LRow b = target.colwise().mean();
            return a.dot(b) / (a.norm() * b.norm());
          }
          Real total = 0;
          for (Eigen::Index n = 0; n < h.rows(); ++n)
            for (Eigen::Index m = 0; m < h.rows(); ++m)
              total += static_cast<Real>(p.weights.entries(n, m)) * h.row(n).dot(target.row(m));
          return total;
        } else if constexpr (std::is_same_v<T, SpaPotential>) {
          const LRow target = p.target.template cast<Real>();
          const Real temp = p.temperature;
          LVec s(h.rows());
          for (Eigen::Index n = 0; n < h.rows(); ++n) s[n] = h.row(n).dot(target);
          const Real top = s.maxCoeff();
          Real sum = 0;
          for (Eigen::Index n = 0; n < s.size(); ++n) sum += std::exp((s[n] - top) / temp);
          return top + temp * std::log(sum);
        } else {
          Real total = 0;
          for (const auto& term : p.terms) total += static_cast<Real>(term.weight) * eval_ld(*term.spec, h);
          return total;
        }
      },
      spec.variant);
}

// Central difference at step h with one Richardson level (h, h/2), which
// cancels the O(h^2) truncation term. f(delta) evaluates at base + delta.
double central_difference(const std::function<Real(Real)>& f, double step) {
  const Real h = step;
  const Real d1 = (f(h) - f(-h)) / (2 * h);
  const Real d2 = (f(h / 2) - f(-h / 2)) / h;
  return static_cast<double>((4 * d2 - d1) / 3);
}

struct Probe {
  Real x0, x1, t;
};

std::vector<bool> patterns(const NetLD& net, const std::vector<Probe>& probes) {
  std::vector<bool> all;
  for (const auto& p : probes) {
    const auto b = forward_ld(net, p.x0, p.x1, p.t).pattern;
    all.insert(all.end(), b.begin(), b.end());
  }
  return all;
}

void record(GradcheckResult& result, double analytic, double numeric, const GradcheckOptions& opt) {
  result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic, numeric, opt.floor));
  ++result.checked;
}

// Checks `analytic` against differences of `f` over every parameter. Entries
// whose +-step perturbation changes a ReLU pattern at any probe are skipped.
void check_params(const ModelParams& params, const ModelParams& analytic, const std::vector<Probe>& probes,
                  const std::function<Real(const NetLD&)>& f, const GradcheckOptions& opt,
                  GradcheckResult& result) {
  NetLD net(params);
  const auto base_pattern = patterns(net, probes);
  const std::vector<Real*> slots = net.slots();
  std::vector<double> expected;
  visit_arrays(analytic, [&](const std::string&, const auto& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) expected.push_back(a.data()[i]);
  });
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const Real saved = *slots[k];
    bool kink = false;
    for (Real delta : {Real(opt.step), Real(-opt.step)}) {
      *slots[k] = saved + delta;
      kink = kink || patterns(net, probes) != base_pattern;
    }
    if (kink) {
      *slots[k] = saved;
      ++result.skipped;
      continue;
    }
    const double numeric = central_difference(
        [&](Real delta) {
          *slots[k] = saved + delta;
          return f(net);
        },
        opt.step);
    *slots[k] = saved;
    record(result, expected[k], numeric, opt);
  }
}

Eigen::MatrixXd random_unit_rows(Stream& rng, int n, int d) {
  Eigen::MatrixXd m(n, d);
  for (;;) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
    bool ok = true;
    for (int i = 0; i < n; ++i) ok = ok && m.row(i).norm() > 1e-3;
    if (ok) break;
  }
  return FeatureMap::unit_rows(m).rows;
}

PotentialSpec random_potential(PotentialVariant v, Stream& rng, const FeatureMap& target) {
  const int n = static_cast<int>(target.num_rows());
  const int index = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
  switch (v) {
    case PotentialVariant::kIpaFull:
      return make_ipa(make_weight_matrix(WeightKind::kFullMap, n), target);
    case PotentialVariant::kIpaMask: {
      std::vector<int> mask;
      for (int i = 1; i <= n; ++i)
        if (rng.uniform() < 0.5) mask.push_back(i);
      if (mask.empty()) mask.push_back(index);
      return make_ipa(make_weight_matrix(WeightKind::kMask, n, mask), target);
    }
    case PotentialVariant::kIpaAverage:
      return make_ipa(make_weight_matrix(WeightKind::kAverageConcept, n), target);
    case PotentialVariant::kIpaSingle:
      return make_ipa(make_weight_matrix(WeightKind::kSingleConcept, n, {index}), target);
    case PotentialVariant::kSpaT01:
      return make_spa(target, index, 0.1);
    case PotentialVariant::kSpaT1:
      return make_spa(target, index, 1.0);
    case PotentialVariant::kSpaT10:
      return make_spa(target, index, 10.0);
    case PotentialVariant::kComposite: {
      std::vector<std::pair<double, PotentialSpec>> terms;
      terms.emplace_back(rng.uniform(0.1, 1.0), make_ipa(make_weight_matrix(WeightKind::kAverageConcept, n), target));
      terms.emplace_back(rng.uniform(0.1, 1.0), make_spa(target, index, 0.1));
      return make_composite(std::move(terms));
    }
  }
  throw std::logic_error("unknown potential variant");
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic), floor);
}

ModelParams random_small_net(Stream& rng, int max_width) {
  auto width = [&] { return 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_width - 1))); };
  Arch arch;
  arch.depth = 2 + static_cast<int>(rng.below(4));
  arch.width = width();
  arch.head_width = width();
  arch.tap = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(arch.depth - 1)));
  ModelParams p = init_params(arch, rng.next_u64());
  auto jitter = [&](DenseLayer& l) {
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-0.5, 0.5);
  };
  for (auto& l : p.trunk) jitter(l);
  for (auto& l : p.head) jitter(l);
  return p;
}

GradcheckResult gradcheck_flow_net(const GradcheckOptions& opt) {
  GradcheckResult result{"flow_net_backward", opt.trials, 0, 0, 0.0, opt.tolerance};
  Stream rng(opt.seed, Role::kGradcheck, 1);
  for (int trial = 0; trial < opt.trials; ++trial) {
    const ModelParams params = random_small_net(rng);
    const Point2 x(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
    const double t = rng.uniform();
    const Point2 gv(rng.normal(), rng.normal());
    const Point2 gh(rng.normal(), rng.normal());

    auto scalar = [&](const NetLD& net, Real x0, Real x1) {
      const OutputLD o = forward_ld(net, x0, x1, t);
      return o.v.dot(gv.cast<Real>()) + o.h.dot(gh.cast<Real>());
    };
    const auto fwd = forward_velocity(params, x, t);
    const Gradients g = backward(params, fwd.tape, gv, FeatureMap(Eigen::MatrixXd(gh.transpose())));
    const std::vector<Probe> probes{{x[0], x[1], t}};
    check_params(params, g.params, probes, [&](const NetLD& net) { return scalar(net, x[0], x[1]); }, opt, result);

    const NetLD net(params);
    const auto base = forward_ld(net, x[0], x[1], t).pattern;
    for (int j = 0; j < 2; ++j) {
      auto at = [&](Real delta) {
        Real xs[2] = {x[0], x[1]};
        xs[j] += delta;
        return std::make_pair(xs[0], xs[1]);
      };
      const auto up = at(opt.step), down = at(-opt.step);
      if (forward_ld(net, up.first, up.second, t).pattern != base ||
          forward_ld(net, down.first, down.second, t).pattern != base) {
        ++result.skipped;
        continue;
      }
      const double numeric = central_difference(
          [&](Real delta) {
            const auto p = at(delta);
            return scalar(net, p.first, p.second);
          },
          opt.step);
      record(result, g.x[j], numeric, opt);
    }
  }
  return result;
}

GradcheckResult gradcheck_compound_loss(const GradcheckOptions& opt) {
  GradcheckResult result{"compound_loss", opt.trials, 0, 0, 0.0, opt.tolerance};
  Stream rng(opt.seed, Role::kGradcheck, 2);
  for (int trial = 0; trial < opt.trials; ++trial) {
    const ModelParams params = random_small_net(rng);
    const double beta = rng.uniform(0.0, 1.0);
    const SampleBatch x0 = sample_p0(4, rng.next_u64());
    std::vector<TrainingExample> batch;
    std::vector<Probe> probes;
    for (const auto& p : x0.points) {
      const Point2 x1(rng.normal(), rng.normal());
      const double t = rng.uniform();
      batch.push_back({p, x1, t});
      const Point2 xt = interpolate(p, x1, t).x_t;
      probes.push_back({xt[0], xt[1], t});
    }
    auto scalar = [&](const NetLD& net) {
      Real diff = 0, align = 0;
      for (const auto& ex : batch) {
        const Interpolant ip = interpolate(ex.x0, ex.x1, ex.t);
        const OutputLD o = forward_ld(net, ip.x_t[0], ip.x_t[1], ex.t);
        diff += (o.v - ip.xdot.cast<Real>()).squaredNorm();
        align -= o.h.dot(phi(ex.x0).cast<Real>());
      }
      const Real n = static_cast<Real>(batch.size());
      return diff / n + static_cast<Real>(beta) * align / n;
    };
    const CompoundLoss loss = compound_loss(params, batch, beta);
    check_params(params, loss.grads, probes, scalar, opt, result);
  }
  return result;
}

GradcheckResult gradcheck_potential(PotentialVariant variant, const GradcheckOptions& opt) {
  GradcheckResult result{"potential_" + variant_name(variant), opt.trials, 0, 0, 0.0, opt.tolerance};
  Stream rng(opt.seed, Role::kGradcheck, 100 + static_cast<std::uint32_t>(variant));
  for (int trial = 0; trial < opt.trials; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(8));
    const int d = 1 + static_cast<int>(rng.below(16));
    // Average-concept potentials are undefined when a mean feature vanishes;
    // keep both means well away from zero.
    FeatureMap target(random_unit_rows(rng, n, d), true);
    FeatureMap h(random_unit_rows(rng, n, d), true);
    while (target.rows.colwise().mean().norm() < 0.1 || h.rows.colwise().mean().norm() < 0.1) {
      target = FeatureMap(random_unit_rows(rng, n, d), true);
      h = FeatureMap(random_unit_rows(rng, n, d), true);
    }
    const PotentialSpec spec = random_potential(variant, rng, target);
    const Eigen::MatrixXd analytic = grad_potential(spec, h);
    LMat hl = h.rows.cast<Real>();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) {
        const Real saved = hl(i, j);
        const double numeric = central_difference(
            [&](Real delta) {
              hl(i, j) = saved + delta;
              return eval_ld(spec, hl);
            },
            opt.step);
        hl(i, j) = saved;
        record(result, analytic(i, j), numeric, opt);
      }
    }
  }
  return result;
}

std::vector<GradcheckResult> gradcheck_all(const GradcheckOptions& opt) {
  std::vector<GradcheckResult> out;
  out.push_back(gradcheck_flow_net(opt));
  out.push_back(gradcheck_compound_loss(opt));
  for (auto v : {PotentialVariant::kIpaFull, PotentialVariant::kIpaMask, PotentialVariant::kIpaAverage,
                 PotentialVariant::kIpaSingle, PotentialVariant::kSpaT01, PotentialVariant::kSpaT1,
                 PotentialVariant::kSpaT10, PotentialVariant::kComposite})
    out.push_back(gradcheck_potential(v, opt));
  return out;
}

std::string variant_name(PotentialVariant v) {
  switch (v) {
    case PotentialVariant::kIpaFull: return "ipa_full";
    case PotentialVariant::kIpaMask: return "ipa_mask";
    case PotentialVariant::kIpaAverage: return "ipa_avg";
    case PotentialVariant::kIpaSingle: return "ipa_single";
    case PotentialVariant::kSpaT01: return "spa_T0.1";
    case PotentialVariant::kSpaT1: return "spa_T1";
    case PotentialVariant::kSpaT10: return "spa_T10";
    case PotentialVariant::kComposite: return "composite";
  }
  return "unknown";
}

nlohmann::json to_json(const std::vector<GradcheckResult>& results) {
  auto suites = nlohmann::json::array();
  bool all = true;
  for (const auto& r : results) {
    suites.push_back({{"suite", r.suite},
                      {"trials", r.trials},
                      {"checked", r.checked},
                      {"skipped", r.skipped},
                      {"max_rel_error", r.max_rel_error},
                      {"tolerance", r.tolerance},
                      {"passed", r.passed()}});
    all = all && r.passed();
  }
  return {{"suites", suites}, {"passed", all}};
}

}  // namespace flowguide
