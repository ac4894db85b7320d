#pragma once

// Similarity potentials between a predicted feature map h and a conditioning
// map h*, both N x d:
//
//   IPA      V = sum_{n,m} P_nm <h_n, h*_m>            (fixed weight matrix P)
//   average  V = cos(mean_n h_n, mean_m h*_m)          (P depends on h)
//   SPA      V = T log sum_n exp(<h_n, h*_i> / T)      (soft max over patches)
//   composite  V = sum_k lambda_k V_k
//
// Gradients are taken with respect to h as given (rows are not re-normalized
// here; the network normalizes its own output before the potential sees it).

#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "flowguide/feature_map.hpp"

namespace flowguide {

enum class WeightKind { kFullMap, kMask, kAverageConcept, kSingleConcept, kCustom };

struct WeightMatrix {
  WeightKind kind = WeightKind::kFullMap;
  int n = 1;
  Eigen::MatrixXd entries;  // n x n; empty for kAverageConcept
};

/// full_map -> I/N; mask(S) -> diag(1[n in S]) / |S|; single_concept(i) ->
/// column i equal to 1/N. Indices are 1-based. average_concept carries no
/// entries. Throws ConfigError for an empty mask or an out-of-range index.
WeightMatrix make_weight_matrix(WeightKind kind, int n, const std::vector<int>& indices = {});
/// Any nonnegative N x N matrix.
WeightMatrix custom_weight_matrix(Eigen::MatrixXd entries);

struct IpaPotential {
  WeightMatrix weights;
  FeatureMap target;
};

struct SpaPotential {
  Eigen::RowVectorXd target;  // the selected conditioning row h*_i
  double temperature = 1.0;
};

struct PotentialSpec;

struct CompositeTerm {
  double weight;
  std::shared_ptr<const PotentialSpec> spec;
};

struct CompositePotential {
  std::vector<CompositeTerm> terms;
};

struct PotentialSpec {
  std::variant<IpaPotential, SpaPotential, CompositePotential> variant;
};

PotentialSpec make_ipa(WeightMatrix weights, FeatureMap target);
/// SPA against row `index` (1-based) of `target`.
PotentialSpec make_spa(const FeatureMap& target, int index, double temperature);
PotentialSpec make_composite(std::vector<std::pair<double, PotentialSpec>> terms);

double eval_potential(const PotentialSpec& spec, const FeatureMap& h);
/// dV/dh, same shape as h.
Eigen::MatrixXd grad_potential(const PotentialSpec& spec, const FeatureMap& h);

/// Row-wise softmax weights sigma(<h_n, target> / T) used by SPA.
Eigen::VectorXd spa_weights(const Eigen::MatrixXd& h, const Eigen::RowVectorXd& target, double temperature);

/// Parsed text form of a potential, not yet bound to a conditioning map.
///   ipa:full | ipa:mask=2,3 | ipa:single=1 | ipa:avg | spa:i=1,T=0.1
///   comp:0.7*ipa:avg+0.3*spa:i=1,T=0.1
struct PotentialText {
  enum class Kind { kIpa, kSpa, kComposite } kind = Kind::kIpa;
  WeightKind weight_kind = WeightKind::kFullMap;
  std::vector<int> indices;  // mask set or single-concept index
  int spa_index = 1;
  double temperature = 1.0;
  std::vector<std::pair<double, PotentialText>> terms;
};

/// Throws ConfigError describing the offending token.
PotentialText parse_potential(std::string_view text);
std::string format_potential(const PotentialText& p);
/// Builds a PotentialSpec against conditioning map `target`.
PotentialSpec bind_potential(const PotentialText& p, const FeatureMap& target);

}  // namespace flowguide
