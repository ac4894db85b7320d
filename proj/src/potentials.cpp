#include "flowguide/potentials.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include "flowguide/errors.hpp"

namespace flowguide {

namespace {

void require_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(what) + ": feature maps must have the same N x d shape");
}

struct AverageParts {
  Eigen::RowVectorXd mean_h, mean_t;
  double norm_h, norm_t;
};

AverageParts average_parts(const Eigen::MatrixXd& h, const Eigen::MatrixXd& target) {
  AverageParts p;
  p.mean_h = h.colwise().mean();
  p.mean_t = target.colwise().mean();
  p.norm_h = p.mean_h.norm();
  p.norm_t = p.mean_t.norm();
  if (!(p.norm_h >= 1e-12) || !(p.norm_t >= 1e-12))
    throw DegenerateDirectionError("average-concept potential: zero-norm mean feature");
  return p;
}

double eval_ipa(const IpaPotential& ipa, const Eigen::MatrixXd& h) {
  const Eigen::MatrixXd& target = ipa.target.rows;
  require_same_shape(h, target, "IPA");
  if (ipa.weights.kind == WeightKind::kAverageConcept) {
    const auto p = average_parts(h, target);
    return p.mean_h.dot(p.mean_t) / (p.norm_h * p.norm_t);
  }
  if (ipa.weights.entries.rows() != h.rows()) throw ShapeError("IPA: weight matrix size != number of rows");
  // sum_nm P_nm <h_n, h*_m> = <h, P h*>_F
  return (h.array() * (ipa.weights.entries * target).array()).sum();
}

Eigen::MatrixXd grad_ipa(const IpaPotential& ipa, const Eigen::MatrixXd& h) {
  const Eigen::MatrixXd& target = ipa.target.rows;
  require_same_shape(h, target, "IPA");
  if (ipa.weights.kind == WeightKind::kAverageConcept) {
    // d cos(a, b)/da = (b/|b| - cos * a/|a|) / |a|, and d a / d h_n = 1/N.
    const auto p = average_parts(h, target);
    const Eigen::RowVectorXd a_hat = p.mean_h / p.norm_h;
    const Eigen::RowVectorXd b_hat = p.mean_t / p.norm_t;
    const double cosine = a_hat.dot(b_hat);
    const Eigen::RowVectorXd row = (b_hat - cosine * a_hat) / (p.norm_h * static_cast<double>(h.rows()));
    return row.replicate(h.rows(), 1);
  }
  if (ipa.weights.entries.rows() != h.rows()) throw ShapeError("IPA: weight matrix size != number of rows");
  return ipa.weights.entries * target;
}

Eigen::VectorXd spa_similarities(const Eigen::MatrixXd& h, const Eigen::RowVectorXd& target) {
  if (h.cols() != target.size()) throw ShapeError("SPA: feature dimension mismatch");
  return h * target.transpose();
}

double eval_spa(const SpaPotential& spa, const Eigen::MatrixXd& h) {
  const Eigen::VectorXd s = spa_similarities(h, spa.target);
  const double top = s.maxCoeff();
  const double sum = ((s.array() - top) / spa.temperature).exp().sum();
  return top + spa.temperature * std::log(sum);
}

Eigen::MatrixXd grad_spa(const SpaPotential& spa, const Eigen::MatrixXd& h) {
  const Eigen::VectorXd w = spa_weights(h, spa.target, spa.temperature);
  return w * spa.target;
}

}  // namespace

WeightMatrix make_weight_matrix(WeightKind kind, int n, const std::vector<int>& indices) {
  if (n < 1) throw ConfigError("weight matrix: N must be >= 1");
  WeightMatrix w;
  w.kind = kind;
  w.n = n;
  switch (kind) {
    case WeightKind::kFullMap:
      w.entries = Eigen::MatrixXd::Identity(n, n) / n;
      break;
    case WeightKind::kMask: {
      const std::set<int> s(indices.begin(), indices.end());
      if (s.empty()) throw ConfigError("mask weight matrix: index set is empty");
      w.entries = Eigen::MatrixXd::Zero(n, n);
      for (int i : s) {
        if (i < 1 || i > n) throw ConfigError("mask weight matrix: index " + std::to_string(i) + " outside [1, N]");
        w.entries(i - 1, i - 1) = 1.0 / static_cast<double>(s.size());
      }
      break;
    }
    case WeightKind::kSingleConcept: {
      if (indices.size() != 1) throw ConfigError("single-concept weight matrix needs exactly one index");
      const int i = indices.front();
      if (i < 1 || i > n) throw ConfigError("single-concept weight matrix: index " + std::to_string(i) + " outside [1, N]");
      w.entries = Eigen::MatrixXd::Zero(n, n);
      w.entries.col(i - 1).setConstant(1.0 / n);
      break;
    }
    case WeightKind::kAverageConcept:
      break;
    case WeightKind::kCustom:
      throw ConfigError("use custom_weight_matrix for custom weights");
  }
  return w;
}

WeightMatrix custom_weight_matrix(Eigen::MatrixXd entries) {
  if (entries.rows() != entries.cols() || entries.rows() < 1) throw ShapeError("custom weight matrix must be N x N");
  if (!entries.allFinite() || entries.minCoeff() < 0.0) throw ConfigError("custom weight matrix must be nonnegative");
  WeightMatrix w;
  w.kind = WeightKind::kCustom;
  w.n = static_cast<int>(entries.rows());
  w.entries = std::move(entries);
  return w;
}

PotentialSpec make_ipa(WeightMatrix weights, FeatureMap target) {
  if (weights.kind != WeightKind::kAverageConcept && weights.n != target.num_rows())
    throw ShapeError("IPA: weight matrix size != conditioning rows");
  return PotentialSpec{IpaPotential{std::move(weights), std::move(target)}};
}

PotentialSpec make_spa(const FeatureMap& target, int index, double temperature) {
  if (index < 1 || index > target.num_rows()) throw ConfigError("SPA: target index outside [1, N]");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("SPA: temperature must be > 0");
  return PotentialSpec{SpaPotential{target.rows.row(index - 1), temperature}};
}

PotentialSpec make_composite(std::vector<std::pair<double, PotentialSpec>> terms) {
  if (terms.empty()) throw ConfigError("composite potential needs at least one term");
  CompositePotential c;
  for (auto& [weight, spec] : terms) {
    if (!(weight >= 0.0) || !std::isfinite(weight)) throw ConfigError("composite weights must be >= 0");
    c.terms.push_back({weight, std::make_shared<const PotentialSpec>(std::move(spec))});
  }
  return PotentialSpec{std::move(c)};
}

Eigen::VectorXd spa_weights(const Eigen::MatrixXd& h, const Eigen::RowVectorXd& target, double temperature) {
  const Eigen::VectorXd s = spa_similarities(h, target);
  Eigen::VectorXd e = ((s.array() - s.maxCoeff()) / temperature).exp();
  return e / e.sum();
}

double eval_potential(const PotentialSpec& spec, const FeatureMap& h) {
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IpaPotential>) {
          return eval_ipa(p, h.rows);
        } else if constexpr (std::is_same_v<T, SpaPotential>) {
          return eval_spa(p, h.rows);
        } else {
          double total = 0.0;
          for (const auto& term : p.terms) total += term.weight * eval_potential(*term.spec, h);
          return total;
        }
      },
      spec.variant);
}

Eigen::MatrixXd grad_potential(const PotentialSpec& spec, const FeatureMap& h) {
  return std::visit(
      [&](const auto& p) -> Eigen::MatrixXd {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IpaPotential>) {
          return grad_ipa(p, h.rows);
        } else if constexpr (std::is_same_v<T, SpaPotential>) {
          return grad_spa(p, h.rows);
        } else {
          Eigen::MatrixXd total = Eigen::MatrixXd::Zero(h.rows.rows(), h.rows.cols());
          for (const auto& term : p.terms) total += term.weight * grad_potential(*term.spec, h);
          return total;
        }
      },
      spec.variant);
}

// ---- text form ------------------------------------------------------------

namespace {

double parse_number(std::string_view s, std::string_view context) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty())
    throw ConfigError("potential '" + std::string(context) + "': bad number '" + std::string(s) + "'");
  return v;
}

int parse_index(std::string_view s, std::string_view context) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty() || v < 1)
    throw ConfigError("potential '" + std::string(context) + "': bad index '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

// Splits a composite body at '+' signs that are not exponent signs.
std::vector<std::string_view> split_terms(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    const bool exponent_sign = i > 1 && i < s.size() && (s[i - 1] == 'e' || s[i - 1] == 'E') &&
                               std::isdigit(static_cast<unsigned char>(s[i - 2]));
    if (i == s.size() || (s[i] == '+' && !exponent_sign)) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string number_text(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

PotentialText parse_simple(std::string_view text) {
  PotentialText p;
  if (text == "ipa:full") {
    p.weight_kind = WeightKind::kFullMap;
  } else if (text == "ipa:avg") {
    p.weight_kind = WeightKind::kAverageConcept;
  } else if (text.starts_with("ipa:mask=")) {
    p.weight_kind = WeightKind::kMask;
    for (auto tok : split(text.substr(9), ',')) p.indices.push_back(parse_index(tok, text));
  } else if (text.starts_with("ipa:single=")) {
    p.weight_kind = WeightKind::kSingleConcept;
    p.indices.push_back(parse_index(text.substr(11), text));
  } else if (text.starts_with("spa:")) {
    p.kind = PotentialText::Kind::kSpa;
    bool have_i = false, have_t = false;
    for (auto tok : split(text.substr(4), ',')) {
      if (tok.starts_with("i=")) {
        p.spa_index = parse_index(tok.substr(2), text);
        have_i = true;
      } else if (tok.starts_with("T=")) {
        p.temperature = parse_number(tok.substr(2), text);
        have_t = true;
      } else {
        throw ConfigError("potential '" + std::string(text) + "': unknown SPA field '" + std::string(tok) + "'");
      }
    }
    if (!have_i || !have_t) throw ConfigError("potential '" + std::string(text) + "': SPA needs i= and T=");
    if (!(p.temperature > 0.0)) throw ConfigError("potential '" + std::string(text) + "': T must be > 0");
  } else {
    throw ConfigError("unrecognized potential '" + std::string(text) + "'");
  }
  return p;
}

}  // namespace

PotentialText parse_potential(std::string_view text) {
  if (!text.starts_with("comp:")) return parse_simple(text);
  PotentialText p;
  p.kind = PotentialText::Kind::kComposite;
  for (auto term : split_terms(text.substr(5))) {
    const auto star = term.find('*');
    if (star == std::string_view::npos)
      throw ConfigError("composite term '" + std::string(term) + "' must look like <weight>*<potential>");
    const double w = parse_number(term.substr(0, star), text);
    if (!(w >= 0.0)) throw ConfigError("composite weight must be >= 0 in '" + std::string(text) + "'");
    p.terms.emplace_back(w, parse_simple(term.substr(star + 1)));
  }
  if (p.terms.empty()) throw ConfigError("composite potential has no terms");
  return p;
}

std::string format_potential(const PotentialText& p) {
  auto join = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  switch (p.kind) {
    case PotentialText::Kind::kSpa:
      return "spa:i=" + std::to_string(p.spa_index) + ",T=" + number_text(p.temperature);
    case PotentialText::Kind::kComposite: {
      std::string s = "comp:";
      for (std::size_t k = 0; k < p.terms.size(); ++k)
        s += (k ? "+" : "") + number_text(p.terms[k].first) + "*" + format_potential(p.terms[k].second);
      return s;
    }
    case PotentialText::Kind::kIpa:
      break;
  }
  switch (p.weight_kind) {
    case WeightKind::kMask: return "ipa:mask=" + join(p.indices);
    case WeightKind::kSingleConcept: return "ipa:single=" + join(p.indices);
    case WeightKind::kAverageConcept: return "ipa:avg";
    default: return "ipa:full";
  }
}

PotentialSpec bind_potential(const PotentialText& p, const FeatureMap& target) {
  const int n = static_cast<int>(target.num_rows());
  switch (p.kind) {
    case PotentialText::Kind::kIpa:
      return make_ipa(make_weight_matrix(p.weight_kind, n, p.indices), target);
    case PotentialText::Kind::kSpa:
      return make_spa(target, p.spa_index, p.temperature);
    case PotentialText::Kind::kComposite: {
      std::vector<std::pair<double, PotentialSpec>> terms;
      for (const auto& [w, t] : p.terms) terms.emplace_back(w, bind_potential(t, target));
      return make_composite(std::move(terms));
    }
  }
  throw ConfigError("unreachable potential kind");
}

}  // namespace flowguide
