// flowguide command-line driver.
//
//   flowguide train     --config run.cfg --out model.ckpt
//   flowguide sample    --checkpoint model.ckpt --mode ode --out ode.csv
//   flowguide guide     --checkpoint model.ckpt --feature "-1,0" --lambda 2 --out guided.csv
//   flowguide oracle    --feature "-1,0" --lambda 2 --out oracle.csv
//   flowguide eval      --a guided.csv --b oracle.csv --metric energy
//   flowguide gradcheck --seed 7
//   flowguide embedscan --checkpoint model.ckpt --pairs 20
//   flowguide plot      --a oracle.csv --overlay guided.csv --out fig.svg
//
// Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "flowguide/checkpoint.hpp"
#include "flowguide/errors.hpp"
#include "flowguide/evaluator.hpp"
#include "flowguide/gradcheck.hpp"
#include "flowguide/potentials.hpp"
#include "flowguide/run_config.hpp"
#include "flowguide/sample_io.hpp"
#include "flowguide/sampler.hpp"
#include "flowguide/svg_plot.hpp"
#include "flowguide/toy_world.hpp"
#include "flowguide/trainer.hpp"

namespace fg = flowguide;
using nlohmann::json;

namespace {

const std::set<std::string> kKnownKeys = {
    "epochs",   "batch_size", "dataset_size", "learning_rate", "beta",      "adam_beta1",
    "adam_beta2", "adam_epsilon", "seed",      "depth",         "width",     "tap",
    "head_width", "steps",      "mode",         "eps",           "lambda",    "feature",
    "potential",  "guidance_convention", "n",  "checkpoint",    "out",       "pairs",
    "trials",     "diffusion_scale"};

// Command-line values; unset entries fall back to the config file, then to defaults.
struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> epochs, batch_size, dataset_size, depth, width, tap, head_width;
  std::optional<double> learning_rate, beta;
  std::optional<std::string> checkpoint;
  std::optional<int> steps;
  std::optional<std::string> mode;
  std::optional<double> eps, lambda, diffusion_scale;
  std::optional<std::string> feature, potential, convention;
  std::optional<int> n, pairs, trials;
  std::string a, b, overlay;
  std::vector<std::string> metrics;
};

// Effective settings: defaults <- config file <- flags.
class Settings {
 public:
  explicit Settings(const Flags& flags) {
    if (flags.config) file_ = fg::ConfigFile::load(*flags.config, kKnownKeys);
  }

  template <class T>
  T get(const std::string& key, const std::optional<T>& flag, T fallback) {
    T value = fallback;
    if (file_) file_->get(key, value);
    if (flag) value = *flag;
    record(key, value);
    return value;
  }

  std::map<std::string, std::string> effective() const { return values_; }

 private:
  template <class T>
  void record(const std::string& key, const T& value) {
    std::ostringstream s;
    if constexpr (std::is_floating_point_v<T>) s.precision(17);
    s << value;
    values_[key] = s.str();
  }

  std::optional<fg::ConfigFile> file_;
  std::map<std::string, std::string> values_;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

fg::Point2 parse_feature(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw UsageError("--feature expects \"a,b\", got '" + text + "'");
  double a = 0, b = 0;
  try {
    std::size_t used = 0;
    a = std::stod(text.substr(0, comma), &used);
    b = std::stod(text.substr(comma + 1), &used);
  } catch (const std::exception&) {
    throw UsageError("--feature expects two numbers, got '" + text + "'");
  }
  fg::Point2 v(a, b);
  const double norm = v.norm();
  if (!(norm > 1e-12) || !std::isfinite(norm)) throw UsageError("--feature must be a non-zero finite vector");
  if (std::abs(norm - 1.0) > 1e-9) {
    std::cerr << "warning: feature (" << a << ", " << b << ") has norm " << norm << "; normalizing\n";
    v /= norm;
  }
  return v;
}

void write_sidecar(const std::string& out, const std::map<std::string, std::string>& values) {
  fg::write_file_bytes(out + ".config", fg::format_config(values));
}

void emit_json(const json& report, const std::optional<std::string>& out) {
  const std::string text = report.dump(2) + "\n";
  if (out)
    fg::write_file_bytes(*out, text);
  else
    std::cout << text;
}

fg::TrainConfig train_config(Settings& s, const Flags& f) {
  fg::TrainConfig c;
  c.epochs = s.get("epochs", f.epochs, c.epochs);
  c.batch_size = s.get("batch_size", f.batch_size, c.batch_size);
  c.dataset_size = s.get("dataset_size", f.dataset_size, c.dataset_size);
  c.learning_rate = s.get("learning_rate", f.learning_rate, c.learning_rate);
  c.beta = s.get("beta", f.beta, c.beta);
  c.seed = s.get("seed", f.seed, c.seed);
  c.arch.depth = s.get("depth", f.depth, c.arch.depth);
  c.arch.width = s.get("width", f.width, c.arch.width);
  c.arch.tap = s.get("tap", f.tap, c.arch.tap);
  c.arch.head_width = s.get("head_width", f.head_width, c.arch.head_width);
  const std::optional<double> none;
  c.adam_beta1 = s.get("adam_beta1", none, c.adam_beta1);
  c.adam_beta2 = s.get("adam_beta2", none, c.adam_beta2);
  c.adam_epsilon = s.get("adam_epsilon", none, c.adam_epsilon);
  try {
    c.validate();
  } catch (const fg::ShapeError& e) {
    throw fg::ConfigError(e.what());
  }
  return c;
}

fg::SamplerConfig sampler_config(Settings& s, const Flags& f, const std::string& default_mode) {
  fg::SamplerConfig c;
  c.seed = s.get("seed", f.seed, c.seed);
  c.steps = s.get("steps", f.steps, c.steps);
  c.t_end = s.get("eps", f.eps, c.t_end);
  c.diffusion_scale = s.get("diffusion_scale", f.diffusion_scale, c.diffusion_scale);
  const std::string mode = s.get("mode", f.mode, default_mode);
  if (mode == "ode")
    c.mode = fg::SamplerMode::kOde;
  else if (mode == "sde")
    c.mode = fg::SamplerMode::kSde;
  else if (mode == "guided_sde")
    c.mode = fg::SamplerMode::kGuidedSde;
  else
    throw UsageError("--mode must be ode, sde or guided_sde, got '" + mode + "'");
  return c;
}

std::string required_path(Settings& s, const std::string& key, const std::optional<std::string>& flag) {
  const std::string v = s.get(key, flag, std::string());
  if (v.empty()) throw UsageError("missing --" + key);
  return v;
}

int cmd_train(const Flags& f) {
  Settings s(f);
  const fg::TrainConfig config = train_config(s, f);
  const std::string out = s.get("out", f.out, std::string("model.ckpt"));
  const auto result = fg::train(config, [&](int epoch, double diff, double align) {
    std::fprintf(stderr, "epoch %d/%d  loss_diff %.6f  loss_align %.6f\n", epoch + 1, config.epochs, diff, align);
  });
  const std::string bytes = fg::encode_checkpoint(result.params, config.to_json());
  fg::write_file_bytes(out, bytes);
  fg::write_file_bytes(out + ".loss.csv", fg::format_loss_csv(result.report));
  write_sidecar(out, s.effective());
  std::cout << "checkpoint " << out << "\nsha256 " << sha256_hex(bytes) << "\n";
  std::fprintf(stderr, "trained in %.1f s\n", result.report.seconds);
  return 0;
}

int cmd_sample(const Flags& f, bool guided) {
  Settings s(f);
  fg::SamplerConfig config = sampler_config(s, f, guided ? "guided_sde" : "sde");
  const std::string ckpt = required_path(s, "checkpoint", f.checkpoint);
  const int n = s.get("n", f.n, 2000);
  if (n < 1) throw UsageError("--n must be >= 1");
  const std::string out = s.get("out", f.out, std::string(guided ? "guided.csv" : "samples.csv"));
  if (guided) {
    if (config.mode != fg::SamplerMode::kGuidedSde) throw UsageError("guide only runs --mode guided_sde");
    const double lambda = s.get("lambda", f.lambda, 2.0);
    if (!(lambda >= 0.0)) throw UsageError("--lambda must be >= 0");
    const fg::Point2 feature = parse_feature(s.get("feature", f.feature, std::string("-1,0")));
    const std::string text = s.get("potential", f.potential, std::string("ipa:full"));
    const std::string conv = s.get("guidance_convention", f.convention, std::string("prop2"));
    fg::Guidance g{fg::bind_potential(fg::parse_potential(text), fg::FeatureMap::single(feature)), lambda,
                   fg::GuidanceConvention::kProp2};
    if (conv == "eq7")
      g.convention = fg::GuidanceConvention::kEq7;
    else if (conv != "prop2")
      throw UsageError("--guidance-convention must be prop2 or eq7");
    config.guidance = g;
  } else if (config.mode == fg::SamplerMode::kGuidedSde) {
    throw UsageError("sample runs ode or sde; use the guide command for guided sampling");
  }
  const fg::ModelParams params = fg::load_checkpoint(ckpt);
  const fg::SampleBatch batch = config.mode == fg::SamplerMode::kOde
                                    ? fg::sample_ode(params, config, static_cast<std::size_t>(n))
                                    : fg::sample_sde(params, config, static_cast<std::size_t>(n));
  fg::write_sample_csv(batch, out);
  write_sidecar(out, s.effective());
  return 0;
}

int cmd_oracle(const Flags& f) {
  Settings s(f);
  const std::uint64_t seed = s.get("seed", f.seed, std::uint64_t{0});
  const double lambda = s.get("lambda", f.lambda, 2.0);
  if (!(lambda >= 0.0)) throw UsageError("--lambda must be >= 0");
  const fg::Point2 feature = parse_feature(s.get("feature", f.feature, std::string("-1,0")));
  const int n = s.get("n", f.n, 2000);
  if (n < 1) throw UsageError("--n must be >= 1");
  const std::string out = s.get("out", f.out, std::string("oracle.csv"));
  const fg::SampleBatch batch =
      fg::rejection_sample(fg::ConditionFeature(feature, lambda), static_cast<std::size_t>(n), seed);
  fg::write_sample_csv(batch, out);
  write_sidecar(out, s.effective());
  return 0;
}

int cmd_eval(const Flags& f) {
  Settings s(f);
  const std::uint64_t seed = s.get("seed", f.seed, std::uint64_t{0});
  if (f.a.empty()) throw UsageError("eval needs --a");
  std::set<std::string> metrics(f.metrics.begin(), f.metrics.end());
  if (metrics.empty()) metrics = {"energy", "skl", "coverage"};
  const fg::SampleBatch a = fg::read_sample_csv(f.a);
  std::optional<fg::SampleBatch> b;
  if (!f.b.empty()) b = fg::read_sample_csv(f.b);
  if ((metrics.count("energy") || metrics.count("skl")) && !b) throw UsageError("energy and skl need --b");

  json report = json::object();
  if (metrics.count("energy")) report["energy_distance"] = fg::energy_distance(a, *b, {4000, seed});
  if (metrics.count("skl")) report["skl"] = fg::symmetric_kl_grid(a, *b);
  if (metrics.count("coverage")) {
    report["coverage"] = {{"a", fg::to_json(fg::coverage(a, 0.05))}};
    if (b) report["coverage"]["b"] = fg::to_json(fg::coverage(*b, 0.05));
  }
  auto eff = s.effective();
  eff["a"] = f.a;
  if (b) eff["b"] = f.b;
  report["config"] = eff;
  emit_json(report, f.out);
  return 0;
}

int cmd_gradcheck(const Flags& f) {
  Settings s(f);
  fg::GradcheckOptions opt;
  opt.seed = s.get("seed", f.seed, opt.seed);
  opt.trials = s.get("trials", f.trials, opt.trials);
  if (opt.trials < 1) throw UsageError("--trials must be >= 1");
  const auto results = fg::gradcheck_all(opt);
  json report = fg::to_json(results);
  report["config"] = s.effective();
  for (const auto& r : results)
    std::fprintf(stderr, "%-22s max_rel_err %.3e  checked %zu  skipped %zu  %s\n", r.suite.c_str(), r.max_rel_error,
                 r.checked, r.skipped, r.passed() ? "PASS" : "FAIL");
  emit_json(report, f.out);
  return report["passed"].get<bool>() ? 0 : 1;
}

int cmd_embedscan(const Flags& f) {
  Settings s(f);
  fg::SamplerConfig config = sampler_config(s, f, "guided_sde");
  config.mode = fg::SamplerMode::kGuidedSde;
  const std::string ckpt = required_path(s, "checkpoint", f.checkpoint);
  const int pairs = s.get("pairs", f.pairs, 20);
  const int n = s.get("n", f.n, 2000);
  const double lambda = s.get("lambda", f.lambda, 2.0);
  if (pairs < 2 || n < 2) throw UsageError("--pairs and --n must be >= 2");
  if (!(lambda > 0.0)) throw UsageError("embedscan needs --lambda > 0");
  const fg::ModelParams params = fg::load_checkpoint(ckpt);
  const auto report = fg::embed_scan(params, fg::random_unit_pairs(static_cast<std::size_t>(pairs), config.seed),
                                     lambda, static_cast<std::size_t>(n), config);
  json out = {{"embed_scan", fg::to_json(report)}, {"config", s.effective()}};
  emit_json(out, f.out);
  return 0;
}

int cmd_plot(const Flags& f) {
  if (f.a.empty()) throw UsageError("plot needs --a");
  const fg::SampleBatch base = fg::read_sample_csv(f.a);
  std::optional<fg::SampleBatch> overlay;
  if (!f.overlay.empty()) overlay = fg::read_sample_csv(f.overlay);
  if (base.size() == 0 && (!overlay || overlay->size() == 0)) std::cerr << "warning: nothing to plot\n";
  const std::string out = f.out.value_or("plot.svg");
  fg::write_file_bytes(out, fg::render_svg(base, overlay));
  return 0;
}

void shared(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "key = value configuration file");
  cmd->add_option("--seed", f.seed, "global seed");
  cmd->add_option("--out", f.out, "output path");
}

void sampler_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--checkpoint", f.checkpoint, "trained checkpoint");
  cmd->add_option("--n", f.n, "number of samples");
  cmd->add_option("--steps", f.steps, "integration steps");
  cmd->add_option("--mode", f.mode, "ode | sde | guided_sde");
  cmd->add_option("--eps", f.eps, "terminal time and score clip");
  cmd->add_option("--diffusion-scale", f.diffusion_scale, "noise multiplier (0 = drift only)");
}

void guidance_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--lambda", f.lambda, "guidance scale");
  cmd->add_option("--feature", f.feature, "condition feature \"a,b\"");
  cmd->add_option("--potential", f.potential, "potential spec, e.g. ipa:full or spa:i=1,T=0.1");
  cmd->add_option("--guidance-convention", f.convention, "prop2 | eq7");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-matching toy pipeline with feature-space guidance"};
  app.require_subcommand(1);
  Flags f;

  auto* train = app.add_subcommand("train", "train the velocity network");
  shared(train, f);
  train->add_option("--epochs", f.epochs);
  train->add_option("--batch-size", f.batch_size);
  train->add_option("--dataset-size", f.dataset_size);
  train->add_option("--learning-rate", f.learning_rate);
  train->add_option("--beta", f.beta, "alignment loss weight");
  train->add_option("--depth", f.depth);
  train->add_option("--width", f.width);
  train->add_option("--tap", f.tap);
  train->add_option("--head-width", f.head_width);

  auto* sample = app.add_subcommand("sample", "unguided ODE or SDE samples");
  shared(sample, f);
  sampler_flags(sample, f);

  auto* guide = app.add_subcommand("guide", "guided SDE samples");
  shared(guide, f);
  sampler_flags(guide, f);
  guidance_flags(guide, f);

  auto* oracle = app.add_subcommand("oracle", "rejection samples from the tilted density");
  shared(oracle, f);
  oracle->add_option("--n", f.n);
  oracle->add_option("--lambda", f.lambda);
  oracle->add_option("--feature", f.feature);

  auto* eval = app.add_subcommand("eval", "compare sample CSVs");
  shared(eval, f);
  eval->add_option("--a", f.a, "first CSV")->required();
  eval->add_option("--b", f.b, "second CSV");
  eval->add_option("--metric", f.metrics, "energy | skl | coverage (repeatable)")
      ->check(CLI::IsMember({"energy", "skl", "coverage"}));

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suites");
  shared(gradcheck, f);
  gradcheck->add_option("--trials", f.trials);

  auto* embedscan = app.add_subcommand("embedscan", "feature-distance scan over random condition pairs");
  shared(embedscan, f);
  sampler_flags(embedscan, f);
  embedscan->add_option("--lambda", f.lambda);
  embedscan->add_option("--pairs", f.pairs);

  auto* plot = app.add_subcommand("plot", "SVG scatter of one or two CSVs");
  plot->add_option("--a", f.a, "base CSV (grey)")->required();
  plot->add_option("--overlay", f.overlay, "overlay CSV (red)");
  plot->add_option("--out", f.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return cmd_train(f);
    if (sample->parsed()) return cmd_sample(f, false);
    if (guide->parsed()) return cmd_sample(f, true);
    if (oracle->parsed()) return cmd_oracle(f);
    if (eval->parsed()) return cmd_eval(f);
    if (gradcheck->parsed()) return cmd_gradcheck(f);
    if (embedscan->parsed()) return cmd_embedscan(f);
    if (plot->parsed()) return cmd_plot(f);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fg::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
