#pragma once

// Central finite-difference checks of every analytic gradient in the library:
// network backward (parameters and input), the compound training loss, and
// each potential variant. Entries whose +-step evaluation flips a ReLU
// activation are skipped, since the difference quotient straddles a kink.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowguide/flow_net.hpp"
#include "flowguide/rng.hpp"

namespace flowguide {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int trials = 100;
  double step = 1e-4;
  double tolerance = 1e-4;
  double floor = 1e-8;  // relative error denominator is max(|analytic|, floor)
};

struct GradcheckResult {
  std::string suite;
  int trials = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return checked > 0 && max_rel_error <= tolerance; }
};

enum class PotentialVariant { kIpaFull, kIpaMask, kIpaAverage, kIpaSingle, kSpaT01, kSpaT1, kSpaT10, kComposite };

double relative_error(double analytic, double numeric, double floor);

/// Random network with all widths in [2, max_width], depth in [2, 5] and
/// biases drawn uniformly from +-0.5.
ModelParams random_small_net(Stream& rng, int max_width = 8);

GradcheckResult gradcheck_flow_net(const GradcheckOptions& options);
GradcheckResult gradcheck_compound_loss(const GradcheckOptions& options);
GradcheckResult gradcheck_potential(PotentialVariant variant, const GradcheckOptions& options);
std::vector<GradcheckResult> gradcheck_all(const GradcheckOptions& options);

std::string variant_name(PotentialVariant v);
nlohmann::json to_json(const std::vector<GradcheckResult>& results);

}  // namespace flowguide
