#pragma once

#include <optional>
#include <string>

#include "flowguide/toy_world.hpp"

namespace flowguide {

/// Self-contained SVG scatter over the fixed viewport [-1.5, 1.5]^2 with the
/// two support cells outlined; `base` in grey, `overlay` in red.
std::string render_svg(const SampleBatch& base, const std::optional<SampleBatch>& overlay = std::nullopt);

}  // namespace flowguide
