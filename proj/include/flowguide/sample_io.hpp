#pragma once

// SampleBatch CSV: header "x1,x2", then one point per line written with 17
// significant digits, which round-trips every double exactly.

#include <filesystem>
#include <string>
#include <string_view>

#include "flowguide/toy_world.hpp"

namespace flowguide {

std::string format_sample_csv(const SampleBatch& batch);
/// ConfigError naming `source` and the 1-based line of the first malformed row.
SampleBatch parse_sample_csv(std::string_view text, std::string_view source = "<csv>");

void write_sample_csv(const SampleBatch& batch, const std::filesystem::path& path);
SampleBatch read_sample_csv(const std::filesystem::path& path);

}  // namespace flowguide
