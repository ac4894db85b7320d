#include "flowguide/sample_io.hpp"

#include <charconv>
#include <cstdio>

#include "flowguide/checkpoint.hpp"
#include "flowguide/errors.hpp"

namespace flowguide {

namespace {

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::string format_sample_csv(const SampleBatch& batch) {
  std::string out = "x1,x2\n";
  out.reserve(out.size() + batch.size() * 48);
  char line[96];
  for (const auto& p : batch.points) {
    const int len = std::snprintf(line, sizeof line, "%.17g,%.17g\n", p[0], p[1]);
    out.append(line, static_cast<std::size_t>(len));
  }
  return out;
}

SampleBatch parse_sample_csv(std::string_view text, std::string_view source) {
  SampleBatch batch;
  batch.origin = std::string(source);
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != "x1,x2")
        throw ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": expected header 'x1,x2'");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    double x = 0.0, y = 0.0;
    if (comma == std::string_view::npos || !parse_double(line.substr(0, comma), x) ||
        !parse_double(line.substr(comma + 1), y))
      throw ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": malformed row '" +
                        std::string(line) + "'");
    batch.points.emplace_back(x, y);
  }
  if (!header_seen) throw ConfigError(std::string(source) + ": empty file, expected header 'x1,x2'");
  return batch;
}

void write_sample_csv(const SampleBatch& batch, const std::filesystem::path& path) {
  write_file_bytes(path, format_sample_csv(batch));
}

SampleBatch read_sample_csv(const std::filesystem::path& path) {
  return parse_sample_csv(read_file_bytes(path), path.string());
}

}  // namespace flowguide
