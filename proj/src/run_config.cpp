#include "flowguide/run_config.hpp"

#include <charconv>

#include "flowguide/checkpoint.hpp"
#include "flowguide/errors.hpp"

namespace flowguide {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
bool parse_number(const std::string& text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && !text.empty();
}

}  // namespace

ConfigFile ConfigFile::parse(std::string_view text, std::string_view source, const std::set<std::string>& known) {
  ConfigFile cfg;
  cfg.source_ = std::string(source);
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = cfg.source_ + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + "missing key");
    if (!known.count(key)) throw ConfigError(where + "unknown key '" + key + "'");
    if (cfg.entries_.count(key)) throw ConfigError(where + "duplicate key '" + key + "'");
    cfg.entries_[key] = Entry{value, line_no};
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path, const std::set<std::string>& known) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file '" + path.string() + "' does not exist");
  return parse(read_file_bytes(path), path.string(), known);
}

void ConfigFile::fail(const std::string& key, const std::string& what) const {
  const auto& e = entries_.at(key);
  throw ConfigError(source_ + ":" + std::to_string(e.line) + ": field '" + key + "': " + what);
}

void ConfigFile::get(const std::string& key, int& out) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return;
  if (!parse_number(it->second.value, out)) fail(key, "expected an integer, got '" + it->second.value + "'");
}

void ConfigFile::get(const std::string& key, double& out) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return;
  if (!parse_number(it->second.value, out)) fail(key, "expected a number, got '" + it->second.value + "'");
}

void ConfigFile::get(const std::string& key, std::uint64_t& out) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return;
  if (!parse_number(it->second.value, out))
    fail(key, "expected a nonnegative integer, got '" + it->second.value + "'");
}

void ConfigFile::get(const std::string& key, std::string& out) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return;
  out = it->second.value;
}

std::string format_config(const std::map<std::string, std::string>& values) {
  std::string out;
  for (const auto& [k, v] : values) out += k + " = " + v + "\n";
  return out;
}

}  // namespace flowguide
