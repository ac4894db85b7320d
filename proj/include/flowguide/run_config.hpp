#pragma once

// Flat "key = value" configuration files. '#' starts a comment; blank lines
// are ignored; unknown keys and duplicate keys are errors that name the line.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace flowguide {

class ConfigFile {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static ConfigFile parse(std::string_view text, std::string_view source, const std::set<std::string>& known_keys);
  /// ConfigError naming the path when the file cannot be read.
  static ConfigFile load(const std::filesystem::path& path, const std::set<std::string>& known_keys);

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  // Each getter leaves `out` untouched when the key is absent and raises a
  // ConfigError with "source:line: key" context when the value does not parse.
  void get(const std::string& key, int& out) const;
  void get(const std::string& key, double& out) const;
  void get(const std::string& key, std::uint64_t& out) const;
  void get(const std::string& key, std::string& out) const;

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  std::string source_;
  std::map<std::string, Entry> entries_;
};

/// Renders key = value lines in key order; used to echo effective settings.
std::string format_config(const std::map<std::string, std::string>& values);

}  // namespace flowguide
