#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace sd::config {

// Plain-text "key = value" experiment configuration. '#' starts a comment;
// unknown keys are rejected so typos fail loudly.
class Config {
public:
  static Config parse_file(const std::filesystem::path& path,
                           const std::set<std::string>& allowed_keys);
  static Config parse_string(const std::string& text,
                             const std::set<std::string>& allowed_keys,
                             const std::string& source = "<string>");

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // comma-separated lists
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<std::string> get_string_list(const std::string& key,
                                           const std::vector<std::string>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

private:
  std::map<std::string, std::string> values_;
  std::string source_;
};

} // namespace sd::config
