#include "sinodenoise/config.hpp"

#include "sinodenoise/ct_physics.hpp"

#include <fstream>
#include <sstream>

namespace sd::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

} // namespace

Config Config::parse_string(const std::string& text,
                            const std::set<std::string>& allowed_keys,
                            const std::string& source) {
  Config cfg;
  cfg.source_ = source;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    if (!allowed_keys.count(key))
      throw ConfigError(source + ":" + std::to_string(lineno) + ": unknown key '" +
                        key + "'");
    if (cfg.values_.count(key))
      throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" +
                        key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::parse_file(const std::filesystem::path& path,
                          const std::set<std::string>& allowed_keys) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), allowed_keys, path.string());
}

std::string Config::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    throw ConfigError(source_ + ": missing required key '" + key + "'");
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key) const {
  const std::string s = get_string(key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(source_ + ": key '" + key + "' is not a number: '" + s + "'");
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::int64_t Config::get_int(const std::string& key) const {
  const std::string s = get_string(key);
  try {
    std::size_t pos = 0;
    const std::int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(source_ + ": key '" + key + "' is not an integer: '" + s + "'");
  }
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get_string(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(source_ + ": key '" + key + "' is not a boolean: '" + s + "'");
}

std::vector<double> Config::get_double_list(const std::string& key,
                                            const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& item : split_commas(get_string(key))) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError(source_ + ": key '" + key + "' has non-numeric item '" + item + "'");
    }
  }
  return out;
}

std::vector<std::string> Config::get_string_list(
    const std::string& key, const std::vector<std::string>& fallback) const {
  if (!has(key)) return fallback;
  return split_commas(get_string(key));
}

} // namespace sd::config
