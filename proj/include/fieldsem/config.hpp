#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fieldsem/errors.hpp"

namespace fieldsem {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Parses a decimal number; the literal `inf` denotes +infinity.
inline bool parse_number(std::string_view text, double& out) {
  text = trim(text);
  if (text == "inf" || text == "+inf" || text == "Inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && !std::isnan(out);
}

inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// key=value configuration with a closed key vocabulary. Lines starting with
// '#' and blank lines are ignored.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  explicit KeyValueConfig(std::set<std::string> allowed) : allowed_(std::move(allowed)) {}

  static KeyValueConfig parse(std::istream& in, std::set<std::string> allowed) {
    KeyValueConfig cfg(std::move(allowed));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto body = trim(line);
      if (body.empty() || body.front() == '#') continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) throw ParseError("expected key=value, got '" + std::string(body) + "'", lineno);
      const std::string key(trim(body.substr(0, eq)));
      const std::string value(trim(body.substr(eq + 1)));
      if (!cfg.allowed_.contains(key)) throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(lineno) + ")");
      if (cfg.values_.contains(key)) throw ConfigError("duplicate config key '" + key + "'");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path, std::set<std::string> allowed) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in, std::move(allowed));
  }

  bool has(const std::string& key) const { return values_.contains(key); }

  const std::string& get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
  }

  double get_number(const std::string& key) const {
    double v = 0.0;
    if (!parse_number(get(key), v)) throw ConfigError("config key '" + key + "' is not a number: '" + get(key) + "'");
    return v;
  }

  double get_number_or(const std::string& key, double fallback) const { return has(key) ? get_number(key) : fallback; }

  std::uint64_t get_count(const std::string& key) const {
    const std::string& text = get(key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw ConfigError("config key '" + key + "' is not a nonnegative integer: '" + text + "'");
    }
    return v;
  }

  std::uint64_t get_count_or(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? get_count(key) : fallback;
  }

  std::vector<double> get_list(const std::string& key) const {
    std::vector<double> out;
    std::string_view rest = get(key);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      double v = 0.0;
      if (!parse_number(rest.substr(0, comma), v)) throw ConfigError("config key '" + key + "' has a non-numeric entry");
      out.push_back(v);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    return out;
  }

  void set(const std::string& key, const std::string& value) {
    if (!allowed_.empty() && !allowed_.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  void set_default(const std::string& key, const std::string& value) {
    if (!has(key)) set(key, value);
  }

  // Sorted key=value dump, one per line.
  std::string to_string() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
    return out.str();
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::set<std::string> allowed_;
  std::map<std::string, std::string> values_;
};

// Keys accepted by run configuration files (fit / stderr / direct).
inline std::set<std::string> run_config_keys() {
  return {"tau",        "scheme",           "model_x",          "model_t",     "model_y", "dependence",
          "seed",       "burn_in",          "iterations",       "info_imputations",
          "max_reject_attempts", "threads", "init"};
}

// Keys accepted by simulation scenario files.
inline std::set<std::string> scenario_config_keys() {
  return {"label", "model_x", "model_t", "dependence", "truth",  "N",       "tau",  "T0",
          "replications", "seed", "burn_in", "iterations", "max_reject_attempts", "threads"};
}

}  // namespace fieldsem
