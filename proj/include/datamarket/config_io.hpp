#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "datamarket/config.hpp"

namespace datamarket {

// Strict view over one YAML mapping. Every key read through it is recorded;
// finish() rejects whatever the caller did not ask for, so typos in config
// files are fatal instead of silently ignored.
class ConfigSection {
 public:
  ConfigSection(YAML::Node node, std::string path);

  bool has(const std::string& key) const;
  double get_double(const std::string& key, double fallback);
  long long get_int(const std::string& key, long long fallback);
  std::string get_string(const std::string& key, const std::string& fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback);
  std::vector<std::string> get_string_list(const std::string& key,
                                           const std::vector<std::string>& fallback);
  ConfigSection section(const std::string& key);

  // Throws ConfigError for the first unrecognized key.
  void finish() const;

  const std::string& path() const { return path_; }
  int line_of(const std::string& key) const;

 private:
  std::optional<YAML::Node> child(const std::string& key);
  std::string qualified(const std::string& key) const;

  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
};

// Parses YAML text; syntax errors become ConfigError with the line number.
YAML::Node parse_config_text(const std::string& text);
YAML::Node load_config_file(const std::string& path);

// Reads every ScenarioConfig field from `section`, defaults for absent keys,
// and validates the result. Consumes the keys it reads; the caller decides
// when to call finish().
ScenarioConfig read_scenario(ConfigSection& section, const ScenarioConfig& defaults = {});

// Convenience for a document whose top level is exactly one scenario.
ScenarioConfig parse_scenario(const std::string& yaml_text);

}  // namespace datamarket
