#include "datamarket/config_io.hpp"

#include <fstream>
#include <sstream>

#include "datamarket/errors.hpp"

namespace datamarket {

namespace {

int mark_line(const YAML::Node& node) {
  auto mark = node.Mark();
  return mark.line >= 0 ? mark.line + 1 : 0;
}

}  // namespace

ConfigSection::ConfigSection(YAML::Node node, std::string path)
    : node_(std::move(node)), path_(std::move(path)) {
  if (node_ && !node_.IsNull() && !node_.IsMap()) {
    throw ConfigError(path_, mark_line(node_), "expected a mapping");
  }
}

std::string ConfigSection::qualified(const std::string& key) const {
  return path_.empty() ? key : path_ + "." + key;
}

bool ConfigSection::has(const std::string& key) const {
  const YAML::Node& node = node_;
  return node && node.IsMap() && node[key];
}

int ConfigSection::line_of(const std::string& key) const {
  const YAML::Node& node = node_;
  if (!has(key)) return mark_line(node);
  return mark_line(node[key]);
}

std::optional<YAML::Node> ConfigSection::child(const std::string& key) {
  used_.insert(key);
  if (!has(key)) return std::nullopt;
  const YAML::Node& node = node_;
  return node[key];
}

double ConfigSection::get_double(const std::string& key, double fallback) {
  auto value = child(key);
  if (!value) return fallback;
  try {
    return value->as<double>();
  } catch (const YAML::Exception&) {
    throw ConfigError(qualified(key), mark_line(*value), "expected a number");
  }
}

long long ConfigSection::get_int(const std::string& key, long long fallback) {
  auto value = child(key);
  if (!value) return fallback;
  try {
    return value->as<long long>();
  } catch (const YAML::Exception&) {
    throw ConfigError(qualified(key), mark_line(*value), "expected an integer");
  }
}

std::string ConfigSection::get_string(const std::string& key,
                                      const std::string& fallback) {
  auto value = child(key);
  if (!value) return fallback;
  if (!value->IsScalar()) {
    throw ConfigError(qualified(key), mark_line(*value), "expected a string");
  }
  return value->as<std::string>();
}

bool ConfigSection::get_bool(const std::string& key, bool fallback) {
  auto value = child(key);
  if (!value) return fallback;
  try {
    return value->as<bool>();
  } catch (const YAML::Exception&) {
    throw ConfigError(qualified(key), mark_line(*value), "expected true or false");
  }
}

std::vector<double> ConfigSection::get_double_list(
    const std::string& key, const std::vector<double>& fallback) {
  auto value = child(key);
  if (!value) return fallback;
  if (!value->IsSequence()) {
    throw ConfigError(qualified(key), mark_line(*value), "expected a list of numbers");
  }
  std::vector<double> out;
  for (const auto& item : *value) {
    try {
      out.push_back(item.as<double>());
    } catch (const YAML::Exception&) {
      throw ConfigError(qualified(key), mark_line(item), "expected a number");
    }
  }
  return out;
}

std::vector<std::string> ConfigSection::get_string_list(
    const std::string& key, const std::vector<std::string>& fallback) {
  auto value = child(key);
  if (!value) return fallback;
  if (!value->IsSequence()) {
    throw ConfigError(qualified(key), mark_line(*value), "expected a list of strings");
  }
  std::vector<std::string> out;
  for (const auto& item : *value) {
    if (!item.IsScalar()) throw ConfigError(qualified(key), mark_line(item), "expected a string");
    out.push_back(item.as<std::string>());
  }
  return out;
}

ConfigSection ConfigSection::section(const std::string& key) {
  auto value = child(key);
  return ConfigSection(value ? *value : YAML::Node(), qualified(key));
}

void ConfigSection::finish() const {
  if (!node_ || !node_.IsMap()) return;
  for (const auto& entry : node_) {
    auto key = entry.first.as<std::string>();
    if (!used_.contains(key)) {
      throw ConfigError(qualified(key), mark_line(entry.first), "unknown key");
    }
  }
}

YAML::Node parse_config_text(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("", e.mark.line + 1, e.msg);
  }
}

YAML::Node load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", 0, "cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

ScenarioConfig read_scenario(ConfigSection& s, const ScenarioConfig& defaults) {
  ScenarioConfig cfg = defaults;
  cfg.n_agents = static_cast<int>(s.get_int("n_agents", cfg.n_agents));
  cfg.mu = s.get_double("mu", cfg.mu);
  cfg.sigma = s.get_double("sigma", cfg.sigma);
  cfg.adversary_fraction = s.get_double("adversary_fraction", cfg.adversary_fraction);
  cfg.mu_adv = s.get_double("mu_adv", cfg.mu_adv);
  cfg.rep_high_prob = s.get_double("rep_high_prob", cfg.rep_high_prob);
  cfg.mu_rep = s.get_double("mu_rep", cfg.mu_rep);
  cfg.sigma_rep = s.get_double("sigma_rep", cfg.sigma_rep);
  cfg.trials = static_cast<int>(s.get_int("trials", cfg.trials));
  cfg.seed = static_cast<std::uint64_t>(s.get_int("seed", static_cast<long long>(cfg.seed)));

  auto consensus = s.section("consensus");
  try {
    cfg.consensus.strategy = parse_consensus_strategy(
        consensus.get_string("strategy", to_string(cfg.consensus.strategy)));
  } catch (const ArgumentError& e) {
    throw ConfigError(consensus.path() + ".strategy", consensus.line_of("strategy"), e.what());
  }
  cfg.consensus.min_group_size =
      static_cast<int>(consensus.get_int("min_group_size", cfg.consensus.min_group_size));
  consensus.finish();

  auto voting = s.section("voting");
  cfg.voting.K = static_cast<int>(voting.get_int("K", cfg.voting.K));
  cfg.voting.J = static_cast<int>(voting.get_int("J", cfg.voting.J));
  cfg.voting.solver_tolerance = voting.get_double("solver_tolerance", cfg.voting.solver_tolerance);
  cfg.voting.max_iterations =
      static_cast<int>(voting.get_int("max_iterations", cfg.voting.max_iterations));
  cfg.voting.penalty_rho = voting.get_double("penalty_rho", cfg.voting.penalty_rho);
  voting.finish();

  try {
    validate(cfg);
  } catch (const ArgumentError& e) {
    throw ConfigError(s.path(), s.line_of(""), e.what());
  }
  return cfg;
}

ScenarioConfig parse_scenario(const std::string& yaml_text) {
  ConfigSection root(parse_config_text(yaml_text), "");
  auto cfg = read_scenario(root);
  root.finish();
  return cfg;
}

}  // namespace datamarket
