#include "datamarket/config.hpp"

#include <cmath>

#include "datamarket/errors.hpp"

namespace datamarket {

std::string to_string(ConsensusStrategy strategy) {
  switch (strategy) {
    case ConsensusStrategy::Mean: return "mean";
    case ConsensusStrategy::Median: return "median";
    case ConsensusStrategy::MeanMedianFixed: return "mean_median_fixed";
    case ConsensusStrategy::MeanMedianSqrt: return "mean_median_sqrt";
  }
  return "unknown";
}

ConsensusStrategy parse_consensus_strategy(const std::string& name) {
  if (name == "mean") return ConsensusStrategy::Mean;
  if (name == "median") return ConsensusStrategy::Median;
  if (name == "mean_median_fixed") return ConsensusStrategy::MeanMedianFixed;
  if (name == "mean_median_sqrt") return ConsensusStrategy::MeanMedianSqrt;
  throw ArgumentError("unknown consensus strategy '" + name + "'");
}

int ConsensusConfig::effective_group_size(std::size_t n) const {
  switch (strategy) {
    case ConsensusStrategy::MeanMedianFixed:
      return min_group_size;
    case ConsensusStrategy::MeanMedianSqrt: {
      auto s = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
      // Guard against floating error right below a perfect square.
      while (static_cast<std::size_t>((s + 1) * (s + 1)) <= n) ++s;
      while (s > 0 && static_cast<std::size_t>(s * s) > n) --s;
      return std::max(s, 2);
    }
    case ConsensusStrategy::Mean:
      return static_cast<int>(n);
    case ConsensusStrategy::Median:
      return 1;
  }
  return 1;
}

std::string ConsensusConfig::label() const {
  if (strategy == ConsensusStrategy::MeanMedianFixed) {
    return "mean_median_fixed(" + std::to_string(min_group_size) + ")";
  }
  return to_string(strategy);
}

void validate(const ConsensusConfig& cfg) {
  if (cfg.min_group_size < 1) throw ArgumentError("consensus.min_group_size must be positive");
  if (cfg.strategy == ConsensusStrategy::MeanMedianFixed && cfg.min_group_size < 2) {
    throw ArgumentError("mean_median_fixed requires min_group_size >= 2");
  }
}

void validate(const VotingConfig& cfg) {
  if (cfg.K < 1) throw ArgumentError("voting.K must be positive");
  if (cfg.J < 1) throw ArgumentError("voting.J must be positive");
  if (!(cfg.solver_tolerance > 0)) throw ArgumentError("voting.solver_tolerance must be positive");
  if (cfg.max_iterations < 1) throw ArgumentError("voting.max_iterations must be positive");
  if (!(cfg.penalty_rho > 0)) throw ArgumentError("voting.penalty_rho must be positive");
}

void validate(const ScenarioConfig& cfg) {
  if (cfg.n_agents < 1) throw ArgumentError("n_agents must be positive");
  if (!(cfg.sigma > 0)) throw ArgumentError("sigma must be positive");
  if (!(cfg.adversary_fraction >= 0 && cfg.adversary_fraction <= 1)) {
    throw ArgumentError("adversary_fraction must lie in [0, 1]");
  }
  if (!(cfg.rep_high_prob >= 0 && cfg.rep_high_prob <= 1)) {
    throw ArgumentError("rep_high_prob must lie in [0, 1]");
  }
  if (!(cfg.sigma_rep > 0)) throw ArgumentError("sigma_rep must be positive");
  if (cfg.trials < 1) throw ArgumentError("trials must be at least 1");
  validate(cfg.consensus);
  validate(cfg.voting);
}

}  // namespace datamarket
