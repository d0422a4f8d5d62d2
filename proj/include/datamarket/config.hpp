#pragma once

#include <cstdint>
#include <string>

namespace datamarket {

enum class ConsensusStrategy { Mean, Median, MeanMedianFixed, MeanMedianSqrt };

std::string to_string(ConsensusStrategy strategy);
// Accepts "mean", "median", "mean_median_fixed", "mean_median_sqrt".
ConsensusStrategy parse_consensus_strategy(const std::string& name);

struct ConsensusConfig {
  ConsensusStrategy strategy = ConsensusStrategy::MeanMedianFixed;
  // s for MeanMedianFixed; ignored by the other strategies.
  int min_group_size = 3;

  // Group size actually used for a coalition of n agents: s for the fixed
  // strategy, floor(sqrt(n)) (at least 2) for the square-root strategy.
  int effective_group_size(std::size_t n) const;
  // Short label, e.g. "median", "mean_median_fixed(3)".
  std::string label() const;
};

struct VotingConfig {
  int K = 3;  // winners per round
  int J = 5;  // rounds
  double solver_tolerance = 1e-8;
  int max_iterations = 100000;
  double penalty_rho = 1e3;
};

struct ScenarioConfig {
  int n_agents = 20;
  double mu = 0.0;
  double sigma = 1.0;
  double adversary_fraction = 0.0;
  double mu_adv = 10.0;
  double rep_high_prob = 0.5;
  double mu_rep = 100.0;
  double sigma_rep = 30.0;
  int trials = 100;
  std::uint64_t seed = 42;
  ConsensusConfig consensus;
  VotingConfig voting;
};

// Throws ArgumentError naming the first violated constraint.
void validate(const ConsensusConfig& cfg);
void validate(const VotingConfig& cfg);
void validate(const ScenarioConfig& cfg);

}  // namespace datamarket
