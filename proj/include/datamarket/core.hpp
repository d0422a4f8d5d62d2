#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "datamarket/config.hpp"
#include "datamarket/rng.hpp"

namespace datamarket {

struct AgentId {
  std::uint64_t value = 0;

  auto operator<=>(const AgentId&) const = default;
  std::string str() const { return std::to_string(value); }
};

struct QuadrantId {
  int q = 1;

  auto operator<=>(const QuadrantId&) const = default;
};

struct Agent {
  AgentId id;
  // Claimed location quadrant.
  QuadrantId quadrant;
  // Where the agent actually is. Only differs from `quadrant` under a
  // wormhole attack; simulation ground truth.
  QuadrantId true_quadrant;
  double measurement = 0.0;
  // r_{i->j}: trust this agent assigns to each other agent.
  std::map<AgentId, double> reputation_out;
  bool is_adversary = false;
  std::optional<double> adversary_value;
  // Reputation score the honest population assigns to this agent when it is
  // a candidate (simulation input).
  double reputation_score = 1.0;
};

// Throws ArgumentError when reputation_out has a negative entry or the
// adversary flag and adversary_value disagree.
void validate_agent(const Agent& agent);

struct SpatialCoalition {
  QuadrantId quadrant;
  std::vector<AgentId> members;
  std::string objective;  // descriptor of the agreed objective function
  std::int64_t timestamp = 0;
};

void validate_coalition(const SpatialCoalition& coalition,
                        const std::vector<Agent>& agents);

// Returns cfg.mu_adv for adversaries; otherwise a draw from N(mu, sigma^2).
double sample_measurement(SeededRng& rng, const Agent& agent,
                          const ScenarioConfig& cfg);

// With probability rep_high_prob a draw from N(mu_rep, sigma_rep^2) clamped
// at zero, otherwise 1. Always consumes the same number of draws so
// populations stay coupled across sweeps of rep_high_prob.
double sample_reputation(SeededRng& rng, const ScenarioConfig& cfg);

// round(N * adversary_fraction).
std::size_t adversary_count(std::size_t n_agents, double adversary_fraction);

struct PopulationOptions {
  // Fill Agent::reputation_out for every ordered pair (needed by voting).
  bool with_reputation_matrix = false;
  QuadrantId quadrant{1};
};

// Deterministic population for one trial. Adversaries occupy uniformly random
// indices; honest readings are drawn for every agent first so that the
// adversary sets are nested as adversary_fraction grows.
std::vector<Agent> build_population(const ScenarioConfig& cfg, SeededRng rng,
                                    const PopulationOptions& options = {});

}  // namespace datamarket

template <>
struct std::hash<datamarket::AgentId> {
  std::size_t operator()(const datamarket::AgentId& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};
