#include "datamarket/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "datamarket/errors.hpp"

namespace datamarket {

namespace {

// Substream tags used when building a population.
constexpr std::uint64_t kPlacementStream = 1;
constexpr std::uint64_t kReadingStream = 2;
constexpr std::uint64_t kReputationStream = 3;

}  // namespace

void validate_agent(const Agent& agent) {
  for (const auto& [other, r] : agent.reputation_out) {
    if (!(r >= 0)) {
      throw ArgumentError("agent " + agent.id.str() + " has negative reputation for " +
                          other.str());
    }
  }
  if (agent.is_adversary != agent.adversary_value.has_value()) {
    throw ArgumentError("agent " + agent.id.str() +
                        ": adversary_value must be present iff is_adversary");
  }
}

void validate_coalition(const SpatialCoalition& coalition, const std::vector<Agent>& agents) {
  if (coalition.members.empty()) throw ArgumentError("spatial coalition has no members");
  for (const auto& member : coalition.members) {
    auto it = std::find_if(agents.begin(), agents.end(),
                           [&](const Agent& a) { return a.id == member; });
    if (it == agents.end()) {
      throw ArgumentError("coalition member " + member.str() + " is not a known agent");
    }
    if (it->quadrant != coalition.quadrant) {
      throw ArgumentError("coalition member " + member.str() + " is in another quadrant");
    }
  }
}

double sample_measurement(SeededRng& rng, const Agent& agent, const ScenarioConfig& cfg) {
  if (agent.is_adversary) return cfg.mu_adv;
  return rng.normal(cfg.mu, cfg.sigma);
}

double sample_reputation(SeededRng& rng, const ScenarioConfig& cfg) {
  double u = rng.uniform01();
  double draw = rng.normal(cfg.mu_rep, cfg.sigma_rep);
  if (u < cfg.rep_high_prob) return std::max(draw, 0.0);
  return 1.0;
}

std::size_t adversary_count(std::size_t n_agents, double adversary_fraction) {
  return static_cast<std::size_t>(
      std::llround(static_cast<double>(n_agents) * adversary_fraction));
}

std::vector<Agent> build_population(const ScenarioConfig& cfg, SeededRng rng,
                                    const PopulationOptions& options) {
  validate(cfg);
  auto n = static_cast<std::size_t>(cfg.n_agents);
  auto placement = rng.substream(kPlacementStream);
  auto readings = rng.substream(kReadingStream);
  auto reputations = rng.substream(kReputationStream);

  std::vector<Agent> agents(n);
  for (std::size_t i = 0; i < n; ++i) {
    agents[i].id = AgentId{i};
    agents[i].quadrant = options.quadrant;
    agents[i].true_quadrant = options.quadrant;
    agents[i].measurement = sample_measurement(readings, agents[i], cfg);
    agents[i].reputation_score = sample_reputation(reputations, cfg);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  placement.shuffle(order);
  auto n_adv = std::min(adversary_count(n, cfg.adversary_fraction), n);
  for (std::size_t k = 0; k < n_adv; ++k) {
    auto& agent = agents[order[k]];
    agent.is_adversary = true;
    agent.adversary_value = cfg.mu_adv;
    agent.measurement = sample_measurement(readings, agent, cfg);
  }

  if (options.with_reputation_matrix) {
    // Honest voters trust honest candidates by their reputation score and give
    // adversaries the baseline 1; colluding adversaries trust each other at
    // mu_rep and give honest agents nothing.
    for (auto& voter : agents) {
      for (const auto& candidate : agents) {
        double r;
        if (voter.is_adversary) {
          r = candidate.is_adversary ? cfg.mu_rep : 0.0;
        } else {
          r = candidate.is_adversary ? 1.0 : candidate.reputation_score;
        }
        voter.reputation_out[candidate.id] = r;
      }
    }
  }
  return agents;
}

}  // namespace datamarket
