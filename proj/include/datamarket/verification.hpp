#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <mutex>
#include <ostream>
#include <set>
#include <vector>

#include "datamarket/core.hpp"
#include "datamarket/hash.hpp"
#include "datamarket/rng.hpp"

namespace datamarket::verification {

struct Opening {
  AgentId agent;
  double value = 0.0;
  QuadrantId quadrant;
  std::int64_t tick = 0;
  std::array<std::uint8_t, 16> nonce{};
};

// Hash commitment to (agent, value, quadrant, tick) blinded by a random nonce.
struct Commitment {
  Digest digest{};
  Opening opening;
};

Digest commitment_digest(const Opening& opening);
Commitment commit(AgentId agent, double value, QuadrantId quadrant, std::int64_t tick,
                  SeededRng& rng);
bool verify_opening(const Commitment& commitment);

struct VerificationOutcome {
  AgentId agent;
  std::int64_t tick = 0;
  bool alpha = false;  // identity proof
  bool beta = false;   // position proof
  bool gamma = false;  // timestamp fresh
  bool admitted = false;
  Digest commitment{};
};

// Identity and proof-of-position checks are external mechanisms; callers
// inject them.
struct ProofOracle {
  std::function<bool(AgentId)> id_checker;
  std::function<bool(QuadrantId, const Commitment&)> pop_checker;
};

// Append-only record of every verification. Safe to write from several
// threads; entries are sorted by (tick, agent) on export.
class AuditLog {
 public:
  void append(const VerificationOutcome& outcome);
  std::vector<VerificationOutcome> entries() const;
  // CSV header: tick,agent,alpha,beta,gamma,admitted
  void write_csv(std::ostream& out) const;

 private:
  mutable std::mutex mutex_;
  std::vector<VerificationOutcome> entries_;
};

// Commits to the data point, then runs the ID proof, the position proof and
// the freshness check (now - tick <= ttl). Failures are reported as false
// flags, never as exceptions.
VerificationOutcome verify_agent(AgentId agent, double value, QuadrantId quadrant,
                                 std::int64_t tick, std::int64_t now, std::int64_t ttl,
                                 const ProofOracle& oracle, SeededRng& rng,
                                 AuditLog* audit = nullptr);

// Simulation oracle: identities are valid iff listed in `registry`; the
// position proof passes iff the committed quadrant matches the agent's true
// quadrant in `population`.
ProofOracle simulated_oracle(std::set<AgentId> registry, const std::vector<Agent>& population);

// Runs verify_agent for every agent (claimed quadrant, own measurement) and
// returns the admitted subset in input order.
std::vector<Agent> admit_population(const std::vector<Agent>& population,
                                    const ProofOracle& oracle, std::int64_t tick,
                                    std::int64_t now, std::int64_t ttl, SeededRng& rng,
                                    AuditLog* audit = nullptr);

}  // namespace datamarket::verification
