#include "datamarket/verification.hpp"

#include <algorithm>
#include <map>
#include <memory>

#include "datamarket/errors.hpp"

namespace datamarket::verification {

Digest commitment_digest(const Opening& opening) {
  return HashWriter()
      .str("datamarket.commitment.v1")
      .u64(opening.agent.value)
      .f64(opening.value)
      .i64(opening.quadrant.q)
      .i64(opening.tick)
      .bytes(opening.nonce)
      .finish();
}

Commitment commit(AgentId agent, double value, QuadrantId quadrant, std::int64_t tick,
                  SeededRng& rng) {
  Commitment c;
  c.opening = Opening{agent, value, quadrant, tick, rng.nonce128()};
  c.digest = commitment_digest(c.opening);
  return c;
}

bool verify_opening(const Commitment& commitment) {
  return commitment_digest(commitment.opening) == commitment.digest;
}

void AuditLog::append(const VerificationOutcome& outcome) {
  std::lock_guard lock(mutex_);
  entries_.push_back(outcome);
}

std::vector<VerificationOutcome> AuditLog::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

void AuditLog::write_csv(std::ostream& out) const {
  auto rows = entries();
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.tick, a.agent) < std::tie(b.tick, b.agent);
  });
  out << "tick,agent,alpha,beta,gamma,admitted\n";
  for (const auto& r : rows) {
    out << r.tick << ',' << r.agent.str() << ',' << r.alpha << ',' << r.beta << ','
        << r.gamma << ',' << r.admitted << '\n';
  }
}

VerificationOutcome verify_agent(AgentId agent, double value, QuadrantId quadrant,
                                 std::int64_t tick, std::int64_t now, std::int64_t ttl,
                                 const ProofOracle& oracle, SeededRng& rng, AuditLog* audit) {
  if (ttl < 0) throw ArgumentError("ttl must be non-negative");
  auto commitment = commit(agent, value, quadrant, tick, rng);

  VerificationOutcome outcome;
  outcome.agent = agent;
  outcome.tick = tick;
  outcome.commitment = commitment.digest;
  outcome.alpha = oracle.id_checker && oracle.id_checker(agent);
  outcome.beta = oracle.pop_checker && oracle.pop_checker(quadrant, commitment);
  outcome.gamma = now - tick <= ttl;
  outcome.admitted = outcome.alpha && outcome.beta && outcome.gamma;
  if (audit) audit->append(outcome);
  return outcome;
}

ProofOracle simulated_oracle(std::set<AgentId> registry, const std::vector<Agent>& population) {
  auto truth = std::make_shared<std::map<AgentId, QuadrantId>>();
  for (const auto& agent : population) truth->emplace(agent.id, agent.true_quadrant);
  auto ids = std::make_shared<std::set<AgentId>>(std::move(registry));

  ProofOracle oracle;
  oracle.id_checker = [ids](AgentId id) { return ids->contains(id); };
  oracle.pop_checker = [truth](QuadrantId claimed, const Commitment& c) {
    if (!verify_opening(c) || c.opening.quadrant != claimed) return false;
    auto it = truth->find(c.opening.agent);
    return it != truth->end() && it->second == claimed;
  };
  return oracle;
}

std::vector<Agent> admit_population(const std::vector<Agent>& population,
                                    const ProofOracle& oracle, std::int64_t tick,
                                    std::int64_t now, std::int64_t ttl, SeededRng& rng,
                                    AuditLog* audit) {
  std::vector<Agent> admitted;
  for (const auto& agent : population) {
    auto outcome = verify_agent(agent.id, agent.measurement, agent.quadrant, tick, now, ttl,
                                oracle, rng, audit);
    if (outcome.admitted) admitted.push_back(agent);
  }
  return admitted;
}

}  // namespace datamarket::verification
