#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "datamarket/config.hpp"
#include "datamarket/core.hpp"
#include "datamarket/rng.hpp"

namespace datamarket::voting {

// n x n pairwise preference proportions over an ordered candidate list.
// Entry (j, k) is the share of voters (or probability) placing j above k.
class PreferenceMatrix {
 public:
  PreferenceMatrix() = default;
  explicit PreferenceMatrix(std::vector<AgentId> candidates);

  std::size_t size() const { return candidates_.size(); }
  const std::vector<AgentId>& candidates() const { return candidates_; }

  double operator()(std::size_t j, std::size_t k) const { return entries_[j * size() + k]; }
  double& operator()(std::size_t j, std::size_t k) { return entries_[j * size() + k]; }
  std::span<const double> entries() const { return entries_; }

  // Rows/columns for the given candidate positions, in the given order.
  PreferenceMatrix submatrix(std::span<const std::size_t> positions) const;

  // Zero diagonal, entries in [0,1], complementary off-diagonal pairs.
  bool satisfies_invariants(double tolerance = 1e-12) const;

 private:
  std::vector<AgentId> candidates_;
  std::vector<double> entries_;
};

// Strength with which `voter` prefers `candidate`; larger is better.
using PreferenceScore = std::function<double(const Agent& voter, const Agent& candidate)>;

// (1 + |x_i| r_{i->j}) / (1 + |x_i - x_j|). Throws ArgumentError when the
// voter holds no reputation entry for the candidate.
double preference_score(const Agent& voter, const Agent& candidate);

// Scores closer than this are treated as equal preference.
inline constexpr double kScoreTieTolerance = 1e-12;

// One voter's ballot: 1 / 0.5 / 0 by comparing scores of each pair.
PreferenceMatrix build_agent_preference(const Agent& voter, std::span<const Agent> candidates,
                                        const PreferenceScore& score = preference_score);

// Entrywise mean; the ballots must share dimension and candidate order.
PreferenceMatrix aggregate_preferences(std::span<const PreferenceMatrix> matrices);

// A K-subset of the candidates ranked above the rest; order inside each group
// carries no information.
struct Ordering {
  std::vector<AgentId> preferred;
  std::vector<AgentId> non_preferred;

  bool operator==(const Ordering&) const = default;
};

// All C(n, K) orderings, preferred subsets in lexicographic order of
// candidate positions.
std::vector<Ordering> enumerate_orderings(std::span<const AgentId> candidates, int K);

PreferenceMatrix ordering_preference(const Ordering& ordering,
                                     std::span<const AgentId> candidates);

struct OrderingDistribution {
  std::vector<Ordering> orderings;
  std::vector<double> probs;
  double residual = 0.0;  // max |S(pi) - S_A| over off-diagonal entries
  double entropy = 0.0;
  int iterations = 0;
  // True when S_A was exactly achievable and the equality-constrained
  // program was solved instead of the penalized one.
  bool exact = false;

  // Marginal probability that each candidate of `candidates` is preferred.
  std::vector<double> preferred_marginals(std::span<const AgentId> candidates) const;
};

// Maximum-entropy distribution over `orderings` whose implied pairwise matrix
// S(pi) = sum_o pi(o) S(o) matches S_A.
//
// When S_A lies in the achievable set (and the ordering set is complete) the
// equality-constrained program is solved exactly. Otherwise the penalized
// objective H(pi) - rho * sum_{j<k} (S(pi)_jk - S_A_jk)^2 is maximized. Both
// are solved by damped Newton iterations on the exponential-family form
// pi(o) ~ exp(sum_{j in o} eta_j), stopping once the gradient infinity-norm
// drops below cfg.solver_tolerance. Throws SolverError after
// cfg.max_iterations.
OrderingDistribution solve_max_entropy(const PreferenceMatrix& S_A,
                                       std::span<const Ordering> orderings,
                                       const VotingConfig& cfg);

// Draws orderings[i] with probability probs[i].
const Ordering& sample_outcome(const OrderingDistribution& dist, SeededRng& rng);

struct RoundTranscript {
  int round = 0;
  std::size_t ordering_set_size = 0;
  double residual = 0.0;
  double entropy = 0.0;
  std::vector<AgentId> winners;
};

struct Election {
  std::vector<std::vector<AgentId>> groups;  // J disjoint groups of K winners
  std::vector<RoundTranscript> transcript;
  int solver_calls = 0;

  std::vector<AgentId> winners() const;
};

// Iterated C-MEV: every agent votes once, S(A) is formed over all agents, and
// each of the J rounds elects K winners among the candidates not yet elected
// using the corresponding submatrix of S(A). Elected agents keep voting.
Election elect_committee(std::span<const Agent> agents, const VotingConfig& cfg,
                         SeededRng& rng, const PreferenceScore& score = preference_score);

// CSV header: round,ordering_set_size,residual,entropy,winners
void write_transcript_csv(const Election& election, std::ostream& out);

// Exact binomial coefficient; throws ArgumentError on 64-bit overflow.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

struct ComplexityComparison {
  std::uint64_t iterated = 0;     // sum_{i=0}^{J-1} C(N - K i, K)
  std::uint64_t repeated = 0;     // J C(N, K)
  std::uint64_t single_shot = 0;  // C(N, K J)

  bool ordered() const { return iterated < repeated && repeated < single_shot; }
};

ComplexityComparison complexity_comparison(std::uint64_t N, std::uint64_t K, std::uint64_t J);

}  // namespace datamarket::voting
