#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "datamarket/errors.hpp"
#include "datamarket/voting.hpp"
#include "oracles.hpp"

using namespace datamarket;
using namespace datamarket::voting;

namespace {

Agent agent(std::uint64_t id, double x) {
  Agent a;
  a.id = AgentId{id};
  a.measurement = x;
  return a;
}

std::vector<AgentId> ids(std::size_t n) {
  std::vector<AgentId> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(AgentId{i});
  return out;
}

PreferenceMatrix mixture(std::span<const Ordering> orderings, const std::vector<double>& w,
                         const std::vector<AgentId>& cands) {
  PreferenceMatrix s(cands);
  for (std::size_t o = 0; o < orderings.size(); ++o) {
    auto so = ordering_preference(orderings[o], cands);
    for (std::size_t j = 0; j < cands.size(); ++j) {
      for (std::size_t k = 0; k < cands.size(); ++k) s(j, k) += w[o] * so(j, k);
    }
  }
  return s;
}

double max_abs_diff(const PreferenceMatrix& a, const PreferenceMatrix& b) {
  double worst = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a(j, k) - b(j, k)));
  }
  return worst;
}

}  // namespace

TEST(PreferenceScore, FormulaExamples) {
  auto v = agent(0, 10);
  v.reputation_out[AgentId{1}] = 1;
  EXPECT_DOUBLE_EQ(preference_score(v, agent(1, 10)), 11.0);
  EXPECT_DOUBLE_EQ(preference_score(v, agent(1, 20)), 1.0);
  // (1 + 10) / (1 + 10)
  auto z = agent(0, 0);
  z.reputation_out[AgentId{1}] = 37;
  EXPECT_DOUBLE_EQ(preference_score(z, agent(1, 0)), 1.0);
}

TEST(PreferenceScore, MissingReputationThrows) {
  EXPECT_THROW(preference_score(agent(0, 1), agent(1, 1)), ArgumentError);
}

TEST(PreferenceScore, MonotoneInReputation) {
  auto v = agent(0, 2.5);
  double prev = -1;
  for (double r : {0.0, 0.5, 1.0, 10.0, 100.0}) {
    v.reputation_out[AgentId{1}] = r;
    double s = preference_score(v, agent(1, 4));
    EXPECT_GT(s, prev);
    prev = s;
  }
}

TEST(BuildAgentPreference, WorkedExampleRowPattern) {
  // Voter at x=1 trusting everyone equally: a_i (x=1) scores 2, a_j and a_k
  // (x=0 and x=2) both score 1.
  auto voter = agent(9, 1);
  std::vector<Agent> cands{agent(0, 1), agent(1, 0), agent(2, 2)};
  for (const auto& c : cands) voter.reputation_out[c.id] = 1;
  auto s = build_agent_preference(voter, cands);
  EXPECT_EQ(s(0, 1), 1.0);
  EXPECT_EQ(s(0, 2), 1.0);
  EXPECT_EQ(s(1, 2), 0.5);
  EXPECT_EQ(s(2, 1), 0.5);
  EXPECT_EQ(s(1, 0), 0.0);
  EXPECT_EQ(s(0, 0), 0.0);
  EXPECT_TRUE(s.satisfies_invariants());
}

TEST(BuildAgentPreference, IdenticalCandidatesAllHalf) {
  auto voter = agent(9, 3);
  std::vector<Agent> cands{agent(0, 3), agent(1, 3), agent(2, 3)};
  for (const auto& c : cands) voter.reputation_out[c.id] = 2;
  auto s = build_agent_preference(voter, cands);
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(s(j, k), j == k ? 0.0 : 0.5);
  }
}

TEST(BuildAgentPreference, TwoCandidatesStrict) {
  auto voter = agent(9, 0);
  std::vector<Agent> cands{agent(0, 0), agent(1, 0)};
  PreferenceScore score = [](const Agent&, const Agent& c) { return c.id.value == 0 ? 5.0 : 3.0; };
  auto s = build_agent_preference(voter, cands, score);
  EXPECT_EQ(s(0, 1), 1.0);
  EXPECT_EQ(s(1, 0), 0.0);
}

TEST(AggregatePreferences, MeanOfBallots) {
  PreferenceMatrix a(ids(2)), b(ids(2));
  a(0, 1) = 1;
  b(1, 0) = 1;
  std::vector<PreferenceMatrix> both{a, b};
  auto m = aggregate_preferences(both);
  EXPECT_EQ(m(0, 1), 0.5);
  EXPECT_EQ(m(1, 0), 0.5);
  std::vector<PreferenceMatrix> one{a};
  EXPECT_EQ(max_abs_diff(aggregate_preferences(one), a), 0.0);
  std::vector<PreferenceMatrix> copies(7, a);
  EXPECT_LE(max_abs_diff(aggregate_preferences(copies), a), 1e-15);
}

TEST(AggregatePreferences, MismatchIsStructuralError) {
  std::vector<PreferenceMatrix> bad{PreferenceMatrix(ids(2)), PreferenceMatrix(ids(3))};
  EXPECT_THROW(aggregate_preferences(bad), StructuralError);
}

TEST(EnumerateOrderings, SingleWinnerOfThree) {
  auto o = enumerate_orderings(ids(3), 1);
  ASSERT_EQ(o.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(o[i].preferred, std::vector<AgentId>{AgentId{i}});
    EXPECT_EQ(o[i].non_preferred.size(), 2u);
  }
}

TEST(EnumerateOrderings, Counts) {
  EXPECT_EQ(enumerate_orderings(ids(30), 3).size(), 4060u);
  EXPECT_EQ(enumerate_orderings(ids(5), 5).size(), 1u);
  EXPECT_THROW(enumerate_orderings(ids(3), 0), ArgumentError);
  EXPECT_THROW(enumerate_orderings(ids(3), 4), ArgumentError);
}

TEST(EnumerateOrderings, LexicographicDistinct) {
  auto o = enumerate_orderings(ids(5), 2);
  std::set<std::vector<AgentId>> seen;
  for (const auto& x : o) seen.insert(x.preferred);
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(o.front().preferred, (std::vector<AgentId>{AgentId{0}, AgentId{1}}));
  EXPECT_EQ(o.back().preferred, (std::vector<AgentId>{AgentId{3}, AgentId{4}}));
}

TEST(OrderingPreference, ThreeCaseRule) {
  auto c = ids(3);
  auto o = enumerate_orderings(c, 1);
  auto s = ordering_preference(o[0], c);
  EXPECT_EQ(s(0, 1), 1.0);
  EXPECT_EQ(s(0, 2), 1.0);
  EXPECT_EQ(s(1, 2), 0.5);
  EXPECT_EQ(s(1, 0), 0.0);
  auto all = ordering_preference(enumerate_orderings(c, 3)[0], c);
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(all(j, k), j == k ? 0.0 : 0.5);
  }
  auto two = ids(2);
  auto s2 = ordering_preference(enumerate_orderings(two, 1)[0], two);
  EXPECT_EQ(s2(0, 1), 1.0);
  EXPECT_EQ(s2(1, 0), 0.0);
}

TEST(SolveMaxEntropy, AllHalfGivesUniform) {
  for (auto [n, K] : std::vector<std::pair<int, int>>{{3, 1}, {5, 2}, {8, 3}, {6, 6}}) {
    auto c = ids(static_cast<std::size_t>(n));
    PreferenceMatrix s(c);
    for (std::size_t j = 0; j < c.size(); ++j) {
      for (std::size_t k = 0; k < c.size(); ++k) s(j, k) = j == k ? 0 : 0.5;
    }
    auto o = enumerate_orderings(c, K);
    auto d = solve_max_entropy(s, o, VotingConfig{});
    EXPECT_LE(d.residual, 1e-6);
    for (double p : d.probs) EXPECT_NEAR(p, 1.0 / static_cast<double>(o.size()), 1e-6);
  }
}

TEST(SolveMaxEntropy, RecoversFeasibleTargetAndMatchesOracle) {
  auto c = ids(3);
  auto o = enumerate_orderings(c, 1);
  std::vector<double> pi0{0.5, 0.3, 0.2};
  auto target = mixture(o, pi0, c);
  auto d = solve_max_entropy(target, o, VotingConfig{});
  EXPECT_TRUE(d.exact);
  EXPECT_LE(d.residual, 1e-8);
  auto implied = mixture(o, d.probs, c);
  EXPECT_LE(max_abs_diff(implied, target), 1e-3);

  std::vector<Eigen::MatrixXd> mats;
  for (const auto& x : o) {
    std::vector<int> pref(3, 0);
    for (auto id : x.preferred) pref[id.value] = 1;
    mats.push_back(oracle::ordering_matrix(pref));
  }
  auto ref = oracle::max_entropy_primal(mats, pi0);
  ASSERT_TRUE(ref.converged);
  for (std::size_t i = 0; i < o.size(); ++i) EXPECT_NEAR(d.probs[i], ref.probs[i], 1e-3);
}

TEST(SolveMaxEntropy, MostProbableSingleWinner) {
  auto c = ids(3);
  auto o = enumerate_orderings(c, 1);
  auto d = solve_max_entropy(mixture(o, {0.5, 0.3, 0.2}, c), o, VotingConfig{});
  auto best = std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin();
  EXPECT_EQ(o[static_cast<std::size_t>(best)].preferred, std::vector<AgentId>{AgentId{0}});
}

TEST(SolveMaxEntropy, ProbabilitiesFormDistribution) {
  SeededRng rng(4);
  auto c = ids(6);
  PreferenceMatrix s(c);
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t k = j + 1; k < 6; ++k) {
      s(j, k) = rng.uniform01();
      s(k, j) = 1 - s(j, k);
    }
  }
  auto o = enumerate_orderings(c, 2);
  auto d = solve_max_entropy(s, o, VotingConfig{});
  EXPECT_NEAR(std::accumulate(d.probs.begin(), d.probs.end(), 0.0), 1.0, 1e-9);
  for (double p : d.probs) EXPECT_GE(p, 0.0);
  EXPECT_GE(d.residual, 0.0);
  EXPECT_EQ(d.probs.size(), o.size());
}

TEST(SolveMaxEntropy, FeasibleMixturesWithinTolerance) {
  SeededRng rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    auto c = ids(7);
    auto o = enumerate_orderings(c, 3);
    std::vector<double> w(o.size());
    double total = 0;
    for (auto& x : w) total += (x = -std::log(rng.uniform01()));
    for (auto& x : w) x /= total;
    auto target = mixture(o, w, c);
    auto d = solve_max_entropy(target, o, VotingConfig{});
    EXPECT_LE(max_abs_diff(mixture(o, d.probs, c), target), 1e-3);
    // Max entropy beats the generating mixture.
    double h0 = 0;
    for (double p : w) h0 -= p * std::log(p);
    EXPECT_GE(d.entropy, h0 - 1e-9);
  }
}

TEST(SolveMaxEntropy, PermutationEquivariance) {
  SeededRng rng(21);
  auto c = ids(5);
  PreferenceMatrix s(c);
  for (std::size_t j = 0; j < 5; ++j) {
    for (std::size_t k = j + 1; k < 5; ++k) {
      s(j, k) = rng.uniform01();
      s(k, j) = 1 - s(j, k);
    }
  }
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  auto relabeled = s.submatrix(perm);
  auto o1 = enumerate_orderings(s.candidates(), 2);
  auto o2 = enumerate_orderings(relabeled.candidates(), 2);
  auto d1 = solve_max_entropy(s, o1, VotingConfig{});
  auto d2 = solve_max_entropy(relabeled, o2, VotingConfig{});
  std::map<std::set<AgentId>, double> p1, p2;
  for (std::size_t i = 0; i < o1.size(); ++i) {
    p1[{o1[i].preferred.begin(), o1[i].preferred.end()}] = d1.probs[i];
    p2[{o2[i].preferred.begin(), o2[i].preferred.end()}] = d2.probs[i];
  }
  for (const auto& [key, v] : p1) EXPECT_NEAR(v, p2.at(key), 1e-9);
}

TEST(SolveMaxEntropy, InfeasibleTargetDegradesGracefully) {
  // A Condorcet cycle cannot be represented by any mixture of K-subsets.
  auto c = ids(3);
  PreferenceMatrix s(c);
  s(0, 1) = s(1, 2) = s(2, 0) = 1.0;
  auto o = enumerate_orderings(c, 1);
  auto d = solve_max_entropy(s, o, VotingConfig{});
  EXPECT_FALSE(d.exact);
  EXPECT_GT(d.residual, 0.1);
  for (double p : d.probs) EXPECT_NEAR(p, 1.0 / 3, 1e-6);
}

TEST(SolveMaxEntropy, IterationCapRaisesSolverError) {
  SeededRng rng(2);
  auto c = ids(6);
  PreferenceMatrix s(c);
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t k = j + 1; k < 6; ++k) {
      s(j, k) = rng.uniform01();
      s(k, j) = 1 - s(j, k);
    }
  }
  VotingConfig cfg;
  cfg.max_iterations = 1;
  cfg.solver_tolerance = 1e-300;
  try {
    solve_max_entropy(s, enumerate_orderings(c, 2), cfg);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_FALSE(e.last_iterate().empty());
    EXPECT_TRUE(std::isfinite(e.residual()));
  }
}

TEST(SampleOutcome, PointMassAndFrequencies) {
  auto c = ids(3);
  OrderingDistribution d;
  d.orderings = enumerate_orderings(c, 1);
  d.probs = {1, 0, 0};
  SeededRng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(&sample_outcome(d, rng), &d.orderings[0]);

  d.probs = {0.5, 0.3, 0.2};
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 100000; ++i) {
    ++counts[static_cast<std::size_t>(&sample_outcome(d, rng) - d.orderings.data())];
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(counts[i] / 1e5, d.probs[i], 0.01);

  SeededRng a(77), b(77);
  EXPECT_EQ(&sample_outcome(d, a), &sample_outcome(d, b));
}

namespace {

std::vector<Agent> electorate(std::size_t n, std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.n_agents = static_cast<int>(n);
  cfg.adversary_fraction = 0.2;
  cfg.mu_adv = 10;
  return build_population(cfg, SeededRng(seed), {true, QuadrantId{1}});
}

}  // namespace

TEST(ElectCommittee, EveryoneWhenKEqualsN) {
  auto agents = electorate(5, 1);
  VotingConfig cfg;
  cfg.K = 5;
  cfg.J = 1;
  SeededRng rng(1);
  auto e = elect_committee(agents, cfg, rng);
  ASSERT_EQ(e.groups.size(), 1u);
  EXPECT_EQ(e.groups[0].size(), 5u);
}

TEST(ElectCommittee, ThreeDisjointTriples) {
  auto agents = electorate(12, 2);
  VotingConfig cfg;
  cfg.K = 3;
  cfg.J = 3;
  SeededRng rng(2);
  auto e = elect_committee(agents, cfg, rng);
  ASSERT_EQ(e.groups.size(), 3u);
  std::set<AgentId> all;
  for (const auto& g : e.groups) {
    EXPECT_EQ(g.size(), 3u);
    all.insert(g.begin(), g.end());
  }
  EXPECT_EQ(all.size(), 9u);
}

TEST(ElectCommittee, FifteenOfThirtyWithFiveSolves) {
  auto agents = electorate(30, 3);
  VotingConfig cfg;
  SeededRng rng(3);
  auto e = elect_committee(agents, cfg, rng);
  EXPECT_EQ(e.solver_calls, 5);
  auto w = e.winners();
  EXPECT_EQ(std::set<AgentId>(w.begin(), w.end()).size(), 15u);
  ASSERT_EQ(e.transcript.size(), 5u);
  EXPECT_EQ(e.transcript[0].ordering_set_size, 4060u);
  EXPECT_EQ(e.transcript[4].ordering_set_size, binomial(18, 3));

  std::ostringstream csv;
  write_transcript_csv(e, csv);
  std::string header;
  std::getline(std::istringstream(csv.str()) >> std::ws, header);
  EXPECT_EQ(header, "round,ordering_set_size,residual,entropy,winners");
}

TEST(ElectCommittee, DeterministicForSeed) {
  auto agents = electorate(15, 4);
  VotingConfig cfg;
  cfg.J = 2;
  SeededRng a(9), b(9);
  EXPECT_EQ(elect_committee(agents, cfg, a).groups, elect_committee(agents, cfg, b).groups);
}

TEST(ElectCommittee, TooFewAgentsRejected) {
  auto agents = electorate(8, 5);
  VotingConfig cfg;
  SeededRng rng(1);
  EXPECT_THROW(elect_committee(agents, cfg, rng), ArgumentError);
}

TEST(Complexity, InequalityAtThirtyThreeFive) {
  auto cc = complexity_comparison(30, 3, 5);
  EXPECT_EQ(cc.iterated, 4060u + 2925u + 2024u + 1330u + 816u);
  EXPECT_EQ(cc.repeated, 5u * 4060u);
  EXPECT_EQ(cc.single_shot, 155117520u);
  EXPECT_TRUE(cc.ordered());
  EXPECT_EQ(binomial(30, 15), 155117520u);
  EXPECT_THROW(binomial(200, 100), ArgumentError);
}
