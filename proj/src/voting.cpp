#include "datamarket/voting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <Eigen/Dense>

#include "datamarket/csv.hpp"
#include "datamarket/errors.hpp"

namespace datamarket::voting {

PreferenceMatrix::PreferenceMatrix(std::vector<AgentId> candidates)
    : candidates_(std::move(candidates)), entries_(candidates_.size() * candidates_.size(), 0.0) {}

PreferenceMatrix PreferenceMatrix::submatrix(std::span<const std::size_t> positions) const {
  std::vector<AgentId> ids;
  ids.reserve(positions.size());
  for (auto p : positions) ids.push_back(candidates_.at(p));
  PreferenceMatrix out(std::move(ids));
  for (std::size_t a = 0; a < positions.size(); ++a) {
    for (std::size_t b = 0; b < positions.size(); ++b) {
      out(a, b) = (*this)(positions[a], positions[b]);
    }
  }
  return out;
}

bool PreferenceMatrix::satisfies_invariants(double tolerance) const {
  for (std::size_t j = 0; j < size(); ++j) {
    if ((*this)(j, j) != 0.0) return false;
    for (std::size_t k = 0; k < size(); ++k) {
      double v = (*this)(j, k);
      if (v < -tolerance || v > 1 + tolerance) return false;
      if (j != k && std::abs(v + (*this)(k, j) - 1.0) > tolerance) return false;
    }
  }
  return true;
}

double preference_score(const Agent& voter, const Agent& candidate) {
  auto it = voter.reputation_out.find(candidate.id);
  if (it == voter.reputation_out.end()) {
    throw ArgumentError("voter " + voter.id.str() + " holds no reputation for candidate " +
                        candidate.id.str());
  }
  if (!(it->second >= 0)) throw ArgumentError("reputation must be non-negative");
  double x_i = voter.measurement;
  return (1.0 + std::abs(x_i) * it->second) / (1.0 + std::abs(x_i - candidate.measurement));
}

PreferenceMatrix build_agent_preference(const Agent& voter, std::span<const Agent> candidates,
                                        const PreferenceScore& score) {
  if (candidates.empty()) throw ArgumentError("ballot needs at least one candidate");
  std::vector<AgentId> ids;
  std::vector<double> scores;
  ids.reserve(candidates.size());
  scores.reserve(candidates.size());
  for (const auto& c : candidates) {
    ids.push_back(c.id);
    scores.push_back(score(voter, c));
  }
  PreferenceMatrix ballot(std::move(ids));
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    for (std::size_t k = j + 1; k < candidates.size(); ++k) {
      double diff = scores[j] - scores[k];
      double v = std::abs(diff) <= kScoreTieTolerance ? 0.5 : (diff > 0 ? 1.0 : 0.0);
      ballot(j, k) = v;
      ballot(k, j) = 1.0 - v;
    }
  }
  return ballot;
}

PreferenceMatrix aggregate_preferences(std::span<const PreferenceMatrix> matrices) {
  if (matrices.empty()) throw ArgumentError("no preference matrices to aggregate");
  const auto& first = matrices.front();
  PreferenceMatrix out(first.candidates());
  const std::size_t n = first.size();
  for (const auto& m : matrices) {
    if (m.size() != n || m.candidates() != first.candidates()) {
      throw StructuralError("preference matrices disagree on dimension or candidate order");
    }
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) out(j, k) += m(j, k);
    }
  }
  const double scale = 1.0 / static_cast<double>(matrices.size());
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) out(j, k) *= scale;
  }
  return out;
}

namespace {

// K-subsets of {0..n-1} in lexicographic order, flattened K entries each.
struct Combinations {
  std::size_t n = 0;
  std::size_t K = 0;
  std::vector<std::uint32_t> members;

  std::size_t count() const { return K == 0 ? 0 : members.size() / K; }
  const std::uint32_t* at(std::size_t o) const { return members.data() + o * K; }
};

Combinations all_combinations(std::size_t n, std::size_t K) {
  Combinations out{n, K, {}};
  out.members.reserve(binomial(n, K) * K);
  std::vector<std::uint32_t> current(K);
  std::iota(current.begin(), current.end(), 0u);
  while (true) {
    out.members.insert(out.members.end(), current.begin(), current.end());
    // Advance to the next combination.
    std::size_t i = K;
    while (i > 0 && current[i - 1] == n - K + (i - 1)) --i;
    if (i == 0) break;
    ++current[i - 1];
    for (std::size_t j = i; j < K; ++j) current[j] = current[j - 1] + 1;
  }
  return out;
}

struct SolveResult {
  std::vector<double> probs;
  std::vector<double> marginals;
  double residual = 0.0;
  double entropy = 0.0;
  int iterations = 0;
  bool exact = false;
};

double pairwise_residual(const PreferenceMatrix& S, std::span<const double> marginals) {
  double worst = 0.0;
  for (std::size_t j = 0; j < S.size(); ++j) {
    for (std::size_t k = 0; k < S.size(); ++k) {
      if (j == k) continue;
      double implied = 0.5 + 0.5 * (marginals[j] - marginals[k]);
      worst = std::max(worst, std::abs(implied - S(j, k)));
    }
  }
  return worst;
}

// Least-squares projection of S onto the matrices achievable by K-subset
// orderings. Achievable matrices are exactly 0.5 + (p_j - p_k)/2 with p in
// the hypersimplex {0 <= p <= 1, sum p = K}, and on that set the squared
// residual is isotropic around the unconstrained optimum, so the projection
// reduces to clipping a shifted target.
std::vector<double> project_marginals(const PreferenceMatrix& S, std::size_t K) {
  const std::size_t n = S.size();
  std::vector<double> a(n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != j) d += S(j, k) - 0.5;
    }
    a[j] = (2.0 * d + static_cast<double>(K)) / static_cast<double>(n);
  }
  auto mass = [&](double shift) {
    double total = 0.0;
    for (double v : a) total += std::clamp(v - shift, 0.0, 1.0);
    return total;
  };
  double lo = *std::min_element(a.begin(), a.end()) - 1.0;
  double hi = *std::max_element(a.begin(), a.end());
  for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
    double mid = 0.5 * (lo + hi);
    (mass(mid) > static_cast<double>(K) ? lo : hi) = mid;
  }
  double shift = 0.5 * (lo + hi);
  std::vector<double> p(n);
  for (std::size_t j = 0; j < n; ++j) p[j] = std::clamp(a[j] - shift, 0.0, 1.0);
  return p;
}

// Minimizes F(eta) = log sum_o exp(sum_{j in o} eta_j) - target . eta
//                    + tau/2 |eta|^2
// over the free coordinates, with the distribution restricted to `active`
// combinations. The minimizer's softmax is the requested distribution.
class NewtonSolver {
 public:
  NewtonSolver(const Combinations& combos, std::vector<char> active, std::vector<int> free_idx,
               std::vector<double> target, double tau)
      : combos_(combos),
        active_(std::move(active)),
        free_(std::move(free_idx)),
        target_(std::move(target)),
        tau_(tau),
        eta_(combos.n, 0.0),
        probs_(combos.count(), 0.0),
        marginals_(combos.n, 0.0) {}

  const std::vector<double>& marginals() const { return marginals_; }

  SolveResult run(const VotingConfig& cfg) {
    const auto nf = free_.size();
    double f = evaluate(eta_, true);
    int iteration = 0;
    Eigen::VectorXd grad(nf), step(nf);
    Eigen::MatrixXd hess(nf, nf);
    while (true) {
      gradient_and_hessian(grad, hess);
      if (nf == 0 || grad.lpNorm<Eigen::Infinity>() <= cfg.solver_tolerance) break;
      if (iteration >= cfg.max_iterations) {
        throw SolverError("max-entropy solver did not converge within " +
                              std::to_string(cfg.max_iterations) + " iterations",
                          probs_, std::numeric_limits<double>::quiet_NaN());
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
      step = ldlt.solve(-grad);
      if (!step.allFinite() || grad.dot(step) >= 0) step = -grad;

      // Backtracking line search with the Armijo condition.
      double slope = grad.dot(step);
      double alpha = 1.0;
      std::vector<double> trial = eta_;
      bool accepted = false;
      // Once the predicted decrease drops below the rounding level of F the
      // Armijo test is meaningless; the iterate is inside the quadratic
      // convergence region, so take the full Newton step.
      if (-slope <= 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f))) {
        for (std::size_t a = 0; a < nf; ++a) trial[free_[a]] = eta_[free_[a]] + step[a];
        eta_ = trial;
        f = evaluate(eta_, false);
        accepted = true;
      }
      for (int halving = 0; halving < 60 && !accepted; ++halving) {
        for (std::size_t a = 0; a < nf; ++a) trial[free_[a]] = eta_[free_[a]] + alpha * step[a];
        double f_trial = evaluate(trial, false);
        if (f_trial <= f + 1e-4 * alpha * slope) {
          eta_ = trial;
          f = f_trial;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      ++iteration;
      evaluate(eta_, true);
      if (!accepted) {
        // No representable decrease left; the iterate sits at the numerical
        // floor of F. Accept it if the gradient is small in relative terms.
        if (grad.lpNorm<Eigen::Infinity>() <= std::sqrt(cfg.solver_tolerance)) break;
        throw SolverError("max-entropy line search stalled", probs_,
                          std::numeric_limits<double>::quiet_NaN());
      }
    }
    SolveResult result;
    result.probs = probs_;
    result.marginals = marginals_;
    result.iterations = iteration;
    double h = 0.0;
    for (double p : probs_) {
      if (p > 0) h -= p * std::log(p);
    }
    result.entropy = h;
    return result;
  }

 private:
  // Objective value; refreshes probs_, marginals_ and the second-moment
  // matrix when `store` is set.
  double evaluate(const std::vector<double>& eta, bool store) {
    const auto count = combos_.count();
    const auto K = combos_.K;
    thetas_.resize(count);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < count; ++o) {
      if (!active_[o]) continue;
      const auto* m = combos_.at(o);
      double theta = 0.0;
      for (std::size_t i = 0; i < K; ++i) theta += eta[m[i]];
      thetas_[o] = theta;
      peak = std::max(peak, theta);
    }
    double z = 0.0;
    for (std::size_t o = 0; o < count; ++o) {
      if (active_[o]) z += std::exp(thetas_[o] - peak);
    }
    double value = peak + std::log(z);
    for (std::size_t a = 0; a < free_.size(); ++a) {
      double e = eta[free_[a]];
      value += -target_[free_[a]] * e + 0.5 * tau_ * e * e;
    }
    if (store) {
      const std::size_t n = combos_.n;
      std::fill(marginals_.begin(), marginals_.end(), 0.0);
      moments_.assign(n * n, 0.0);
      for (std::size_t o = 0; o < count; ++o) {
        if (!active_[o]) {
          probs_[o] = 0.0;
          continue;
        }
        double p = std::exp(thetas_[o] - peak) / z;
        probs_[o] = p;
        const auto* m = combos_.at(o);
        for (std::size_t i = 0; i < K; ++i) {
          marginals_[m[i]] += p;
          for (std::size_t l = 0; l < K; ++l) moments_[m[i] * n + m[l]] += p;
        }
      }
    }
    return value;
  }

  void gradient_and_hessian(Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
    const auto nf = free_.size();
    const std::size_t n = combos_.n;
    // In the unpenalized problem the objective is flat along the all-ones
    // direction (every ordering prefers exactly K candidates); the rank-one
    // term pins that direction without changing the step elsewhere.
    const double pin = tau_ == 0.0 && nf > 0 ? 1.0 / static_cast<double>(nf) : 0.0;
    for (std::size_t a = 0; a < nf; ++a) {
      auto j = free_[a];
      grad[a] = marginals_[j] - target_[j] + tau_ * eta_[j];
      for (std::size_t b = 0; b < nf; ++b) {
        auto l = free_[b];
        hess(a, b) = moments_[j * n + l] - marginals_[j] * marginals_[l] + pin;
      }
      hess(a, a) += tau_;
    }
  }

  const Combinations& combos_;
  std::vector<char> active_;
  std::vector<int> free_;
  std::vector<double> target_;
  double tau_;
  std::vector<double> eta_;
  std::vector<double> probs_;
  std::vector<double> marginals_;
  std::vector<double> moments_;
  std::vector<double> thetas_;
};

SolveResult run_with_residual(NewtonSolver& solver, const PreferenceMatrix& S,
                              const VotingConfig& cfg) {
  try {
    return solver.run(cfg);
  } catch (const SolverError& e) {
    throw SolverError(e.what(), e.last_iterate(), pairwise_residual(S, solver.marginals()));
  }
}

// Boundary tolerance for deciding that an exact target pins a candidate in or
// out of every ordering.
constexpr double kBoundary = 1e-12;

SolveResult solve_combinations(const PreferenceMatrix& S, const Combinations& combos,
                               bool complete, const VotingConfig& cfg) {
  const std::size_t n = combos.n;
  const std::size_t K = combos.K;

  if (complete) {
    auto projected = project_marginals(S, K);
    if (pairwise_residual(S, projected) <= cfg.solver_tolerance) {
      std::vector<char> active(combos.count(), 1);
      std::vector<int> free_idx;
      for (std::size_t j = 0; j < n; ++j) {
        if (projected[j] > kBoundary && projected[j] < 1.0 - kBoundary) {
          free_idx.push_back(static_cast<int>(j));
        }
      }
      for (std::size_t o = 0; o < combos.count(); ++o) {
        std::vector<char> in(n, 0);
        for (std::size_t i = 0; i < K; ++i) in[combos.at(o)[i]] = 1;
        for (std::size_t j = 0; j < n; ++j) {
          if ((projected[j] <= kBoundary && in[j]) ||
              (projected[j] >= 1.0 - kBoundary && !in[j])) {
            active[o] = 0;
            break;
          }
        }
      }
      NewtonSolver solver(combos, std::move(active), std::move(free_idx), projected, 0.0);
      auto result = run_with_residual(solver, S, cfg);
      result.exact = true;
      result.residual = pairwise_residual(S, result.marginals);
      return result;
    }
  }

  std::vector<double> target(n);
  for (std::size_t j = 0; j < n; ++j) {
    double row = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != j) row += S(j, k);
    }
    target[j] = 2.0 * row / static_cast<double>(n);
  }
  std::vector<int> free_idx(n);
  std::iota(free_idx.begin(), free_idx.end(), 0);
  const double tau = 2.0 / (cfg.penalty_rho * static_cast<double>(n));
  NewtonSolver solver(combos, std::vector<char>(combos.count(), 1), std::move(free_idx),
                      std::move(target), tau);
  auto result = run_with_residual(solver, S, cfg);
  result.residual = pairwise_residual(S, result.marginals);
  return result;
}

std::size_t sample_index(std::span<const double> probs, SeededRng& rng) {
  double u = rng.uniform01();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0) continue;
    cumulative += probs[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  return last_positive;
}

}  // namespace

std::vector<Ordering> enumerate_orderings(std::span<const AgentId> candidates, int K) {
  if (K < 1 || static_cast<std::size_t>(K) > candidates.size()) {
    throw ArgumentError("K must lie in [1, number of candidates]");
  }
  auto combos = all_combinations(candidates.size(), static_cast<std::size_t>(K));
  std::vector<Ordering> out;
  out.reserve(combos.count());
  for (std::size_t o = 0; o < combos.count(); ++o) {
    Ordering ordering;
    std::vector<char> in(candidates.size(), 0);
    for (std::size_t i = 0; i < combos.K; ++i) in[combos.at(o)[i]] = 1;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      (in[j] ? ordering.preferred : ordering.non_preferred).push_back(candidates[j]);
    }
    out.push_back(std::move(ordering));
  }
  return out;
}

PreferenceMatrix ordering_preference(const Ordering& ordering,
                                     std::span<const AgentId> candidates) {
  PreferenceMatrix out(std::vector<AgentId>(candidates.begin(), candidates.end()));
  std::vector<char> preferred(candidates.size(), 0);
  std::size_t placed = 0;
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    bool in_p = std::find(ordering.preferred.begin(), ordering.preferred.end(), candidates[j]) !=
                ordering.preferred.end();
    bool in_np = std::find(ordering.non_preferred.begin(), ordering.non_preferred.end(),
                           candidates[j]) != ordering.non_preferred.end();
    if (in_p == in_np) {
      throw ArgumentError("ordering does not partition the candidate set");
    }
    preferred[j] = in_p;
    ++placed;
  }
  if (placed != ordering.preferred.size() + ordering.non_preferred.size()) {
    throw ArgumentError("ordering mentions agents outside the candidate set");
  }
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      if (j == k) continue;
      if (preferred[j] == preferred[k]) {
        out(j, k) = 0.5;
      } else {
        out(j, k) = preferred[j] ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

std::vector<double> OrderingDistribution::preferred_marginals(
    std::span<const AgentId> candidates) const {
  std::vector<double> out(candidates.size(), 0.0);
  for (std::size_t o = 0; o < orderings.size(); ++o) {
    for (const auto& id : orderings[o].preferred) {
      auto it = std::find(candidates.begin(), candidates.end(), id);
      if (it != candidates.end()) out[static_cast<std::size_t>(it - candidates.begin())] += probs[o];
    }
  }
  return out;
}

OrderingDistribution solve_max_entropy(const PreferenceMatrix& S_A,
                                       std::span<const Ordering> orderings,
                                       const VotingConfig& cfg) {
  validate(cfg);
  if (orderings.empty()) throw ArgumentError("ordering set is empty");
  if (!S_A.satisfies_invariants(1e-9)) {
    throw ArgumentError("S_A violates the preference-matrix invariants");
  }
  const auto& ids = S_A.candidates();
  std::map<AgentId, std::uint32_t> position;
  for (std::size_t j = 0; j < ids.size(); ++j) position[ids[j]] = static_cast<std::uint32_t>(j);

  const std::size_t K = orderings.front().preferred.size();
  if (K == 0 || K > ids.size()) throw ArgumentError("orderings must prefer 1..n candidates");
  Combinations combos{ids.size(), K, {}};
  combos.members.reserve(orderings.size() * K);
  for (const auto& o : orderings) {
    if (o.preferred.size() != K || o.preferred.size() + o.non_preferred.size() != ids.size()) {
      throw ArgumentError("every ordering must split the candidates into K preferred and the rest");
    }
    std::vector<std::uint32_t> members;
    for (const auto& id : o.preferred) {
      auto it = position.find(id);
      if (it == position.end()) throw ArgumentError("ordering prefers an unknown candidate");
      members.push_back(it->second);
    }
    std::sort(members.begin(), members.end());
    if (std::adjacent_find(members.begin(), members.end()) != members.end()) {
      throw ArgumentError("ordering prefers a candidate twice");
    }
    combos.members.insert(combos.members.end(), members.begin(), members.end());
  }

  std::vector<std::vector<std::uint32_t>> distinct;
  for (std::size_t o = 0; o < combos.count(); ++o) {
    distinct.emplace_back(combos.at(o), combos.at(o) + K);
  }
  std::sort(distinct.begin(), distinct.end());
  bool complete = std::adjacent_find(distinct.begin(), distinct.end()) == distinct.end() &&
                  distinct.size() == binomial(ids.size(), K);

  auto solved = solve_combinations(S_A, combos, complete, cfg);
  OrderingDistribution dist;
  dist.orderings.assign(orderings.begin(), orderings.end());
  dist.probs = std::move(solved.probs);
  dist.residual = solved.residual;
  dist.entropy = solved.entropy;
  dist.iterations = solved.iterations;
  dist.exact = solved.exact;
  return dist;
}

const Ordering& sample_outcome(const OrderingDistribution& dist, SeededRng& rng) {
  if (dist.orderings.empty() || dist.orderings.size() != dist.probs.size()) {
    throw ArgumentError("ordering distribution is empty or inconsistent");
  }
  return dist.orderings[sample_index(dist.probs, rng)];
}

std::vector<AgentId> Election::winners() const {
  std::vector<AgentId> out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

Election elect_committee(std::span<const Agent> agents, const VotingConfig& cfg, SeededRng& rng,
                         const PreferenceScore& score) {
  validate(cfg);
  const auto K = static_cast<std::size_t>(cfg.K);
  const auto J = static_cast<std::size_t>(cfg.J);
  if (agents.size() < K * J) {
    throw ArgumentError("need at least K*J agents to elect J groups of K");
  }

  std::vector<PreferenceMatrix> ballots;
  ballots.reserve(agents.size());
  for (const auto& voter : agents) ballots.push_back(build_agent_preference(voter, agents, score));
  const auto electorate = aggregate_preferences(ballots);

  Election election;
  std::vector<std::size_t> remaining(agents.size());
  std::iota(remaining.begin(), remaining.end(), 0);
  for (std::size_t round = 1; round <= J; ++round) {
    auto sub = electorate.submatrix(remaining);
    auto combos = all_combinations(remaining.size(), K);
    auto solved = solve_combinations(sub, combos, true, cfg);
    ++election.solver_calls;
    auto drawn = sample_index(solved.probs, rng);

    std::vector<AgentId> winners;
    std::vector<char> won(remaining.size(), 0);
    for (std::size_t i = 0; i < K; ++i) {
      auto local = combos.at(drawn)[i];
      won[local] = 1;
      winners.push_back(agents[remaining[local]].id);
    }
    election.transcript.push_back(
        {static_cast<int>(round), combos.count(), solved.residual, solved.entropy, winners});
    election.groups.push_back(std::move(winners));

    std::vector<std::size_t> next;
    for (std::size_t local = 0; local < remaining.size(); ++local) {
      if (!won[local]) next.push_back(remaining[local]);
    }
    remaining = std::move(next);
  }
  return election;
}

void write_transcript_csv(const Election& election, std::ostream& out) {
  out << "round,ordering_set_size,residual,entropy,winners\n";
  for (const auto& r : election.transcript) {
    out << r.round << ',' << r.ordering_set_size << ',' << csv::number(r.residual) << ','
        << csv::number(r.entropy) << ',';
    for (std::size_t i = 0; i < r.winners.size(); ++i) {
      out << (i ? ";" : "") << r.winners[i].str();
    }
    out << '\n';
  }
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    result = result * (n - k + i) / i;
    if (result > std::numeric_limits<std::uint64_t>::max()) {
      throw ArgumentError("binomial coefficient overflows 64 bits");
    }
  }
  return static_cast<std::uint64_t>(result);
}

ComplexityComparison complexity_comparison(std::uint64_t N, std::uint64_t K, std::uint64_t J) {
  if (K * J > N) throw ArgumentError("K*J exceeds N");
  ComplexityComparison out;
  for (std::uint64_t i = 0; i < J; ++i) out.iterated += binomial(N - K * i, K);
  out.repeated = J * binomial(N, K);
  out.single_shot = binomial(N, K * J);
  return out;
}

}  // namespace datamarket::voting
