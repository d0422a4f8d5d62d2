#include "datamarket/simharness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "datamarket/consensus.hpp"
#include "datamarket/csv.hpp"
#include "datamarket/errors.hpp"
#include "datamarket/verification.hpp"
#include "datamarket/voting.hpp"

namespace datamarket::sim {

AttackModel AttackModel::sybil(int extra) {
  AttackModel a;
  a.kind = Kind::Sybil;
  a.extra_identities = extra;
  return a;
}

AttackModel AttackModel::wormhole(QuadrantId false_quadrant, double share) {
  AttackModel a;
  a.kind = Kind::Wormhole;
  a.false_quadrant = false_quadrant;
  a.share = share;
  return a;
}

AttackModel AttackModel::poisoning(double share, double mu_adv) {
  AttackModel a;
  a.kind = Kind::DataPoisoning;
  a.share = share;
  a.mu_adv = mu_adv;
  return a;
}

void validate(const AttackModel& attack) {
  if (!(attack.share >= 0.0 && attack.share <= 1.0)) {
    throw ArgumentError("attack share must lie in [0, 1]");
  }
  if (attack.kind == AttackModel::Kind::Sybil && attack.extra_identities < 1) {
    throw ArgumentError("sybil attack needs at least one extra identity");
  }
  if (!std::isfinite(attack.mu_adv)) throw ArgumentError("mu_adv must be finite");
}

std::vector<Agent> apply_attack(std::vector<Agent> population, const AttackModel& attack,
                                SeededRng& rng) {
  validate(attack);
  using Kind = AttackModel::Kind;
  if (attack.kind == Kind::None || population.empty()) return population;

  if (attack.kind == Kind::Sybil) {
    std::uint64_t next_id = 0;
    for (const auto& a : population) next_id = std::max(next_id, a.id.value + 1);
    std::vector<Agent> clones;
    for (int k = 0; k < attack.extra_identities; ++k) {
      auto source = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(population.size()) - 1));
      Agent clone = population[source];
      clone.id = AgentId{next_id++};
      clones.push_back(std::move(clone));
    }
    population.insert(population.end(), clones.begin(), clones.end());
    return population;
  }

  std::vector<std::size_t> order(population.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  auto count = std::min(adversary_count(population.size(), attack.share), population.size());
  for (std::size_t k = 0; k < count; ++k) {
    auto& agent = population[order[k]];
    if (attack.kind == Kind::Wormhole) {
      agent.quadrant = attack.false_quadrant;
    } else {
      agent.is_adversary = true;
      agent.adversary_value = attack.mu_adv;
      agent.measurement = attack.mu_adv;
    }
  }
  return population;
}

void validate(const ExperimentSpec& spec) {
  validate(spec.base);
  if (spec.strategies.empty()) throw ArgumentError("experiment needs at least one strategy");
  for (const auto& s : spec.strategies) validate(s);
  if (spec.adversary_shares.empty() || spec.rep_shares.empty()) {
    throw ArgumentError("experiment sweep is empty");
  }
  for (const auto* grid : {&spec.adversary_shares, &spec.rep_shares}) {
    for (double v : *grid) {
      if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("sweep shares must lie in [0, 1]");
    }
  }
  if (!std::is_sorted(spec.adversary_shares.begin(), spec.adversary_shares.end())) {
    throw ArgumentError("adversary shares must be ascending");
  }
  if (!(spec.breakdown_threshold > 0.0)) throw ArgumentError("breakdown threshold must be positive");
  if (spec.jobs < 1) throw ArgumentError("jobs must be >= 1");
}

namespace {

struct SweepPoint {
  std::size_t strategy = 0;
  double adversary_share = 0.0;
  double rep_share = 0.0;
};

constexpr std::uint64_t kPopulationStream = 101;
constexpr std::uint64_t kVerifyStream = 102;
constexpr std::uint64_t kVotingStream = 103;
constexpr std::uint64_t kConsensusStream = 104;

TrialOutcome run_trial(const ExperimentSpec& spec, const SweepPoint& point, int trial) {
  ScenarioConfig cfg = spec.base;
  cfg.adversary_fraction = point.adversary_share;
  cfg.rep_high_prob = point.rep_share;
  cfg.consensus = spec.strategies[point.strategy];

  const SeededRng trial_rng = derive_trial_rng(SeededRng(cfg.seed), static_cast<std::uint64_t>(trial));
  PopulationOptions opts;
  opts.with_reputation_matrix = spec.pipeline == Pipeline::VotingPlusConsensus;
  auto population = build_population(cfg, trial_rng.substream(kPopulationStream), opts);

  if (spec.verify) {
    std::set<AgentId> registry;
    for (const auto& a : population) registry.insert(a.id);
    auto oracle = verification::simulated_oracle(registry, population);
    auto verify_rng = trial_rng.substream(kVerifyStream);
    population = verification::admit_population(population, oracle, 0, 0, 0, verify_rng);
  }

  TrialOutcome out;
  out.strategy = cfg.consensus.label();
  out.adversary_share = point.adversary_share;
  out.rep_share = point.rep_share;
  out.trial = trial;

  std::vector<consensus::Reading> readings;
  if (spec.pipeline == Pipeline::VotingPlusConsensus) {
    auto voting_rng = trial_rng.substream(kVotingStream);
    auto election = voting::elect_committee(population, cfg.voting, voting_rng);
    std::map<AgentId, const Agent*> by_id;
    for (const auto& a : population) by_id[a.id] = &a;
    for (auto id : election.winners()) {
      const Agent* a = by_id.at(id);
      readings.emplace_back(id, a->measurement);
      if (a->is_adversary) ++out.elected_adversary_count;
    }
  } else {
    readings.reserve(population.size());
    for (const auto& a : population) {
      readings.emplace_back(a.id, a.measurement);
      if (a.is_adversary) ++out.elected_adversary_count;
    }
  }

  auto consensus_rng = trial_rng.substream(kConsensusStream);
  consensus::PrivacyLedger ledger;
  auto result = consensus::run_consensus(readings, cfg.consensus, consensus_rng, ledger);
  out.n = readings.size();
  out.consensus_value = result.value;
  out.deviation = std::abs(result.value - cfg.mu);
  out.privacy_ok = ledger.invariant_holds();
  return out;
}

// Linear interpolation between order statistics.
double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  double pos = q * static_cast<double>(v.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

std::string fmt(double x) { return csv::number(x); }

int theoretical_groups(const ConsensusConfig& c, std::size_t n) {
  switch (c.strategy) {
    case ConsensusStrategy::Mean: return 1;
    case ConsensusStrategy::Median: return static_cast<int>(n);
    default: return static_cast<int>(n) / c.effective_group_size(n);
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  validate(spec);
  std::vector<SweepPoint> points;
  for (std::size_t s = 0; s < spec.strategies.size(); ++s) {
    for (double rep : spec.rep_shares) {
      for (double share : spec.adversary_shares) points.push_back({s, share, rep});
    }
  }
  const auto trials = static_cast<std::size_t>(spec.base.trials);
  const std::size_t total = points.size() * trials;

  ExperimentResult result;
  result.experiment = spec.name;
  result.displacement = std::abs(spec.base.mu_adv - spec.base.mu);
  result.trials.resize(total);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t task = next.fetch_add(1);
      if (task >= total) return;
      try {
        result.trials[task] = run_trial(spec, points[task / trials], static_cast<int>(task % trials));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = total;
        return;
      }
    }
  };
  const auto jobs = std::min<std::size_t>(static_cast<std::size_t>(spec.jobs), std::max<std::size_t>(total, 1));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (const auto& t : result.trials) {
    if (!t.privacy_ok) ++result.privacy_violations;
  }

  for (std::size_t p = 0; p < points.size(); ++p) {
    std::vector<double> dev;
    SummaryRow row;
    for (std::size_t t = 0; t < trials; ++t) {
      const auto& o = result.trials[p * trials + t];
      dev.push_back(o.deviation);
      row.n = o.n;
    }
    row.strategy = spec.strategies[points[p].strategy].label();
    row.adversary_share = points[p].adversary_share;
    row.rep_share = points[p].rep_share;
    row.trials = static_cast<int>(trials);
    row.mean = std::accumulate(dev.begin(), dev.end(), 0.0) / static_cast<double>(trials);
    double ss = 0.0;
    for (double d : dev) ss += (d - row.mean) * (d - row.mean);
    row.std_error = trials > 1 ? std::sqrt(ss / static_cast<double>(trials - 1) / static_cast<double>(trials)) : 0.0;
    row.p10 = quantile(dev, 0.1);
    row.p90 = quantile(dev, 0.9);
    result.summary.push_back(row);
  }

  // Summary rows are grouped by (strategy, rep_share) with shares ascending.
  const std::size_t per_curve = spec.adversary_shares.size();
  for (std::size_t start = 0; start < result.summary.size(); start += per_curve) {
    std::vector<consensus::ShareDeviation> curve;
    for (std::size_t k = 0; k < per_curve; ++k) {
      const auto& r = result.summary[start + k];
      curve.push_back({r.adversary_share, r.mean});
    }
    const auto& strategy = spec.strategies[points[start].strategy];
    const auto n = result.summary[start].n;
    Breakdown b;
    b.strategy = strategy.label();
    b.rep_share = result.summary[start].rep_share;
    b.theoretical = n > 0 ? consensus::theoretical_breakdown(static_cast<int>(n), theoretical_groups(strategy, n)) : 0.0;
    b.practical = consensus::practical_breakdown(curve, spec.breakdown_threshold,
                                                 result.displacement);
    result.breakdowns.push_back(b);
  }
  return result;
}

std::vector<double> default_share_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 50; ++i) grid.push_back(i / 50.0);
  return grid;
}

namespace {

std::vector<ConsensusConfig> figure_strategies() {
  ConsensusConfig median{ConsensusStrategy::Median, 3};
  ConsensusConfig triplets{ConsensusStrategy::MeanMedianFixed, 3};
  ConsensusConfig roots{ConsensusStrategy::MeanMedianSqrt, 3};
  return {median, triplets, roots};
}

}  // namespace

ExperimentSpec fig4_spec() {
  ExperimentSpec spec;
  spec.name = "fig4";
  spec.base.n_agents = 1000;
  spec.base.trials = 25;
  spec.strategies = figure_strategies();
  spec.adversary_shares = default_share_grid();
  spec.rep_shares = {spec.base.rep_high_prob};
  return spec;
}

ExperimentSpec fig5_spec() {
  ExperimentSpec spec = fig4_spec();
  spec.name = "fig5";
  spec.base.n_agents = 20;
  spec.base.trials = 100;
  return spec;
}

ExperimentSpec fig6_spec() {
  ExperimentSpec spec;
  spec.name = "fig6";
  spec.pipeline = Pipeline::VotingPlusConsensus;
  spec.base.n_agents = 30;
  spec.base.trials = 100;
  spec.base.voting.K = 3;
  spec.base.voting.J = 5;
  spec.base.mu_rep = 100.0;
  spec.base.sigma_rep = 30.0;
  spec.strategies = {ConsensusConfig{ConsensusStrategy::MeanMedianFixed, 3}};
  spec.adversary_shares = default_share_grid();
  spec.rep_shares = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  return spec;
}

ExperimentResult run_fig4(const ExperimentSpec& spec) {
  if (spec.pipeline != Pipeline::ConsensusOnly) throw ArgumentError("fig4 runs consensus only");
  return run_experiment(spec);
}

ExperimentResult run_fig5(const ExperimentSpec& spec) {
  if (spec.pipeline != Pipeline::ConsensusOnly) throw ArgumentError("fig5 runs consensus only");
  return run_experiment(spec);
}

ExperimentResult run_fig6(const ExperimentSpec& spec) {
  if (spec.pipeline != Pipeline::VotingPlusConsensus) {
    throw ArgumentError("fig6 needs the voting pipeline");
  }
  return run_experiment(spec);
}

ConsensusConfig parse_strategy(const std::string& text) {
  ConsensusConfig cfg;
  auto open = text.find('(');
  if (open != std::string::npos) {
    if (text.back() != ')' || text.substr(0, open) != "mean_median_fixed") {
      throw ArgumentError("bad strategy '" + text + "'");
    }
    const std::string digits = text.substr(open + 1, text.size() - open - 2);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit) || digits.size() > 6) {
      throw ArgumentError("bad group size in '" + text + "'");
    }
    cfg.strategy = ConsensusStrategy::MeanMedianFixed;
    cfg.min_group_size = std::stoi(digits);
  } else {
    cfg.strategy = parse_consensus_strategy(text);
  }
  validate(cfg);
  return cfg;
}

ExperimentSpec read_experiment(ConfigSection& root, const ExperimentSpec& defaults) {
  ExperimentSpec spec = defaults;
  // Scenario keys fall back to the preset's base rather than library defaults.
  spec.base = read_scenario(root, defaults.base);
  auto ex = root.section("experiment");
  spec.name = ex.get_string("name", spec.name);
  auto pipeline = ex.get_string("pipeline", spec.pipeline == Pipeline::ConsensusOnly
                                                ? "consensus_only"
                                                : "voting_plus_consensus");
  if (pipeline == "consensus_only") {
    spec.pipeline = Pipeline::ConsensusOnly;
  } else if (pipeline == "voting_plus_consensus") {
    spec.pipeline = Pipeline::VotingPlusConsensus;
  } else {
    throw ConfigError(ex.path() + ".pipeline", ex.line_of("pipeline"), "unknown pipeline '" + pipeline + "'");
  }
  std::vector<std::string> names;
  for (const auto& s : spec.strategies) names.push_back(s.label());
  names = ex.get_string_list("strategies", names);
  spec.strategies.clear();
  for (const auto& n : names) {
    try {
      spec.strategies.push_back(parse_strategy(n));
    } catch (const ArgumentError& e) {
      throw ConfigError(ex.path() + ".strategies", ex.line_of("strategies"), e.what());
    }
  }
  spec.adversary_shares = ex.get_double_list("adversary_shares", spec.adversary_shares);
  spec.rep_shares = ex.get_double_list("rep_shares", spec.rep_shares);
  spec.breakdown_threshold = ex.get_double("breakdown_threshold", spec.breakdown_threshold);
  spec.verify = ex.get_bool("verify", spec.verify);
  ex.finish();
  try {
    validate(spec);
  } catch (const ArgumentError& e) {
    throw ConfigError(ex.path(), ex.line_of(""), e.what());
  }
  return spec;
}

void write_trials_csv(const ExperimentResult& result, std::ostream& out) {
  out << "experiment,strategy,n,adversary_share,rep_share,trial,deviation\n";
  for (const auto& t : result.trials) {
    out << result.experiment << ',' << t.strategy << ',' << t.n << ',' << fmt(t.adversary_share)
        << ',' << fmt(t.rep_share) << ',' << t.trial << ',' << fmt(t.deviation) << '\n';
  }
}

void write_summary_csv(const ExperimentResult& result, std::ostream& out) {
  out << "experiment,strategy,n,adversary_share,rep_share,trials,mean_deviation,std_error,p10,p90\n";
  for (const auto& r : result.summary) {
    out << result.experiment << ',' << r.strategy << ',' << r.n << ',' << fmt(r.adversary_share)
        << ',' << fmt(r.rep_share) << ',' << r.trials << ',' << fmt(r.mean) << ','
        << fmt(r.std_error) << ',' << fmt(r.p10) << ',' << fmt(r.p90) << '\n';
  }
}

void write_breakdown_csv(const ExperimentResult& result, std::ostream& out) {
  out << "experiment,strategy,rep_share,theoretical,practical\n";
  for (const auto& b : result.breakdowns) {
    out << result.experiment << ',' << b.strategy << ',' << fmt(b.rep_share) << ','
        << fmt(b.theoretical) << ',' << fmt(b.practical) << '\n';
  }
}

}  // namespace datamarket::sim
