#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "datamarket/config.hpp"
#include "datamarket/config_io.hpp"
#include "datamarket/core.hpp"
#include "datamarket/rng.hpp"

namespace datamarket::sim {

struct AttackModel {
  enum class Kind { None, Sybil, Wormhole, DataPoisoning };

  Kind kind = Kind::None;
  int extra_identities = 1;     // Sybil
  QuadrantId false_quadrant{};  // Wormhole
  double share = 0.0;           // Wormhole attackers or poisoning adversaries
  double mu_adv = 0.0;          // DataPoisoning

  static AttackModel none() { return {}; }
  static AttackModel sybil(int extra);
  static AttackModel wormhole(QuadrantId false_quadrant, double share);
  static AttackModel poisoning(double share, double mu_adv);
};

void validate(const AttackModel& attack);

// Sybil appends clones with fresh, unregistered ids; wormhole attackers keep
// their true quadrant but claim the false one; poisoning marks round(share*N)
// honest agents adversarial with value mu_adv.
std::vector<Agent> apply_attack(std::vector<Agent> population, const AttackModel& attack,
                                SeededRng& rng);

enum class Pipeline { ConsensusOnly, VotingPlusConsensus };

struct ExperimentSpec {
  std::string name;
  ScenarioConfig base;
  Pipeline pipeline = Pipeline::ConsensusOnly;
  // Sweep: strategies x adversary shares x honest high-reputation shares.
  std::vector<ConsensusConfig> strategies;
  std::vector<double> adversary_shares;
  std::vector<double> rep_shares;
  double breakdown_threshold = 0.5;
  // Run every agent through the verification gate before aggregation.
  bool verify = true;
  int jobs = 1;
};

void validate(const ExperimentSpec& spec);

struct TrialOutcome {
  std::string strategy;
  double adversary_share = 0.0;
  double rep_share = 0.0;
  int trial = 0;
  std::size_t n = 0;  // agents entering aggregation
  double consensus_value = 0.0;
  double deviation = 0.0;  // |consensus_value - mu|
  int elected_adversary_count = 0;
  bool privacy_ok = true;
};

struct SummaryRow {
  std::string strategy;
  std::size_t n = 0;
  double adversary_share = 0.0;
  double rep_share = 0.0;
  int trials = 0;
  double mean = 0.0;
  double std_error = 0.0;
  double p10 = 0.0;
  double p90 = 0.0;
};

struct Breakdown {
  std::string strategy;
  double rep_share = 0.0;
  double theoretical = 0.0;  // g/(2n) at zero adversaries
  double practical = 0.0;
};

struct ExperimentResult {
  std::string experiment;
  std::vector<TrialOutcome> trials;  // ordered by (sweep point, trial)
  std::vector<SummaryRow> summary;   // one row per sweep point
  std::vector<Breakdown> breakdowns; // one per (strategy, rep_share)
  std::size_t privacy_violations = 0;
  double displacement = 0.0;         // |mu_adv - mu|
};

// Runs every (sweep point, trial) pair. Trial t of every sweep point uses
// the same random stream, so sweep points differ only in the swept
// parameters.
ExperimentResult run_experiment(const ExperimentSpec& spec);

// Preset sweeps. Shares from 0 to 1 in steps of 0.02.
std::vector<double> default_share_grid();
ExperimentSpec fig4_spec();
ExperimentSpec fig5_spec();
ExperimentSpec fig6_spec();

ExperimentResult run_fig4(const ExperimentSpec& spec);
ExperimentResult run_fig5(const ExperimentSpec& spec);
ExperimentResult run_fig6(const ExperimentSpec& spec);

// Accepts to_string names plus "mean_median_fixed(s)".
ConsensusConfig parse_strategy(const std::string& text);

// Reads scenario keys at the top level and an optional `experiment`
// section (name, pipeline, strategies, adversary_shares, rep_shares,
// breakdown_threshold, verify) on top of `defaults`.
ExperimentSpec read_experiment(ConfigSection& root, const ExperimentSpec& defaults);

// experiment,strategy,n,adversary_share,rep_share,trial,deviation
void write_trials_csv(const ExperimentResult& result, std::ostream& out);
// experiment,strategy,n,adversary_share,rep_share,trials,mean_deviation,std_error,p10,p90
void write_summary_csv(const ExperimentResult& result, std::ostream& out);
// experiment,strategy,rep_share,theoretical,practical
void write_breakdown_csv(const ExperimentResult& result, std::ostream& out);

}  // namespace datamarket::sim
