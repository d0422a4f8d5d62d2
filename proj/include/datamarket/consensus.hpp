#pragma once

#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "datamarket/config.hpp"
#include "datamarket/core.hpp"
#include "datamarket/rng.hpp"

namespace datamarket::consensus {

struct Grouping {
  std::vector<std::vector<AgentId>> groups;
  int g = 0;
  int s_effective = 0;
};

enum class MessageScope { GroupLocal, CrossGroup };
enum class PayloadKind { RawValue, GroupMean };

struct PrivacyMessage {
  MessageScope scope;
  PayloadKind payload;
  AgentId sender;
  std::size_t group = 0;
};

// Logical message log of one consensus run. The mean-median protocol must
// never let a raw reading leave its group.
class PrivacyLedger {
 public:
  void record(MessageScope scope, PayloadKind payload, AgentId sender, std::size_t group);
  const std::vector<PrivacyMessage>& messages() const { return messages_; }
  std::size_t cross_group_raw_messages() const;
  bool invariant_holds() const { return cross_group_raw_messages() == 0; }

 private:
  std::vector<PrivacyMessage> messages_;
};

struct ConsensusResult {
  double value = 0.0;
  std::vector<double> group_means;
  Grouping grouping;
  int privacy_k = 0;
};

using Reading = std::pair<AgentId, double>;

// Random partition into g = floor(n/s) groups; the n mod s leftover agents
// join the first groups round-robin, so every group has s or s+1 members.
// Requires n >= s >= 2.
Grouping form_groups(std::span<const AgentId> members, int s, SeededRng& rng);

double consensus_mean(std::span<const double> values);
// Middle order statistic; midpoint of the middle pair for even counts.
double consensus_median(std::span<const double> values);

// Median of within-group means for an explicit grouping. Logs one
// group-local raw message per member and one cross-group mean per group.
ConsensusResult aggregate_groups(std::span<const Reading> coalition, const Grouping& grouping,
                                 PrivacyLedger& ledger);

ConsensusResult consensus_mean_median(std::span<const Reading> coalition,
                                      const ConsensusConfig& cfg, SeededRng& rng,
                                      PrivacyLedger& ledger);

// Dispatches on cfg.strategy. Plain mean and median do not use the ledger.
ConsensusResult run_consensus(std::span<const Reading> coalition, const ConsensusConfig& cfg,
                              SeededRng& rng, PrivacyLedger& ledger);

// g / (2n).
double theoretical_breakdown(int n, int g);

struct ShareDeviation {
  double adversary_share = 0.0;
  double deviation = 0.0;
};

// Smallest adversary share whose mean deviation (over all rows sharing that
// share) exceeds threshold * displacement, where displacement = |mu_adv - mu|.
// Rows must be sorted by share. Returns 1.0 if no share breaks the estimator.
double practical_breakdown(std::span<const ShareDeviation> results, double threshold,
                           double displacement);

// CSV header: trial,strategy,n,g,s,adversary_share,value,deviation
struct ConsensusRow {
  int trial = 0;
  std::string strategy;
  std::size_t n = 0;
  int g = 0;
  int s = 0;
  double adversary_share = 0.0;
  double value = 0.0;
  double deviation = 0.0;
};
void write_consensus_csv(std::span<const ConsensusRow> rows, std::ostream& out);

}  // namespace datamarket::consensus
