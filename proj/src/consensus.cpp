#include "datamarket/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "datamarket/csv.hpp"
#include "datamarket/errors.hpp"

namespace datamarket::consensus {

void PrivacyLedger::record(MessageScope scope, PayloadKind payload, AgentId sender,
                           std::size_t group) {
  messages_.push_back({scope, payload, sender, group});
}

std::size_t PrivacyLedger::cross_group_raw_messages() const {
  return static_cast<std::size_t>(std::count_if(messages_.begin(), messages_.end(), [](const auto& m) {
    return m.scope == MessageScope::CrossGroup && m.payload == PayloadKind::RawValue;
  }));
}

namespace {

Grouping partition(std::span<const AgentId> members, int s, SeededRng& rng) {
  const auto n = members.size();
  const auto size = static_cast<std::size_t>(s);
  std::vector<AgentId> shuffled(members.begin(), members.end());
  rng.shuffle(shuffled);
  const std::size_t g = n / size;
  Grouping out;
  out.g = static_cast<int>(g);
  out.s_effective = s;
  out.groups.resize(g);
  for (std::size_t i = 0; i < g * size; ++i) out.groups[i / size].push_back(shuffled[i]);
  for (std::size_t i = g * size; i < n; ++i) out.groups[(i - g * size) % g].push_back(shuffled[i]);
  return out;
}

}  // namespace

Grouping form_groups(std::span<const AgentId> members, int s, SeededRng& rng) {
  if (s < 2) throw ArgumentError("group size s must be at least 2");
  if (members.size() < static_cast<std::size_t>(s)) {
    throw ArgumentError("coalition of " + std::to_string(members.size()) +
                        " agents cannot form a group of " + std::to_string(s));
  }
  return partition(members, s, rng);
}

double consensus_mean(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("mean of an empty coalition");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double consensus_median(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("median of an empty coalition");
  std::vector<double> sorted(values.begin(), values.end());
  const auto mid = sorted.size() / 2;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid), sorted.end());
  double upper = sorted[mid];
  if (sorted.size() % 2 == 1) return upper;
  double lower = *std::max_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

ConsensusResult aggregate_groups(std::span<const Reading> coalition, const Grouping& grouping,
                                 PrivacyLedger& ledger) {
  if (grouping.groups.empty()) throw ArgumentError("grouping has no groups");
  std::map<AgentId, double> reading;
  for (const auto& [id, value] : coalition) reading[id] = value;

  ConsensusResult result;
  result.grouping = grouping;
  result.group_means.reserve(grouping.groups.size());
  std::size_t covered = 0;
  for (std::size_t gi = 0; gi < grouping.groups.size(); ++gi) {
    const auto& group = grouping.groups[gi];
    if (group.empty()) throw ArgumentError("grouping contains an empty group");
    double sum = 0.0;
    for (const auto& member : group) {
      auto it = reading.find(member);
      if (it == reading.end()) {
        throw ArgumentError("grouping references agent " + member.str() + " outside the coalition");
      }
      ledger.record(MessageScope::GroupLocal, PayloadKind::RawValue, member, gi);
      sum += it->second;
    }
    covered += group.size();
    result.group_means.push_back(sum / static_cast<double>(group.size()));
    ledger.record(MessageScope::CrossGroup, PayloadKind::GroupMean, group.front(), gi);
  }
  if (covered != coalition.size()) throw ArgumentError("grouping does not partition the coalition");
  result.value = consensus_median(result.group_means);
  result.privacy_k = grouping.s_effective - 1;
  return result;
}

ConsensusResult consensus_mean_median(std::span<const Reading> coalition,
                                      const ConsensusConfig& cfg, SeededRng& rng,
                                      PrivacyLedger& ledger) {
  std::vector<AgentId> ids;
  ids.reserve(coalition.size());
  for (const auto& r : coalition) ids.push_back(r.first);
  int s = cfg.effective_group_size(coalition.size());
  auto grouping = form_groups(ids, s, rng);
  return aggregate_groups(coalition, grouping, ledger);
}

ConsensusResult run_consensus(std::span<const Reading> coalition, const ConsensusConfig& cfg,
                              SeededRng& rng, PrivacyLedger& ledger) {
  validate(cfg);
  if (cfg.strategy == ConsensusStrategy::MeanMedianFixed ||
      cfg.strategy == ConsensusStrategy::MeanMedianSqrt) {
    return consensus_mean_median(coalition, cfg, rng, ledger);
  }
  std::vector<double> values;
  values.reserve(coalition.size());
  for (const auto& r : coalition) values.push_back(r.second);
  ConsensusResult result;
  const auto n = static_cast<int>(coalition.size());
  if (cfg.strategy == ConsensusStrategy::Mean) {
    result.value = consensus_mean(values);
    result.grouping.g = 1;
    result.grouping.s_effective = n;
    result.privacy_k = n - 1;
  } else {
    result.value = consensus_median(values);
    result.grouping.g = n;
    result.grouping.s_effective = 1;
    result.privacy_k = 0;
  }
  return result;
}

double theoretical_breakdown(int n, int g) {
  if (g < 1 || g > n) throw ArgumentError("breakdown point needs 1 <= g <= n");
  return static_cast<double>(g) / (2.0 * static_cast<double>(n));
}

double practical_breakdown(std::span<const ShareDeviation> results, double threshold,
                           double displacement) {
  if (results.empty()) throw ArgumentError("no results to scan for a breakdown point");
  if (!(threshold > 0)) throw ArgumentError("threshold must be positive");
  const double limit = threshold * std::abs(displacement);
  std::size_t i = 0;
  while (i < results.size()) {
    double share = results[i].adversary_share;
    double sum = 0.0;
    std::size_t count = 0;
    for (; i < results.size() && results[i].adversary_share == share; ++i) {
      sum += results[i].deviation;
      ++count;
    }
    if (i < results.size() && results[i].adversary_share < share) {
      throw ArgumentError("results must be sorted by adversary share");
    }
    if (sum / static_cast<double>(count) > limit) return share;
  }
  return 1.0;
}

void write_consensus_csv(std::span<const ConsensusRow> rows, std::ostream& out) {
  out << "trial,strategy,n,g,s,adversary_share,value,deviation\n";
  for (const auto& r : rows) {
    out << r.trial << ',' << r.strategy << ',' << r.n << ',' << r.g << ',' << r.s << ','
        << csv::number(r.adversary_share) << ',' << csv::number(r.value) << ','
        << csv::number(r.deviation) << '\n';
  }
}

}  // namespace datamarket::consensus
