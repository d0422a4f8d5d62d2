#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "datamarket/core.hpp"
#include "datamarket/hash.hpp"
#include "datamarket/valuation.hpp"
#include "datamarket/verification.hpp"

namespace datamarket::market {

struct Provenance {
  Digest commitment{};
  verification::VerificationOutcome outcome;
};

struct Listing {
  std::string dataset_id;
  QuadrantId quadrant;
  std::int64_t tick = 0;
  AgentId seller;
  Provenance provenance;
  std::string objective_descriptor;
  double objective_value = 0.0;
  double ask_price = 0.0;
  std::string metadata;
};

enum class Right { AccessFull, AccessPartial, Ownership };

std::string to_string(Right right);
Right parse_right(const std::string& text);

struct Bid {
  AgentId buyer;
  std::string dataset_id;
  Right right = Right::AccessFull;
  std::string portion;  // only meaningful for AccessPartial
  double price = 0.0;
};

struct LedgerRecord {
  std::uint64_t index = 0;
  Digest prev_digest{};
  std::string payload;  // canonical JSON, keys sorted
  Digest digest{};
};

Digest record_digest(std::uint64_t index, const Digest& prev, const std::string& payload);

// Append-only hash chain. Appends are serialized; readers get a snapshot.
class Ledger {
 public:
  LedgerRecord append(std::string payload);
  std::vector<LedgerRecord> records() const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::vector<LedgerRecord> records_;
};

bool verify_chain(const std::vector<LedgerRecord>& records);

// One record per line: index \t prev_hex \t digest_hex \t payload
void write_ledger(const std::vector<LedgerRecord>& records, const std::filesystem::path& path);
// Throws ArgumentError on any deviation from the line format.
std::vector<LedgerRecord> read_ledger(const std::filesystem::path& path);

struct ChainCheck {
  bool ok = false;
  std::size_t records = 0;
  std::string problem;
};

// Never throws on malformed files; reports them as !ok.
ChainCheck verify_ledger_file(const std::filesystem::path& path);

struct Grant {
  AgentId holder;
  Right right = Right::AccessFull;
  std::string portion;

  auto operator<=>(const Grant&) const = default;
};

// Who owns and who may access each dataset.
class RightsRegistry {
 public:
  void apply(const LedgerRecord& record);
  static RightsRegistry replay(const std::vector<LedgerRecord>& records);

  std::optional<AgentId> owner(const std::string& dataset_id) const;
  bool has_right(const std::string& dataset_id, AgentId agent, Right right) const;
  const std::set<Grant>& grants(const std::string& dataset_id) const;

  bool operator==(const RightsRegistry&) const = default;

 private:
  std::map<std::string, AgentId> owners_;
  std::map<std::string, std::set<Grant>> grants_;
};

struct RewardSplit {
  std::string dataset_id;
  std::map<AgentId, double> shares;
};

class Market {
 public:
  LedgerRecord list_dataset(const Listing& listing);
  LedgerRecord settle_sale(const Bid& bid);
  // Seller policy: the first bid at or above the ask wins.
  LedgerRecord settle_first(const std::vector<Bid>& bids);
  // Splits a sale's price over the report's agents proportionally to
  // max(psi, 0), uniformly when no psi is positive. Appends a reward record.
  RewardSplit distribute_reward(const LedgerRecord& sale, const valuation::ShapleyReport& psi);

  const Ledger& ledger() const { return ledger_; }
  const RightsRegistry& rights() const { return rights_; }
  const Listing* find_listing(const std::string& dataset_id) const;

 private:
  LedgerRecord append(std::string payload);

  Ledger ledger_;
  RightsRegistry rights_;
  std::map<std::string, Listing> listings_;
};

}  // namespace datamarket::market
