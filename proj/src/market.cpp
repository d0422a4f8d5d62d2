#include "datamarket/market.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "datamarket/errors.hpp"

namespace datamarket::market {

using nlohmann::json;

std::string to_string(Right right) {
  switch (right) {
    case Right::AccessFull: return "access_full";
    case Right::AccessPartial: return "access_partial";
    case Right::Ownership: return "ownership";
  }
  return "unknown";
}

Right parse_right(const std::string& text) {
  if (text == "access_full") return Right::AccessFull;
  if (text == "access_partial") return Right::AccessPartial;
  if (text == "ownership") return Right::Ownership;
  throw ArgumentError("unknown right '" + text + "'");
}

Digest record_digest(std::uint64_t index, const Digest& prev, const std::string& payload) {
  return HashWriter{}.str("datamarket.ledger.v1").u64(index).digest(prev).str(payload).finish();
}

LedgerRecord Ledger::append(std::string payload) {
  std::lock_guard lock(mutex_);
  LedgerRecord r;
  r.index = records_.size();
  r.prev_digest = records_.empty() ? kZeroDigest : records_.back().digest;
  r.payload = std::move(payload);
  r.digest = record_digest(r.index, r.prev_digest, r.payload);
  records_.push_back(std::move(r));
  return records_.back();
}

std::vector<LedgerRecord> Ledger::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t Ledger::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

bool verify_chain(const std::vector<LedgerRecord>& records) {
  Digest prev = kZeroDigest;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.index != i || r.prev_digest != prev) return false;
    if (record_digest(r.index, r.prev_digest, r.payload) != r.digest) return false;
    prev = r.digest;
  }
  return true;
}

void write_ledger(const std::vector<LedgerRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  for (const auto& r : records) {
    out << r.index << '\t' << to_hex(r.prev_digest) << '\t' << to_hex(r.digest) << '\t'
        << r.payload << '\n';
  }
}

std::vector<LedgerRecord> read_ledger(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!text.empty() && text.back() != '\n') throw ArgumentError("ledger file not newline-terminated");

  std::vector<LedgerRecord> records;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    ++line_no;
    auto end = text.find('\n', pos);
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    auto fail = [&](const std::string& why) {
      return ArgumentError("ledger line " + std::to_string(line_no) + ": " + why);
    };

    std::vector<std::string> fields;
    std::size_t start = 0;
    for (int f = 0; f < 3; ++f) {
      auto tab = line.find('\t', start);
      if (tab == std::string::npos) throw fail("expected 4 tab-separated fields");
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    fields.push_back(line.substr(start));

    LedgerRecord r;
    const auto& idx = fields[0];
    if (idx.empty() || idx.size() > 19 ||
        !std::all_of(idx.begin(), idx.end(), [](char c) { return c >= '0' && c <= '9'; }) ||
        (idx.size() > 1 && idx[0] == '0')) {
      throw fail("bad index '" + idx + "'");
    }
    r.index = std::stoull(idx);
    auto prev = digest_from_hex(fields[1]);
    auto digest = digest_from_hex(fields[2]);
    if (!prev || !digest) throw fail("bad digest");
    r.prev_digest = *prev;
    r.digest = *digest;
    r.payload = fields[3];
    if (!json::accept(r.payload)) throw fail("payload is not JSON");
    records.push_back(std::move(r));
  }
  return records;
}

ChainCheck verify_ledger_file(const std::filesystem::path& path) {
  ChainCheck check;
  try {
    auto records = read_ledger(path);
    check.records = records.size();
    check.ok = verify_chain(records);
    if (!check.ok) check.problem = "digest or link mismatch";
  } catch (const Error& e) {
    check.problem = e.what();
  }
  return check;
}

void RightsRegistry::apply(const LedgerRecord& record) {
  json p = json::parse(record.payload);
  const std::string type = p.at("type");
  const std::string id = p.at("dataset_id");
  if (type == "listing") {
    owners_[id] = AgentId{p.at("seller").get<std::uint64_t>()};
  } else if (type == "sale") {
    AgentId buyer{p.at("buyer").get<std::uint64_t>()};
    Right right = parse_right(p.at("right"));
    if (right == Right::Ownership) {
      owners_[id] = buyer;
    } else {
      grants_[id].insert(Grant{buyer, right, p.at("portion").get<std::string>()});
    }
  }
}

RightsRegistry RightsRegistry::replay(const std::vector<LedgerRecord>& records) {
  RightsRegistry r;
  for (const auto& rec : records) r.apply(rec);
  return r;
}

std::optional<AgentId> RightsRegistry::owner(const std::string& dataset_id) const {
  auto it = owners_.find(dataset_id);
  if (it == owners_.end()) return std::nullopt;
  return it->second;
}

bool RightsRegistry::has_right(const std::string& dataset_id, AgentId agent, Right right) const {
  auto own = owner(dataset_id);
  if (own && *own == agent) return true;  // the owner holds every right
  if (right == Right::Ownership) return false;
  auto it = grants_.find(dataset_id);
  if (it == grants_.end()) return false;
  for (const auto& g : it->second) {
    if (g.holder != agent) continue;
    if (g.right == Right::AccessFull || g.right == right) return true;
  }
  return false;
}

const std::set<Grant>& RightsRegistry::grants(const std::string& dataset_id) const {
  static const std::set<Grant> none;
  auto it = grants_.find(dataset_id);
  return it == grants_.end() ? none : it->second;
}

LedgerRecord Market::append(std::string payload) {
  auto rec = ledger_.append(std::move(payload));
  rights_.apply(rec);
  return rec;
}

const Listing* Market::find_listing(const std::string& dataset_id) const {
  auto it = listings_.find(dataset_id);
  return it == listings_.end() ? nullptr : &it->second;
}

LedgerRecord Market::list_dataset(const Listing& listing) {
  if (listing.dataset_id.empty()) throw MarketError("empty dataset_id");
  if (listings_.count(listing.dataset_id)) {
    throw MarketError("duplicate dataset_id '" + listing.dataset_id + "'");
  }
  if (!(listing.ask_price >= 0.0)) throw MarketError("ask price must be non-negative");
  const auto& outcome = listing.provenance.outcome;
  if (!outcome.admitted) throw MarketError("provenance was not admitted");
  if (outcome.commitment != listing.provenance.commitment || outcome.agent != listing.seller) {
    throw MarketError("provenance does not match the listing");
  }

  json p;
  p["type"] = "listing";
  p["dataset_id"] = listing.dataset_id;
  p["quadrant"] = listing.quadrant.q;
  p["tick"] = listing.tick;
  p["seller"] = listing.seller.value;
  p["commitment"] = to_hex(listing.provenance.commitment);
  p["verified_tick"] = outcome.tick;
  p["objective"] = listing.objective_descriptor;
  p["objective_value"] = listing.objective_value;
  p["ask_price"] = listing.ask_price;
  p["metadata"] = listing.metadata;
  listings_.emplace(listing.dataset_id, listing);
  return append(p.dump());
}

LedgerRecord Market::settle_sale(const Bid& bid) {
  const Listing* listing = find_listing(bid.dataset_id);
  if (!listing) throw MarketError("unknown dataset '" + bid.dataset_id + "'");
  if (!(bid.price >= 0.0)) throw MarketError("bid price must be non-negative");
  if (bid.price < listing->ask_price) throw MarketError("bid below ask");
  auto owner = rights_.owner(bid.dataset_id);
  if (!owner || *owner != listing->seller) {
    throw MarketError("listing seller no longer owns '" + bid.dataset_id + "'");
  }
  if (bid.buyer == listing->seller) throw MarketError("seller cannot buy own listing");

  json p;
  p["type"] = "sale";
  p["dataset_id"] = bid.dataset_id;
  p["seller"] = listing->seller.value;
  p["buyer"] = bid.buyer.value;
  p["right"] = to_string(bid.right);
  p["portion"] = bid.right == Right::AccessPartial ? bid.portion : std::string{};
  p["price"] = bid.price;
  return append(p.dump());
}

LedgerRecord Market::settle_first(const std::vector<Bid>& bids) {
  for (const auto& bid : bids) {
    const Listing* listing = find_listing(bid.dataset_id);
    if (listing && bid.price >= listing->ask_price) return settle_sale(bid);
  }
  throw MarketError("no bid meets the ask");
}

RewardSplit Market::distribute_reward(const LedgerRecord& sale,
                                      const valuation::ShapleyReport& psi) {
  json p = json::parse(sale.payload);
  if (p.at("type") != "sale") throw ArgumentError("record " + std::to_string(sale.index) + " is not a sale");
  const double price = p.at("price");

  std::vector<AgentId> members;
  for (auto a : psi.agents) {
    if (std::find(members.begin(), members.end(), a) == members.end()) members.push_back(a);
  }
  if (members.empty()) throw ArgumentError("empty coalition");

  std::vector<double> weight;
  double total = 0.0;
  for (auto a : members) {
    weight.push_back(std::max(psi.value_of(a), 0.0));
    total += weight.back();
  }
  RewardSplit split;
  split.dataset_id = p.at("dataset_id");
  for (std::size_t i = 0; i < members.size(); ++i) {
    double share = total > 0.0 ? price * weight[i] / total : price / static_cast<double>(members.size());
    split.shares[members[i]] = share;
  }

  json r;
  r["type"] = "reward";
  r["dataset_id"] = split.dataset_id;
  r["sale_index"] = sale.index;
  json shares = json::array();
  for (const auto& [agent, amount] : split.shares) {
    shares.push_back({{"agent", agent.value}, {"amount", amount}});
  }
  r["shares"] = shares;
  append(r.dump());
  return split;
}

}  // namespace datamarket::market
