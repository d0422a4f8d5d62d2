#include "datamarket/valuation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include <Eigen/Dense>

#include "datamarket/csv.hpp"
#include "datamarket/errors.hpp"

namespace datamarket::valuation {

double ShapleyReport::value_of(AgentId agent) const {
  double total = 0.0;
  bool found = false;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (agents[i] == agent) {
      total += psi[i];
      found = true;
    }
  }
  if (!found) throw ArgumentError("agent " + agent.str() + " not in report");
  return total;
}

namespace {

using Mask = std::uint64_t;

std::vector<DataPointRef> subset_of(std::span<const DataPointRef> points, Mask mask) {
  std::vector<DataPointRef> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (mask & (Mask{1} << i)) out.push_back(points[i]);
  }
  return out;
}

void check_dimensions(std::span<const DataPointRef> points) {
  if (points.empty()) return;
  auto d = points.front().features.size();
  for (const auto& p : points) {
    if (p.features.size() != d) throw ArgumentError("feature dimension differs within batch");
  }
}

// 1 / (n * C(n-1, t)), the probability weight of a size-t predecessor set.
std::vector<double> shapley_weights(std::size_t n) {
  std::vector<double> w(n);
  double c = 1.0;  // C(n-1, t)
  for (std::size_t t = 0; t < n; ++t) {
    w[t] = 1.0 / (static_cast<double>(n) * c);
    c = c * static_cast<double>(n - 1 - t) / static_cast<double>(t + 1);
  }
  return w;
}

ShapleyReport blank_report(std::span<const DataPointRef> points) {
  ShapleyReport r;
  for (const auto& p : points) r.agents.push_back(p.owner);
  r.psi.assign(points.size(), 0.0);
  r.std_error.assign(points.size(), 0.0);
  return r;
}

}  // namespace

ShapleyReport shapley_exact(std::span<const DataPointRef> points, const ObjectiveFunction& v) {
  const std::size_t n = points.size();
  if (n > kExactShapleyLimit) {
    throw ArgumentError("exact Shapley limited to " + std::to_string(kExactShapleyLimit) +
                        " points; use shapley_sampled for " + std::to_string(n));
  }
  check_dimensions(points);
  ShapleyReport report = blank_report(points);
  report.method = ShapleyMethod::Exact;

  const Mask full = (Mask{1} << n) - 1;
  std::vector<double> value(full + 1);
  for (Mask m = 0; m <= full; ++m) {
    auto subset = subset_of(points, m);
    value[m] = v(subset);
  }
  report.empty_value = value[0];
  report.grand_value = value[full];
  if (n == 0) return report;

  const auto w = shapley_weights(n);
  std::vector<double> terms;
  terms.reserve(std::size_t{1} << (n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    const Mask bit = Mask{1} << i;
    terms.clear();
    for (Mask m = 0; m <= full; ++m) {
      if (m & bit) continue;
      auto t = static_cast<std::size_t>(std::popcount(m));
      terms.push_back(w[t] * (value[m | bit] - value[m]));
    }
    // Interchangeable players see the same multiset of terms; summing in a
    // canonical order makes their values bit-identical.
    std::sort(terms.begin(), terms.end());
    report.psi[i] = std::accumulate(terms.begin(), terms.end(), 0.0);
  }
  return report;
}

ShapleyReport shapley_sampled(std::span<const DataPointRef> points, const ObjectiveFunction& v,
                              std::size_t samples, SeededRng& rng) {
  if (samples < 1) throw ArgumentError("samples must be >= 1");
  check_dimensions(points);
  const std::size_t n = points.size();
  ShapleyReport report = blank_report(points);
  report.method = ShapleyMethod::PermutationSampled;
  report.samples = samples;
  report.seed = rng.seed();

  const bool cacheable = n <= 64;
  std::unordered_map<Mask, double> cache;
  auto eval_prefix = [&](const std::vector<std::size_t>& order, std::size_t len, Mask mask) {
    if (cacheable) {
      if (auto it = cache.find(mask); it != cache.end()) return it->second;
    }
    std::vector<DataPointRef> subset;
    subset.reserve(len);
    for (std::size_t k = 0; k < len; ++k) subset.push_back(points[order[k]]);
    // Canonical order so the objective sees a set, not a sequence.
    std::vector<std::size_t> idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(len));
    std::sort(idx.begin(), idx.end());
    for (std::size_t k = 0; k < len; ++k) subset[k] = points[idx[k]];
    double val = v(subset);
    if (cacheable && cache.size() < (std::size_t{1} << 20)) cache.emplace(mask, val);
    return val;
  };

  report.empty_value = v(std::span<const DataPointRef>{});
  {
    std::vector<DataPointRef> all(points.begin(), points.end());
    report.grand_value = v(all);
  }
  if (n == 0) return report;

  std::vector<double> mean(n, 0.0), m2(n, 0.0);
  std::vector<std::size_t> order(n);
  for (std::size_t s = 1; s <= samples; ++s) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double prev = report.empty_value;
    Mask mask = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = order[k];
      if (cacheable) mask |= Mask{1} << i;
      double cur = (k + 1 == n) ? report.grand_value : eval_prefix(order, k + 1, mask);
      double x = cur - prev;
      prev = cur;
      double delta = x - mean[i];
      mean[i] += delta / static_cast<double>(s);
      m2[i] += delta * (x - mean[i]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    report.psi[i] = mean[i];
    report.std_error[i] =
        samples > 1 ? std::sqrt(m2[i] / static_cast<double>(samples - 1) / static_cast<double>(samples))
                    : 0.0;
  }
  return report;
}

ShapleyReport shapley(std::span<const DataPointRef> points, const ObjectiveFunction& v,
                      std::size_t samples, SeededRng& rng) {
  if (points.size() <= kExactShapleyLimit) return shapley_exact(points, v);
  return shapley_sampled(points, v, samples, rng);
}

ObjectiveFunction regression_objective(std::vector<DataPointRef> train,
                                       std::vector<DataPointRef> holdout) {
  if (holdout.empty()) throw ArgumentError("holdout set is empty");
  const std::size_t d = holdout.front().features.size();
  for (const auto* set : {&train, &holdout}) {
    for (const auto& p : *set) {
      if (p.features.size() != d) throw ArgumentError("feature dimension mismatch");
      if (!p.label) throw ArgumentError("regression points need labels");
    }
  }

  const auto h = static_cast<Eigen::Index>(holdout.size());
  Eigen::MatrixXd xh(h, static_cast<Eigen::Index>(d));
  Eigen::VectorXd yh(h);
  for (Eigen::Index r = 0; r < h; ++r) {
    const auto& p = holdout[static_cast<std::size_t>(r)];
    for (std::size_t c = 0; c < d; ++c) xh(r, static_cast<Eigen::Index>(c)) = p.features[c];
    yh(r) = *p.label;
  }
  const double mean_label = yh.mean();
  const double empty_score = -(yh.array() - mean_label).square().mean();

  auto evaluate = [xh, yh, d, empty_score](std::span<const DataPointRef> subset) -> double {
    if (subset.empty()) return empty_score;
    const auto m = static_cast<Eigen::Index>(subset.size());
    const auto dd = static_cast<Eigen::Index>(d);
    Eigen::MatrixXd x(m, dd);
    Eigen::VectorXd y(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto& p = subset[static_cast<std::size_t>(r)];
      if (p.features.size() != d) throw ArgumentError("feature dimension mismatch");
      if (!p.label) throw ArgumentError("regression points need labels");
      for (Eigen::Index c = 0; c < dd; ++c) x(r, c) = p.features[static_cast<std::size_t>(c)];
      y(r) = *p.label;
    }
    Eigen::MatrixXd a = x.transpose() * x;
    Eigen::VectorXd b = x.transpose() * y;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (lu.rank() < dd) a += 1e-6 * Eigen::MatrixXd::Identity(dd, dd);
    Eigen::VectorXd beta = a.ldlt().solve(b);
    Eigen::VectorXd resid = xh * beta - yh;
    return -resid.squaredNorm() / static_cast<double>(resid.size());
  };

  ObjectiveFunction f;
  f.descriptor = "ols_neg_mse(d=" + std::to_string(d) + ",train=" + std::to_string(train.size()) +
                 ",holdout=" + std::to_string(holdout.size()) + ")";
  f.evaluate = std::move(evaluate);
  return f;
}

std::vector<WorkAssignment> assign_work(const ShapleyReport& report, int max_work) {
  if (max_work < 1) throw ArgumentError("max_work must be >= 1");
  if (report.agents.empty()) throw ArgumentError("empty Shapley report");

  // One assignment per agent; an agent owning several points is valued by
  // the sum of their psi.
  std::vector<AgentId> agents;
  std::vector<double> psi;
  for (std::size_t i = 0; i < report.agents.size(); ++i) {
    auto it = std::find(agents.begin(), agents.end(), report.agents[i]);
    if (it == agents.end()) {
      agents.push_back(report.agents[i]);
      psi.push_back(report.psi[i]);
    } else {
      psi[static_cast<std::size_t>(it - agents.begin())] += report.psi[i];
    }
  }
  auto [lo, hi] = std::minmax_element(psi.begin(), psi.end());
  const double min_psi = *lo, max_psi = *hi;

  std::vector<WorkAssignment> out;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    WorkAssignment w;
    w.agent = agents[i];
    w.normalized_value = max_psi > min_psi ? (psi[i] - min_psi) / (max_psi - min_psi) : 0.5;
    w.normalized_value = std::clamp(w.normalized_value, 0.0, 1.0);
    auto units = static_cast<int>(std::lround(max_work * (1.0 - w.normalized_value)));
    w.work_units = std::max(1, units);
    out.push_back(w);
  }
  return out;
}

Digest report_digest(const ShapleyReport& report) {
  HashWriter h;
  h.str("datamarket.shapley_report.v1");
  h.u64(report.method == ShapleyMethod::Exact ? 0 : 1).u64(report.samples).u64(report.seed);
  h.f64(report.grand_value).f64(report.empty_value);
  h.u64(report.agents.size());
  for (std::size_t i = 0; i < report.agents.size(); ++i) {
    h.u64(report.agents[i].value).f64(report.psi[i]).f64(report.std_error[i]);
  }
  return h.finish();
}

Digest receipt_digest(const WorkReceipt& receipt) {
  HashWriter h;
  h.str("datamarket.work_receipt.v1");
  h.u64(receipt.stage);
  h.i64(receipt.valuator.q).i64(receipt.valuated.q);
  h.digest(receipt.prev_digest).digest(receipt.report_digest);
  h.u64(receipt.allocation.size());
  for (const auto& [point_owner, worker] : receipt.allocation) {
    h.u64(point_owner.value).u64(worker.value);
  }
  return h.finish();
}

namespace {

// Weighted round-robin: each point goes to the eligible member with the
// lowest assigned/quota ratio (earliest member on ties).
std::vector<std::pair<AgentId, AgentId>> split_batch(const std::vector<AgentId>& members,
                                                     const std::vector<int>& quota,
                                                     std::span<const DataPointRef> batch) {
  std::vector<int> assigned(members.size(), 0);
  std::vector<std::pair<AgentId, AgentId>> allocation;
  for (const auto& point : batch) {
    std::size_t best = members.size();
    for (std::size_t m = 0; m < members.size(); ++m) {
      if (members[m] == point.owner) continue;
      if (best == members.size() ||
          static_cast<long long>(assigned[m]) * quota[best] <
              static_cast<long long>(assigned[best]) * quota[m]) {
        best = m;
      }
    }
    if (best == members.size()) {
      throw ArgumentError("no eligible valuator for point owned by " + point.owner.str());
    }
    ++assigned[best];
    allocation.emplace_back(point.owner, members[best]);
  }
  return allocation;
}

}  // namespace

WorkChain run_work_chain(std::span<const CoalitionBatch> coalitions,
                         std::span<const ObjectiveFunction> v_chain, int max_work, SeededRng& rng,
                         std::size_t sampled_permutations) {
  if (coalitions.size() < 2) throw ArgumentError("work chain needs at least two coalitions");
  if (v_chain.size() != coalitions.size()) {
    throw StructuralError("one objective per coalition required");
  }
  if (max_work < 1) throw ArgumentError("max_work must be >= 1");
  for (const auto& c : coalitions) {
    if (c.coalition.members.empty()) throw ArgumentError("coalition without members");
  }

  WorkChain chain;
  chain.admitted.push_back(0);
  // The genesis coalition has never been valuated: equal quotas.
  std::vector<int> quota(coalitions[0].coalition.members.size(), max_work);
  Digest prev = kZeroDigest;

  for (std::size_t t = 0; t + 1 < coalitions.size(); ++t) {
    const auto& valuator = coalitions[t];
    const auto& incoming = coalitions[t + 1];

    ChainStage stage;
    SeededRng stage_rng = rng.substream(t + 1);
    stage.report = shapley(incoming.batch, v_chain[t], sampled_permutations, stage_rng);
    stage.assignments = assign_work(stage.report, max_work);

    stage.receipt.stage = t + 1;
    stage.receipt.valuator = valuator.coalition.quadrant;
    stage.receipt.valuated = incoming.coalition.quadrant;
    stage.receipt.prev_digest = prev;
    stage.receipt.report_digest = report_digest(stage.report);
    stage.receipt.allocation = split_batch(valuator.coalition.members, quota, incoming.batch);
    stage.receipt.digest = receipt_digest(stage.receipt);

    // Record the receipt on the valuating coalition's own work quotas.
    if (t > 0) {
      for (auto& a : chain.stages[t - 1].assignments) a.receipt = stage.receipt.digest;
    }

    chain.stages.push_back(std::move(stage));
    verify_work_chain(chain.stages);
    chain.admitted.push_back(t + 1);
    prev = chain.stages.back().receipt.digest;

    // Quotas for the next stage, in member order of the just-valuated
    // coalition; members without points in the batch take the heaviest load.
    const auto& members = incoming.coalition.members;
    quota.assign(members.size(), max_work);
    for (std::size_t m = 0; m < members.size(); ++m) {
      for (const auto& a : chain.stages.back().assignments) {
        if (a.agent == members[m]) quota[m] = a.work_units;
      }
    }
  }
  return chain;
}

void verify_work_chain(std::span<const ChainStage> stages) {
  Digest prev = kZeroDigest;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    const std::size_t stage_no = i + 1;
    if (s.receipt.stage != stage_no) throw IntegrityError(stage_no, "stage number mismatch");
    if (s.receipt.prev_digest != prev) throw IntegrityError(stage_no, "broken back-link");
    if (report_digest(s.report) != s.receipt.report_digest) {
      throw IntegrityError(stage_no, "report digest mismatch");
    }
    if (receipt_digest(s.receipt) != s.receipt.digest) {
      throw IntegrityError(stage_no, "receipt digest mismatch");
    }
    prev = s.receipt.digest;
  }
}

std::vector<DataPointRef> read_data_points(std::istream& in) {
  auto table = csv::read(in);
  int label_col = -1, agent_col = -1;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    if (name == "label") {
      label_col = static_cast<int>(c);
    } else if (name == "agent") {
      agent_col = static_cast<int>(c);
    } else {
      feature_cols.push_back(c);
    }
  }
  auto parse = [](const std::string& text, std::size_t row) {
    try {
      std::size_t used = 0;
      double value = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return value;
    } catch (const std::exception&) {
      throw ArgumentError("row " + std::to_string(row + 1) + ": not a number: '" + text + "'");
    }
  };

  std::vector<DataPointRef> points;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    DataPointRef p;
    if (agent_col >= 0) {
      const auto& text = row[static_cast<std::size_t>(agent_col)];
      try {
        std::size_t used = 0;
        p.owner = AgentId{std::stoull(text, &used)};
        if (used != text.size()) throw std::invalid_argument(text);
      } catch (const std::exception&) {
        throw ArgumentError("row " + std::to_string(r + 1) + ": bad agent id '" + text + "'");
      }
    } else {
      p.owner = AgentId{r};
    }
    for (auto c : feature_cols) p.features.push_back(parse(row[c], r));
    if (label_col >= 0) p.label = parse(row[static_cast<std::size_t>(label_col)], r);
    points.push_back(std::move(p));
  }
  return points;
}

void write_shapley_csv(const ShapleyReport& report, std::ostream& out) {
  out << "agent,psi,method,samples\n";
  const char* method = report.method == ShapleyMethod::Exact ? "exact" : "permutation_sampled";
  for (std::size_t i = 0; i < report.agents.size(); ++i) {
    out << report.agents[i].value << ',' << csv::number(report.psi[i]) << ',' << method << ','
        << report.samples << '\n';
  }
}

}  // namespace datamarket::valuation
