#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "datamarket/core.hpp"
#include "datamarket/hash.hpp"
#include "datamarket/rng.hpp"

namespace datamarket::valuation {

struct DataPointRef {
  AgentId owner;
  std::vector<double> features;
  std::optional<double> label;
};

// Utility of a subset of data points. Must be deterministic and defined on
// the empty subset.
struct ObjectiveFunction {
  std::string descriptor;
  std::function<double(std::span<const DataPointRef>)> evaluate;

  double operator()(std::span<const DataPointRef> subset) const { return evaluate(subset); }
};

enum class ShapleyMethod { Exact, PermutationSampled };

struct ShapleyReport {
  std::vector<AgentId> agents;  // point owners, batch order
  std::vector<double> psi;
  // Standard error of each estimate; zeros for the exact method.
  std::vector<double> std_error;
  ShapleyMethod method = ShapleyMethod::Exact;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  double grand_value = 0.0;
  double empty_value = 0.0;

  double value_of(AgentId agent) const;
};

// Largest batch the exact enumeration accepts (2^16 utility evaluations).
inline constexpr std::size_t kExactShapleyLimit = 16;

ShapleyReport shapley_exact(std::span<const DataPointRef> points, const ObjectiveFunction& v);

// Monte-Carlo over random join orders. Each sampled permutation distributes
// exactly v(all) - v(empty), so the estimate is efficient by construction.
ShapleyReport shapley_sampled(std::span<const DataPointRef> points, const ObjectiveFunction& v,
                              std::size_t samples, SeededRng& rng);

// Exact up to kExactShapleyLimit points, sampled beyond.
ShapleyReport shapley(std::span<const DataPointRef> points, const ObjectiveFunction& v,
                      std::size_t samples, SeededRng& rng);

// Negative holdout MSE of an ordinary least-squares fit (no implicit
// intercept; add a constant feature for one). A ridge term of 1e-6 is used
// only when the normal equations are singular. The empty subset scores the
// holdout-mean predictor.
ObjectiveFunction regression_objective(std::vector<DataPointRef> train,
                                       std::vector<DataPointRef> holdout);

struct WorkAssignment {
  AgentId agent;
  double normalized_value = 0.0;
  int work_units = 1;
  // Digest of the receipt proving this work was done, once it has been.
  std::optional<Digest> receipt;
};

// Min-max normalizes psi (0.5 for everyone when all are equal) and assigns
// max(1, round(max_work * (1 - normalized))) units.
std::vector<WorkAssignment> assign_work(const ShapleyReport& report, int max_work);

struct CoalitionBatch {
  SpatialCoalition coalition;
  std::vector<DataPointRef> batch;
};

// Proof that coalition `stage` valuated the following coalition's batch.
struct WorkReceipt {
  std::size_t stage = 0;  // 1-based
  QuadrantId valuator;
  QuadrantId valuated;
  Digest prev_digest{};
  Digest report_digest{};
  // (point owner, valuating member) in batch order.
  std::vector<std::pair<AgentId, AgentId>> allocation;
  Digest digest{};
};

struct ChainStage {
  ShapleyReport report;                     // psi of the incoming batch
  std::vector<WorkAssignment> assignments;  // quotas for the valuated coalition
  WorkReceipt receipt;                      // the valuating coalition's work
};

struct WorkChain {
  std::vector<ChainStage> stages;
  // Coalition indices admitted to the market, in order. The first coalition
  // bootstraps the chain and is admitted without prior valuation.
  std::vector<std::size_t> admitted;
};

Digest report_digest(const ShapleyReport& report);
Digest receipt_digest(const WorkReceipt& receipt);

// Coalition t valuates coalition t+1's batch with objective v_chain[t]. Work
// inside coalition t is split by its members' work units (from the previous
// stage; equal for the first coalition); members never valuate their own
// points. Each receipt links to the previous one and is verified before the
// valuated coalition is admitted.
WorkChain run_work_chain(std::span<const CoalitionBatch> coalitions,
                         std::span<const ObjectiveFunction> v_chain, int max_work, SeededRng& rng,
                         std::size_t sampled_permutations = 2000);

// Throws IntegrityError naming the first stage whose report digest, receipt
// digest or back-link does not verify.
void verify_work_chain(std::span<const ChainStage> stages);

// Header names feature columns; optional `label` and `agent` columns. Rows
// without an agent column are owned by AgentId{row index}.
std::vector<DataPointRef> read_data_points(std::istream& in);

// CSV header: agent,psi,method,samples
void write_shapley_csv(const ShapleyReport& report, std::ostream& out);

}  // namespace datamarket::valuation
