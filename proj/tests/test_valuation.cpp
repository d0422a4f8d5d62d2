#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "datamarket/errors.hpp"
#include "datamarket/valuation.hpp"
#include "oracles.hpp"

using namespace datamarket;
using namespace datamarket::valuation;

namespace {

// Each point carries its weight as label; v(T) = sum of labels.
std::vector<DataPointRef> weighted_points(const std::vector<double>& weights) {
  std::vector<DataPointRef> pts;
  for (std::size_t i = 0; i < weights.size(); ++i) pts.push_back({AgentId{i}, {}, weights[i]});
  return pts;
}

ObjectiveFunction additive() {
  return {"additive", [](std::span<const DataPointRef> s) {
            double sum = 0;
            for (const auto& p : s) sum += *p.label;
            return sum;
          }};
}

std::vector<DataPointRef> linear_points(std::size_t n, std::uint64_t first_owner, SeededRng& rng,
                                        double noise = 0.0) {
  std::vector<DataPointRef> pts;
  for (std::size_t i = 0; i < n; ++i) {
    double x1 = rng.normal(0, 1), x2 = rng.normal(0, 1);
    pts.push_back({AgentId{first_owner + i}, {x1, x2}, 2 * x1 + 3 * x2 + rng.normal(0, noise + 1e-300)});
  }
  return pts;
}

}  // namespace

TEST(ShapleyExact, AdditiveGame) {
  auto pts = weighted_points({3, 5});
  auto r = shapley_exact(pts, additive());
  EXPECT_NEAR(r.psi[0], 3, 1e-12);
  EXPECT_NEAR(r.psi[1], 5, 1e-12);
  EXPECT_EQ(r.method, ShapleyMethod::Exact);
  EXPECT_EQ(r.std_error, (std::vector<double>{0, 0}));
}

TEST(ShapleyExact, NullPlayerAndSymmetry) {
  // v(T) = (number of points among {0,1})^2; point 2 is null.
  ObjectiveFunction v{"game", [](std::span<const DataPointRef> s) {
                        double k = 0;
                        for (const auto& p : s) k += p.owner.value < 2 ? 1 : 0;
                        return k * k;
                      }};
  auto pts = weighted_points({0, 0, 0});
  auto r = shapley_exact(pts, v);
  EXPECT_EQ(r.psi[2], 0.0);
  EXPECT_EQ(r.psi[0], r.psi[1]);
  EXPECT_NEAR(r.psi[0] + r.psi[1] + r.psi[2], 4.0, 1e-12);
}

TEST(ShapleyExact, MatchesPermutationOracle) {
  SeededRng rng(17);
  std::vector<double> table(1u << 5);
  for (auto& x : table) x = rng.normal(0, 1);
  table[0] = 0;
  auto pts = weighted_points({0, 0, 0, 0, 0});
  ObjectiveFunction v{"table", [&](std::span<const DataPointRef> s) {
                        std::size_t mask = 0;
                        for (const auto& p : s) mask |= std::size_t{1} << p.owner.value;
                        return table[mask];
                      }};
  auto r = shapley_exact(pts, v);
  auto expected = oracle::shapley_by_permutations(5, [&](std::size_t m) { return table[m]; });
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r.psi[i], expected[i], 1e-12);
}

TEST(ShapleyExact, RejectsLargeBatches) {
  auto pts = weighted_points(std::vector<double>(kExactShapleyLimit + 1, 1.0));
  EXPECT_THROW(shapley_exact(pts, additive()), ArgumentError);
}

TEST(ShapleySampled, AdditiveWithinFivePercent) {
  auto pts = weighted_points({3, 5, 1, 7});
  SeededRng rng(5);
  auto r = shapley_sampled(pts, additive(), 10000, rng);
  auto e = shapley_exact(pts, additive());
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_NEAR(r.psi[i], e.psi[i], 0.05 * e.psi[i]);
  EXPECT_EQ(r.method, ShapleyMethod::PermutationSampled);
  EXPECT_EQ(r.samples, 10000u);
}

TEST(ShapleySampled, DeterministicGivenSeed) {
  SeededRng g(3);
  auto pts = linear_points(6, 0, g, 0.5);
  auto holdout = linear_points(8, 100, g, 0.5);
  auto v = regression_objective(pts, holdout);
  SeededRng a(11), b(11);
  auto ra = shapley_sampled(pts, v, 200, a);
  auto rb = shapley_sampled(pts, v, 200, b);
  EXPECT_EQ(ra.psi, rb.psi);
  EXPECT_EQ(ra.std_error, rb.std_error);
  EXPECT_EQ(report_digest(ra), report_digest(rb));
}

TEST(ShapleySampled, SinglePointExact) {
  auto pts = weighted_points({4.5});
  SeededRng rng(1);
  auto r = shapley_sampled(pts, additive(), 7, rng);
  EXPECT_EQ(r.psi[0], 4.5);
}

TEST(ShapleySampled, EfficientPerPermutation) {
  SeededRng g(8);
  auto pts = linear_points(20, 0, g, 1.0);
  auto holdout = linear_points(10, 100, g, 1.0);
  auto v = regression_objective(pts, holdout);
  SeededRng rng(2);
  auto r = shapley(pts, v, 300, rng);
  EXPECT_EQ(r.method, ShapleyMethod::PermutationSampled);
  double sum = std::accumulate(r.psi.begin(), r.psi.end(), 0.0);
  EXPECT_NEAR(sum, r.grand_value - r.empty_value, 1e-9 * std::max(1.0, std::abs(r.empty_value)));
  EXPECT_THROW(shapley_sampled(pts, v, 0, rng), ArgumentError);
}

TEST(Regression, ExactLinearFit) {
  SeededRng g(4);
  auto train = linear_points(6, 0, g);
  auto holdout = linear_points(6, 50, g);
  auto v = regression_objective(train, holdout);
  EXPECT_GE(v(train), -1e-10);
}

TEST(Regression, EmptySubsetScoresNegativeVariance) {
  std::vector<DataPointRef> holdout{{AgentId{0}, {1, 0}, 1.0}, {AgentId{1}, {0, 1}, 3.0},
                                    {AgentId{2}, {1, 1}, 8.0}};
  auto v = regression_objective({}, holdout);
  double mean = 4.0;
  double var = ((1 - mean) * (1 - mean) + (3 - mean) * (3 - mean) + (8 - mean) * (8 - mean)) / 3;
  EXPECT_NEAR(v(std::span<const DataPointRef>{}), -var, 1e-12);
}

TEST(Regression, InformativePointsOutvalueNoise) {
  SeededRng g(6);
  std::vector<DataPointRef> pts;
  pts.push_back({AgentId{0}, {1.0, 0.2}, 2.0 * 1.0 + 3.0 * 0.2});
  pts.push_back({AgentId{1}, {-0.3, 1.1}, 2.0 * -0.3 + 3.0 * 1.1});
  pts.push_back({AgentId{2}, {0.8, -0.5}, g.normal(0, 5)});
  pts.push_back({AgentId{3}, {-1.2, 0.4}, g.normal(0, 5)});
  auto holdout = linear_points(12, 10, g);
  auto r = shapley_exact(pts, regression_objective(pts, holdout));
  EXPECT_GT(std::min(r.psi[0], r.psi[1]), std::max(r.psi[2], r.psi[3]));
}

TEST(Regression, InputValidation) {
  std::vector<DataPointRef> unlabeled{{AgentId{0}, {1.0}, std::nullopt}};
  std::vector<DataPointRef> ok{{AgentId{0}, {1.0}, 1.0}};
  std::vector<DataPointRef> wide{{AgentId{0}, {1.0, 2.0}, 1.0}};
  EXPECT_THROW(regression_objective(ok, {}), ArgumentError);
  EXPECT_THROW(regression_objective(unlabeled, ok), ArgumentError);
  EXPECT_THROW(regression_objective(wide, ok), ArgumentError);
}

TEST(AssignWork, Examples) {
  ShapleyReport r;
  r.agents = {AgentId{0}, AgentId{1}, AgentId{2}};
  r.psi = {1.0, 0.5, 0.0};
  auto w = assign_work(r, 10);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0].work_units, 1);
  EXPECT_EQ(w[1].work_units, 5);
  EXPECT_EQ(w[2].work_units, 10);

  r.psi = {2.0, 2.0, 2.0};
  for (const auto& a : assign_work(r, 10)) EXPECT_EQ(a.work_units, 5);
  for (const auto& a : assign_work(r, 1)) EXPECT_EQ(a.work_units, 1);

  ShapleyReport single;
  single.agents = {AgentId{4}};
  single.psi = {-3.0};
  auto s = assign_work(single, 7);
  EXPECT_EQ(s[0].normalized_value, 0.5);
  EXPECT_EQ(s[0].work_units, 4);
  EXPECT_THROW(assign_work(single, 0), ArgumentError);
}

TEST(AssignWork, AggregatesPointsPerOwner) {
  ShapleyReport r;
  r.agents = {AgentId{7}, AgentId{8}, AgentId{7}};
  r.psi = {1.0, 1.5, 1.0};
  auto w = assign_work(r, 10);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].agent, AgentId{7});
  EXPECT_EQ(w[0].work_units, 1);
  EXPECT_EQ(w[1].work_units, 10);
  EXPECT_EQ(r.value_of(AgentId{7}), 2.0);
  EXPECT_THROW(r.value_of(AgentId{9}), ArgumentError);
}

TEST(AssignWork, AffineInvarianceAndMonotone) {
  SeededRng g(12);
  auto pts = linear_points(6, 0, g, 2.0);
  auto holdout = linear_points(8, 100, g, 0.1);
  auto v = regression_objective(pts, holdout);
  ObjectiveFunction v2{"affine", [&](std::span<const DataPointRef> s) { return 2 * v(s) + 7; }};
  auto r1 = shapley_exact(pts, v);
  auto r2 = shapley_exact(pts, v2);
  std::vector<std::size_t> o1(6), o2(6);
  std::iota(o1.begin(), o1.end(), 0);
  o2 = o1;
  std::sort(o1.begin(), o1.end(), [&](auto a, auto b) { return r1.psi[a] < r1.psi[b]; });
  std::sort(o2.begin(), o2.end(), [&](auto a, auto b) { return r2.psi[a] < r2.psi[b]; });
  EXPECT_EQ(o1, o2);
  auto w1 = assign_work(r1, 10);
  auto w2 = assign_work(r2, 10);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(w1[i].work_units, w2[i].work_units);
    for (std::size_t j = 0; j < 6; ++j) {
      if (r1.psi[i] > r1.psi[j]) EXPECT_LE(w1[i].work_units, w1[j].work_units);
    }
  }
}

namespace {

std::vector<CoalitionBatch> chain_input(std::size_t q, std::size_t members, SeededRng& g) {
  std::vector<CoalitionBatch> out;
  for (std::size_t c = 0; c < q; ++c) {
    CoalitionBatch cb;
    cb.coalition.quadrant = QuadrantId{static_cast<int>(c + 1)};
    cb.coalition.objective = "ols";
    auto pts = linear_points(members, 100 * c, g, c == 0 ? 0.0 : 0.2 * static_cast<double>(c));
    for (const auto& p : pts) cb.coalition.members.push_back(p.owner);
    cb.batch = pts;
    out.push_back(cb);
  }
  return out;
}

std::vector<ObjectiveFunction> objectives(const std::vector<CoalitionBatch>& cs, SeededRng& g) {
  auto holdout = linear_points(10, 10000, g);
  std::vector<ObjectiveFunction> out;
  for (std::size_t t = 0; t < cs.size(); ++t) out.push_back(regression_objective(cs[t].batch, holdout));
  return out;
}

}  // namespace

TEST(WorkChain, TwoCoalitions) {
  SeededRng g(20);
  auto cs = chain_input(2, 4, g);
  auto vs = objectives(cs, g);
  SeededRng rng(1);
  auto chain = run_work_chain(cs, vs, 10, rng);
  ASSERT_EQ(chain.stages.size(), 1u);
  EXPECT_EQ(chain.admitted, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(chain.stages[0].receipt.stage, 1u);
  EXPECT_EQ(chain.stages[0].receipt.valuator, QuadrantId{1});
  EXPECT_EQ(chain.stages[0].receipt.valuated, QuadrantId{2});
  EXPECT_NO_THROW(verify_work_chain(chain.stages));
}

TEST(WorkChain, TamperedReceiptNamesStage) {
  SeededRng g(21);
  auto cs = chain_input(3, 4, g);
  auto vs = objectives(cs, g);
  SeededRng rng(1);
  auto chain = run_work_chain(cs, vs, 10, rng);
  ASSERT_EQ(chain.stages.size(), 2u);
  auto bad = chain.stages;
  bad[1].receipt.allocation[0].second = AgentId{999};
  try {
    verify_work_chain(bad);
    FAIL() << "tampering not detected";
  } catch (const IntegrityError& e) {
    EXPECT_EQ(e.stage(), 2u);
  }
  bad = chain.stages;
  bad[1].report.psi[0] += 1e-9;
  try {
    verify_work_chain(bad);
    FAIL() << "tampering not detected";
  } catch (const IntegrityError& e) {
    EXPECT_EQ(e.stage(), 2u);
  }
}

TEST(WorkChain, MostValuableMemberValuatesFewestPoints) {
  SeededRng g(22);
  auto cs = chain_input(3, 4, g);
  // Coalition 2's batch is large so its work split is observable.
  cs[2].batch = linear_points(12, 500, g, 0.3);
  for (std::size_t i = 0; i < cs[2].batch.size(); ++i) {
    cs[2].batch[i].owner = cs[2].coalition.members[i % cs[2].coalition.members.size()];
  }
  auto vs = objectives(cs, g);
  SeededRng rng(3);
  auto chain = run_work_chain(cs, vs, 10, rng);
  const auto& quotas = chain.stages[0].assignments;  // for coalition 2's members
  auto best = std::min_element(quotas.begin(), quotas.end(), [](const auto& a, const auto& b) {
    return a.work_units < b.work_units;
  });
  auto worst = std::max_element(quotas.begin(), quotas.end(), [](const auto& a, const auto& b) {
    return a.work_units < b.work_units;
  });
  ASSERT_LT(best->work_units, worst->work_units);
  std::map<AgentId, int> load;
  for (const auto& [owner, worker] : chain.stages[1].receipt.allocation) {
    EXPECT_NE(owner, worker);
    ++load[worker];
  }
  int best_load = load[best->agent];
  for (const auto& m : cs[1].coalition.members) EXPECT_LE(best_load, load[m]);
  EXPECT_LT(best_load, load[worst->agent]);
}

TEST(WorkChain, Preconditions) {
  SeededRng g(23);
  auto cs = chain_input(2, 3, g);
  auto vs = objectives(cs, g);
  SeededRng rng(1);
  EXPECT_THROW(run_work_chain(std::span(cs).first(1), vs, 10, rng), ArgumentError);
  EXPECT_THROW(run_work_chain(cs, std::span<const ObjectiveFunction>{}, 10, rng), StructuralError);
}

TEST(DataCsv, ReadAndWrite) {
  std::istringstream in("x1,x2,label,agent\n1,2,8,5\n0.5,-1,-2,6\n");
  auto pts = read_data_points(in);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].owner, AgentId{5});
  EXPECT_EQ(pts[1].features, (std::vector<double>{0.5, -1}));
  EXPECT_EQ(*pts[1].label, -2);

  std::istringstream no_agent("w,label\n1,3\n2,5\n");
  auto p2 = read_data_points(no_agent);
  EXPECT_EQ(p2[1].owner, AgentId{1});

  std::istringstream bad("x,label\n1,abc\n");
  EXPECT_THROW(read_data_points(bad), ArgumentError);

  auto r = shapley_exact(weighted_points({3, 5}), additive());
  std::ostringstream out;
  write_shapley_csv(r, out);
  EXPECT_EQ(out.str(), "agent,psi,method,samples\n0,3,exact,0\n1,5,exact,0\n");
}
