#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "privci/eval.hpp"
#include "privci/model.hpp"
#include "support/instances.hpp"

namespace privci {
namespace {

NoisyMeasurements exact_measurements(const Dataset& data, const Tree& tree) {
  NoisyMeasurements m;
  m.schema = data.schema();
  m.tree = tree;
  for (int i = 0; i < data.d(); ++i) m.one_way.push_back(one_way_counts(data, i));
  for (const Edge& e : tree.edges) m.two_way.push_back(two_way_counts(data, e.u, e.v));
  return m;
}

// Chain 0 - 1 - 2 over binary attributes with hand-set tables.
nlohmann::json chain_json() {
  return {{"schema", schema_to_json(testing::binary_schema(3))},
          {"edges", {{0, 1}, {1, 2}}},
          {"root", 0},
          {"parent", {-1, 0, 1}},
          {"root_marginal", {0.3, 0.7}},
          {"conditionals",
           {{{"child", 1}, {"parent", 0}, {"table", {{0.9, 0.1}, {0.2, 0.8}}}},
            {{"child", 2}, {"parent", 1}, {"table", {{0.6, 0.4}, {0.25, 0.75}}}}}}};
}

double full_joint_sum(const TreeModel& m) {
  std::vector<int> rec(static_cast<std::size_t>(m.d()), 0);
  double total = 0.0;
  while (true) {
    total += model_joint_prob(m, rec);
    int k = 0;
    while (k < m.d() && ++rec[static_cast<std::size_t>(k)] == m.schema.domain_size(k)) rec[static_cast<std::size_t>(k++)] = 0;
    if (k == m.d()) break;
  }
  return total;
}

TEST(FlooredDistribution, ClipsAndStaysPositive) {
  const std::vector<double> cells{-0.1, 3.0, 1.0};
  const auto p = floored_distribution(cells);
  double s = 0.0;
  for (double x : p) {
    EXPECT_GE(x, kProbabilityFloor);
    s += x;
  }
  EXPECT_NEAR(s, 1.0, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-7);
  const auto u = floored_distribution(std::vector<double>{-1.0, -2.0});
  EXPECT_NEAR(u[0], 0.5, 1e-15);
}

TEST(Ipf, MatchesTargetsWithinTolerance) {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 2 + static_cast<std::size_t>(trial % 3), c = 2 + static_cast<std::size_t>(trial % 4);
    std::vector<double> table(r * c), rows(r), cols(c);
    for (double& x : table) x = u(g);
    for (double& x : rows) x = u(g);
    for (double& x : cols) x = u(g);
    rows = floored_distribution(rows);
    cols = floored_distribution(cols);
    const IpfResult fit = fit_to_marginals(table, rows, cols);
    ASSERT_LT(fit.residual, kIpfTolerance);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += fit.table[i * c + j];
      ASSERT_NEAR(s, rows[i], kIpfTolerance);
    }
  }
}

TEST(Ipf, NonConvergenceIsReported) {
  const std::vector<double> table{1.0, 1.0, 1.0, 1.0};
  const std::vector<double> rows{0.1, 0.9}, cols{0.7, 0.3};
  EXPECT_THROW(fit_to_marginals(table, rows, cols, 1e-30, 1), ReconstructionError);
}

TEST(Ipf, NewtonFinishesSlowNearBoundaryFit) {
  // IPF alone needs about a thousand sweeps here
  const auto rows = floored_distribution(std::vector<double>{0.267, 0.231, 0.259, 0.243});
  const auto cols = floored_distribution(std::vector<double>{0.365, 0.332, 0.227, 0.0761});
  const std::vector<double> table{0.268, 0.157, 0.0627, 1e-08, 1e-08, 1e-08, 0.0358, 1e-08,
                                  0.211, 0.0921, 0.0667, 0.0719, 0.034, 1e-08, 1e-08, 1e-08};
  const IpfResult fast = fit_to_marginals(table, rows, cols);
  EXPECT_GT(fast.newton_steps, 0);
  EXPECT_LE(fast.residual, kIpfTolerance);
  const IpfResult slow = fit_to_marginals(table, rows, cols, kIpfTolerance, 5000, 0);
  EXPECT_EQ(slow.newton_steps, 0);
  EXPECT_GT(slow.sweeps, kIpfMaxSweeps);
  for (std::size_t i = 0; i < table.size(); ++i) EXPECT_NEAR(fast.table[i], slow.table[i], 1e-8) << i;
}

TEST(Reconcile, NoiselessConsistentInputsReproduceEmpiricalConditionals) {
  std::mt19937_64 g(6);
  const Dataset data = testing::random_dataset({2, 3, 2}, 500, g);
  const Tree tree{3, {Edge(0, 1), Edge(1, 2)}};
  const TreeModel m = reconcile(exact_measurements(data, tree));
  for (const EdgeFit& f : m.fits) {
    // the floor shifts the targets by ~1e-8, so a couple of sweeps remain
    EXPECT_LE(f.sweeps, 3);
    EXPECT_LT(f.residual, kIpfTolerance);
  }
  const CountTable c12 = two_way_counts(data, 1, 2);
  const CountTable c1 = one_way_counts(data, 1);
  for (int pv = 0; pv < 3; ++pv) {
    for (int cv = 0; cv < 2; ++cv) {
      EXPECT_NEAR(m.conditional(2, pv, cv), c12.at(pv, cv) / c1.cells[pv], 1e-6);
    }
  }
}

TEST(Reconcile, NegativeCellIsFlooredAndModelIsValid) {
  const Dataset data = Dataset::from_rows(testing::binary_schema(2), {{0, 0}, {1, 1}, {1, 0}});
  NoisyMeasurements m = exact_measurements(data, Tree{2, {Edge(0, 1)}});
  m.two_way[0].cells[1] = -0.1;
  const TreeModel model = reconcile(m);
  for (int pv = 0; pv < 2; ++pv) {
    double s = 0.0;
    for (int cv = 0; cv < 2; ++cv) {
      EXPECT_GT(model.conditional(1, pv, cv), 0.0);
      s += model.conditional(1, pv, cv);
    }
    EXPECT_NEAR(s, 1.0, 1e-10);
  }
  EXPECT_NEAR(full_joint_sum(model), 1.0, 1e-12);
}

TEST(Reconcile, EdgeMarginalsMatchCanonicalNodeMarginals) {
  std::mt19937_64 g(7);
  const Dataset data = testing::random_dataset({3, 2, 4, 2, 3}, 200, g);
  const Tree tree{5, {Edge(0, 1), Edge(1, 2), Edge(1, 3), Edge(3, 4)}};
  RngStream r(3, "noise");
  const PrivacyBudget plan = stage_plan(0.5, 1e-9, 5);
  const TreeModel m = reconcile(measure(data, tree, plan, r));
  const auto nodes = model_node_marginals(m);
  for (const EdgeFit& f : m.fits) {
    ASSERT_LT(f.residual, kIpfTolerance);
    const auto em = model_edge_marginal(m, f.edge);
    for (std::size_t k = 0; k < em.size(); ++k) ASSERT_NEAR(em[k], f.table[k], 1e-8);
    const auto ku = static_cast<std::size_t>(m.schema.domain_size(f.edge.u));
    const auto kv = static_cast<std::size_t>(m.schema.domain_size(f.edge.v));
    for (std::size_t a = 0; a < ku; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < kv; ++b) s += f.table[a * kv + b];
      ASSERT_NEAR(s, nodes[static_cast<std::size_t>(f.edge.u)][a], 1e-9);
    }
  }
  EXPECT_NEAR(full_joint_sum(m), 1.0, 1e-8);
}

TEST(Reconcile, RootAndOrientation) {
  std::mt19937_64 g(8);
  const Dataset data = testing::random_dataset({2, 2, 2, 2}, 50, g);
  const Tree tree{4, {Edge(2, 3), Edge(1, 2), Edge(0, 2)}};
  const TreeModel m = reconcile(exact_measurements(data, tree));
  EXPECT_EQ(m.root, 0);
  EXPECT_EQ(m.parent, (std::vector<int>{-1, 2, 0, 2}));
  EXPECT_EQ(m.order.front(), 0);
}

TEST(Measure, TinyNoiseEqualsExactAndSeedsReproduce) {
  std::mt19937_64 g(9);
  const Dataset data = testing::random_dataset({2, 3, 2}, 80, g);
  const Tree tree{3, {Edge(0, 1), Edge(0, 2)}};
  RngStream r(1, "m");
  const auto one = measure_one_way(data, 1e-12, r);
  for (int i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < one[i].cells.size(); ++k) EXPECT_NEAR(one[i].cells[k], one_way_counts(data, i).cells[k], 1e-9);
  }
  const PrivacyBudget plan = stage_plan(1.0, 1e-9, 3);
  RngStream a(5, "m"), b(5, "m");
  const auto ma = measure(data, tree, plan, a);
  const auto mb = measure(data, tree, plan, b);
  for (std::size_t k = 0; k < ma.two_way.size(); ++k) EXPECT_EQ(ma.two_way[k].cells, mb.two_way[k].cells);
  EXPECT_THROW(measure(data, Tree{3, {Edge(0, 1)}}, plan, a), ArgumentError);
}

TEST(Measure, PerCellNoiseScale) {
  const Dataset data = Dataset::from_rows(testing::binary_schema(2), {{0, 0}, {1, 1}});
  const PrivacyBudget plan = stage_plan(1.0, 1e-9, 2);
  double sq = 0.0;
  const int reps = 10'000;
  RngStream r(2, "scale");
  for (int k = 0; k < reps; ++k) {
    const auto one = measure_one_way(data, plan.sigma_one_way, r);
    const double dev = one[0].cells[0] - 1.0;
    sq += dev * dev;
  }
  EXPECT_NEAR(std::sqrt(sq / reps) / plan.sigma_one_way, 1.0, 0.05);
  EXPECT_NEAR(plan.sigma_one_way, std::sqrt(2.0) * plan.sigma_g_base, 1e-12);
}

TEST(JointProb, ChainHandProduct) {
  const TreeModel m = model_from_json(chain_json());
  const std::vector<int> rec{1, 0, 1};
  EXPECT_NEAR(model_joint_prob(m, rec), 0.7 * 0.2 * 0.4, 1e-15);
  EXPECT_NEAR(full_joint_sum(m), 1.0, 1e-12);
  EXPECT_THROW(model_joint_prob(m, std::vector<int>{0, 2, 0}), ArgumentError);
  EXPECT_THROW(model_joint_prob(m, std::vector<int>{0, 0}), ArgumentError);
}

TEST(JointProb, IndependentUniformBinary) {
  std::vector<std::vector<int>> rows{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const TreeModel m = reconcile(exact_measurements(Dataset::from_rows(testing::binary_schema(2), rows), Tree{2, {Edge(0, 1)}}));
  for (const auto& r : rows) EXPECT_NEAR(model_joint_prob(m, r), 0.25, 1e-12);
}

TEST(Json, RoundTripPreservesEveryProbability) {
  std::mt19937_64 g(10);
  const Dataset data = testing::random_dataset({3, 2, 4, 2}, 100, g);
  const Tree tree{4, {Edge(0, 1), Edge(1, 2), Edge(0, 3)}};
  RngStream r(4, "json");
  const TreeModel m = reconcile(measure(data, tree, stage_plan(1.0, 1e-9, 4), r));
  const TreeModel back = model_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(back.parent, m.parent);
  EXPECT_EQ(back.root_marginal.cells, m.root_marginal.cells);
  EXPECT_EQ(back.conditionals, m.conditionals);
  EXPECT_TRUE(back.schema == m.schema);
}

TEST(Json, InvalidDocumentsRejected) {
  auto j = chain_json();
  j["edges"] = {{0, 1}};
  EXPECT_THROW(model_from_json(j), ParseError);
  j = chain_json();
  j["parent"] = {-1, 0, 0};
  EXPECT_THROW(model_from_json(j), ParseError);
  j = chain_json();
  j["conditionals"][0]["table"] = {{0.5, 0.5}};
  EXPECT_THROW(model_from_json(j), ParseError);
}

TEST(Sample, EmptyAndDeterministic) {
  const TreeModel m = model_from_json(chain_json());
  RngStream r(1, "s");
  EXPECT_EQ(sample(m, 0, r).n(), 0u);
  RngStream a(9, "s"), b(9, "s");
  EXPECT_TRUE(sample(m, 500, a) == sample(m, 500, b));
}

TEST(Sample, EmpiricalJointCloseToModel) {
  const TreeModel m = model_from_json(chain_json());
  RngStream r(12, "tv");
  const std::size_t n = 100'000;
  const Dataset s = sample(m, n, r);
  std::map<std::vector<int>, double> freq;
  for (std::size_t k = 0; k < n; ++k) freq[s.row(k)] += 1.0;
  double tv = 0.0;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (int c = 0; c < 2; ++c) {
        const std::vector<int> rec{a, b, c};
        tv += std::abs(freq[rec] / static_cast<double>(n) - model_joint_prob(m, rec));
      }
    }
  }
  EXPECT_LT(0.5 * tv, 0.01);
}

TEST(ModelCmi, SeparatedTreeHasZeroCmi) {
  std::mt19937_64 g(13);
  const Dataset data = testing::random_dataset({2, 3, 2, 3}, 300, g);
  // 0 - 1 - 2 and 1 - 3; Z = {1} separates 0 from 2
  const Tree tree{4, {Edge(0, 1), Edge(1, 2), Edge(1, 3)}};
  RngStream r(5, "cmi");
  const TreeModel m = reconcile(measure(data, tree, stage_plan(1.0, 1e-9, 4), r));
  const std::vector<int> X{0}, Y{2}, Z{1};
  EXPECT_LT(std::abs(cmi(m, X, Y, Z)), 1e-10);
  // without conditioning the endpoints remain dependent
  EXPECT_GT(cmi(m, X, std::vector<int>{1}, std::vector<int>{}), 0.0);
}

}  // namespace
}  // namespace privci
