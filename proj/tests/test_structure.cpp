#include <gtest/gtest.h>

#include <random>

#include "focus/car_env.hpp"
#include "focus/structure.hpp"

using namespace focus;

namespace {

PValueMatrix pmatrix(const std::vector<double>& flat) {
  DimensionSchema s{{"x"}, {"a"}, "r"};
  Eigen::MatrixXd p(2, 2);
  p << flat[0], flat[1], flat[2], flat[3];
  return PValueMatrix(s, p);
}

// One state, one action; s' is driven by a alone and r is pure noise.
TransitionDataset chain_mdp(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd s(Eigen::Index(n), 1), a(Eigen::Index(n), 1), sn(Eigen::Index(n), 1);
  Eigen::VectorXd r(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < Eigen::Index(n); ++i) {
    s(i, 0) = g(rng);
    a(i, 0) = g(rng);
    sn(i, 0) = a(i, 0) + 0.3 * g(rng);
    r(i) = g(rng);
  }
  return TransitionDataset({{"s"}, {"a"}, "r"}, s, a, sn, r, SourceTag::Synthetic);
}

Eigen::VectorXd normals(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST(SelectThreshold, GapExample) {
  const auto rep = select_threshold(std::vector<double>{0.4, 0.001, 0.5, 0.003, 0.002});
  ASSERT_EQ(rep.gap_scores.size(), 4u);
  const std::vector<double> hand{0.002 / 2 - 0.001, 0.003 / 3 - 0.002 / 2, 0.4 / 4 - 0.003 / 3, 0.5 / 5 - 0.4 / 4};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(rep.gap_scores[i], hand[i], 1e-15);
  EXPECT_NEAR(rep.gap_scores[2], 0.099, 1e-12);
  EXPECT_EQ(rep.chosen_index, 2u);
  EXPECT_EQ(rep.p_star, 0.003);
  EXPECT_TRUE(std::is_sorted(rep.sorted_p.begin(), rep.sorted_p.end()));
}

TEST(SelectThreshold, TwoValues) {
  const auto rep = select_threshold(std::vector<double>{0.5, 0.01});
  ASSERT_EQ(rep.gap_scores.size(), 1u);
  EXPECT_NEAR(rep.gap_scores[0], 0.24, 1e-15);
  EXPECT_EQ(rep.p_star, 0.01);
}

TEST(SelectThreshold, IdenticalValuesAreRefused) {
  EXPECT_THROW(select_threshold(std::vector<double>(49, 0.3)), InvalidArgument);
  EXPECT_THROW(select_threshold(std::vector<double>{0.1}), InvalidArgument);
}

TEST(SelectThreshold, TiesFavourSmallerIndex) {
  // Gap scores are 0.0625, 0.0625 (exact in binary): the first wins.
  const auto rep = select_threshold(std::vector<double>{0.0625, 0.25, 0.5625});
  EXPECT_EQ(rep.gap_scores[0], rep.gap_scores[1]);
  EXPECT_EQ(rep.chosen_index, 0u);
}

TEST(SelectThreshold, DependsOnlyOnMultiset) {
  const std::vector<double> a{0.3, 0.02, 0.9, 0.001, 0.5}, b{0.9, 0.5, 0.001, 0.3, 0.02};
  EXPECT_EQ(select_threshold(a).p_star, select_threshold(b).p_star);
  EXPECT_EQ(select_threshold(pmatrix({0.3, 0.02, 0.9, 0.001})).p_star,
            select_threshold(std::vector<double>{0.001, 0.02, 0.3, 0.9}).p_star);
}

TEST(GraphFromPvalues, IndicatorIsInclusive) {
  const auto g = graph_from_pvalues(pmatrix({0.001, 0.003, 0.0031, 0.9}), 0.003);
  EXPECT_TRUE(g.edge(0, 0));
  EXPECT_TRUE(g.edge(0, 1));
  EXPECT_FALSE(g.edge(1, 0));
  EXPECT_FALSE(g.edge(1, 1));
  EXPECT_THROW(graph_from_pvalues(pmatrix({0.1, 0.2, 0.3, 0.4}), 0.0), InvalidArgument);
  EXPECT_THROW(graph_from_pvalues(pmatrix({0.1, 0.2, 0.3, 0.4}), 1.0), InvalidArgument);
}

TEST(GraphFromPvalues, MonotoneInThreshold) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd p(7, 7);
  for (auto& x : p.reshaped()) x = u(rng);
  const PValueMatrix pm(car::car_schema(), p);
  CausalGraph prev = CausalGraph::empty(car::car_schema());
  for (double t = 0.01; t < 1.0; t += 0.01) {
    const auto g = graph_from_pvalues(pm, t);
    for (Eigen::Index i = 0; i < 7; ++i)
      for (Eigen::Index j = 0; j < 7; ++j) EXPECT_GE(g.mask()(i, j), prev.mask()(i, j));
    prev = g;
  }
}

TEST(StructureAccuracy, CountingExamples) {
  const auto truth = car::ground_truth_graph();
  auto s = structure_accuracy(truth, truth);
  EXPECT_EQ(s.accuracy, 1.0);
  EXPECT_EQ(s.f1, 1.0);
  CausalGraph flipped = truth;
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j) flipped.set_edge(i, j, !truth.edge(i, j));
  EXPECT_EQ(structure_accuracy(flipped, truth).accuracy, 0.0);
  CausalGraph one_off = truth;
  one_off.set_edge(4, 5, !truth.edge(4, 5));
  EXPECT_DOUBLE_EQ(structure_accuracy(one_off, truth).accuracy, 48.0 / 49.0);
  DimensionSchema small{{"x"}, {"a"}, "r"};
  EXPECT_THROW(structure_accuracy(CausalGraph::full(small), truth), InvalidArgument);
}

TEST(StructureAccuracy, PrecisionRecall) {
  const auto truth = car::ground_truth_graph();
  const auto full = CausalGraph::full(car::car_schema());
  const auto s = structure_accuracy(full, truth);
  EXPECT_DOUBLE_EQ(s.recall, 1.0);
  EXPECT_DOUBLE_EQ(s.precision, double(truth.edge_count()) / 49.0);
}

TEST(LinearCiTest, PerfectCorrelation) {
  Rng rng(1);
  const auto x = normals(200, rng);
  const Eigen::VectorXd y = 2.0 * x;
  EXPECT_LT(linear_ci_test(x, y, Eigen::MatrixXd(200, 0)).p_value, 0.01);
}

TEST(LinearCiTest, SingularResidualGivesOne) {
  Rng rng(2);
  const auto x = normals(100, rng), y = normals(100, rng);
  const Eigen::MatrixXd z = x;  // x is fully explained by z
  const auto r = linear_ci_test(x, y, z);
  EXPECT_TRUE(r.singular);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(LinearCiTest, MissesQuadraticDependenceThatKciCatches) {
  std::size_t linear_miss = 0, kci_hit = 0;
  for (std::uint64_t t = 0; t < 50; ++t) {
    Rng rng(derive_seed(10, t));
    const auto x = normals(300, rng);
    const Eigen::VectorXd y = x.array().square().matrix() + 0.3 * normals(300, rng);
    linear_miss += linear_ci_test(x, y, Eigen::MatrixXd(300, 0)).p_value > 0.05;
    kci_hit += hsic_test(x, y, {}).p_value < 0.05;
  }
  EXPECT_GT(linear_miss, 25u);
  EXPECT_GT(kci_hit, 25u);
}

TEST(LinearCiTest, AgreesWithKciOnGaussianChain) {
  std::size_t agree = 0;
  for (std::uint64_t t = 0; t < 30; ++t) {
    Rng rng(derive_seed(20, t));
    const auto x = normals(400, rng);
    const Eigen::VectorXd z = x + normals(400, rng);
    const Eigen::VectorXd y = z + normals(400, rng);
    // Alternate between the true null (x _||_ y | z) and a dependent pair (x, z | y).
    const bool null_case = t % 2 == 0;
    const Eigen::VectorXd b = null_case ? y : z;
    const Eigen::MatrixXd c = null_case ? z : y;
    const bool lin = linear_ci_test(x, b, c).p_value < 0.05;
    const bool ker = kci_test(x, b, c, {}).p_value < 0.05;
    agree += lin == ker;
  }
  EXPECT_GE(agree, 27u);
}

TEST(ConditioningSets, FocusRuleNeverConditionsOnNextStep) {
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j) {
      const auto z = detail::conditioning_set(ConditioningRule::FocusRule, 7, 7, i, j);
      EXPECT_EQ(z.size(), 6u);
      for (auto c : z) {
        EXPECT_LT(c, 7);
        EXPECT_NE(std::size_t(c), i);
      }
      const auto all = detail::conditioning_set(ConditioningRule::AllVariables, 7, 7, i, j);
      EXPECT_EQ(all.size(), 12u);
      for (auto c : all) EXPECT_NE(std::size_t(c), 7 + j);
      EXPECT_TRUE(detail::conditioning_set(ConditioningRule::NoConditioning, 7, 7, i, j).empty());
    }
}

TEST(ConditioningRuleNames, ParseAndReject) {
  EXPECT_EQ(conditioning_rule_from_string("focus"), ConditioningRule::FocusRule);
  EXPECT_EQ(conditioning_rule_from_string("all"), ConditioningRule::AllVariables);
  EXPECT_EQ(conditioning_rule_from_string("none"), ConditioningRule::NoConditioning);
  EXPECT_THROW(conditioning_rule_from_string("pc"), InvalidArgument);
}

TEST(BuildPvalueMatrix, MinimalChainHasOneLowEntry) {
  const auto ds = chain_mdp(400, 4);
  const auto p = build_pvalue_matrix(ds, {});
  EXPECT_LT(p(1, 0), 1e-4);  // a -> s'
  std::size_t low = 0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) low += p(i, j) < 0.01;
  EXPECT_EQ(low, 1u);
  EXPECT_TRUE(learn_structure(ds, {}).graph.edge(1, 0));
}

TEST(BuildPvalueMatrix, NeedsFiftyRows) {
  EXPECT_THROW(build_pvalue_matrix(chain_mdp(49, 1), {}), InvalidArgument);
}

TEST(BuildPvalueMatrix, SharedKernelsMatchDirectTests) {
  // The cached per-source path must agree with a fresh kci_test per cell.
  const auto ds = chain_mdp(120, 5);
  StructureConfig cfg;
  const auto p = build_pvalue_matrix(ds, cfg);
  const Eigen::MatrixXd in = ds.inputs(), out = ds.targets();
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 2; ++j) {
      KciConfig k = cfg.kci;
      k.seed = derive_seed(cfg.kci.seed, std::uint64_t(i), std::uint64_t(j));
      const Eigen::MatrixXd z = in.col(1 - i);
      EXPECT_NEAR(p(std::size_t(i), std::size_t(j)), kci_test(in.col(i), out.col(j), z, k).p_value, 1e-9);
    }
}

TEST(BuildPvalueMatrix, CarRandomDataRecoversKeyEdges) {
  const auto ds = car::generate_offline_data(car::DataKind::Random, 20000, {}, 0);
  const auto learned = learn_structure(ds, {});
  using namespace car;
  EXPECT_LE(learned.pvalues(kD, kVx), learned.threshold.p_star);   // heading drives v_x'
  EXPECT_LE(learned.pvalues(kAction, kD), learned.threshold.p_star);
  EXPECT_GT(learned.pvalues(kPx, kPy), learned.threshold.p_star);  // no p_x -> p_y'
  EXPECT_GT(structure_accuracy(learned.graph, ground_truth_graph()).accuracy, 0.8);
}

TEST(StructureConfigJson, RoundTrip) {
  StructureConfig c;
  c.rule = ConditioningRule::AllVariables;
  c.test = CiTest::Linear;
  c.kci.null_method = Permutation{300};
  c.kci.bandwidth = FixedBandwidth{0.7};
  c.kci.seed = 42;
  const auto j = structure_config_to_json(c);
  const auto back = structure_config_from_json(j);
  EXPECT_EQ(structure_config_to_json(back), j);
  EXPECT_EQ(back.rule, ConditioningRule::AllVariables);
  EXPECT_EQ(std::get<Permutation>(back.kci.null_method).count, 300);
}
