#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "focus/kci.hpp"

using namespace focus;

namespace {

Eigen::VectorXd normals(std::size_t n, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = g(rng);
  return v;
}

// Kolmogorov-Smirnov distance of a sample from Uniform(0,1).
double ks_uniform(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  double d = 0.0;
  const double n = double(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    d = std::max({d, double(i + 1) / n - p[i], p[i] - double(i) / n});
  return d;
}

}  // namespace

TEST(GramMatrix, IdenticalPointsGiveAllOnes) {
  Eigen::MatrixXd x(2, 1);
  x << 0.7, 0.7;
  const auto k = gram_matrix(x, 1.3);
  EXPECT_TRUE(k.isApprox(Eigen::MatrixXd::Ones(2, 2)));
}

TEST(GramMatrix, HalfAtClosedFormDistance) {
  const double b = 0.8;
  Eigen::MatrixXd x(2, 1);
  x << 0.0, b * std::sqrt(2.0 * std::log(2.0));
  const auto k = gram_matrix(x, b);
  EXPECT_NEAR(k(0, 1), 0.5, 1e-12);
  EXPECT_NEAR(k(1, 0), 0.5, 1e-12);
  EXPECT_EQ(k(0, 0), 1.0);
}

TEST(GramMatrix, RandomGramIsPositiveSemidefinite) {
  Rng rng(5);
  const Eigen::MatrixXd x = normals(50, rng);
  const auto k = gram_matrix(x, median_pairwise_distance(x));
  EXPECT_TRUE(k.isApprox(k.transpose(), 0.0));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-8);
}

TEST(GramMatrix, RejectsBadInput) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 1);
  EXPECT_THROW(gram_matrix(x, 0.0), InvalidArgument);
  EXPECT_THROW(gram_matrix(x, -1.0), InvalidArgument);
  EXPECT_THROW(gram_matrix(Eigen::MatrixXd::Zero(1, 1), 1.0), InvalidArgument);
  x(1, 0) = std::nan("");
  EXPECT_THROW(gram_matrix(x, 1.0), InvalidArgument);
}

TEST(KciConfig, Validation) {
  KciConfig c;
  c.max_test_samples = 49;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.ridge_epsilon = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.null_method = Permutation{99};
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Hsic, StatisticMatchesTraceDefinition) {
  Rng rng(11);
  const auto x = normals(80, rng), y = normals(80, rng);
  const auto res = hsic_test(x, y, {});
  Eigen::MatrixXd xs = x, ys = y;
  auto standardize = [](Eigen::MatrixXd& m) {
    const double mu = m.mean();
    const double sd = std::sqrt((m.array() - mu).square().sum() / double(m.rows() - 1));
    m = ((m.array() - mu) / sd).matrix();
  };
  standardize(xs);
  standardize(ys);
  const Eigen::Index n = 80;
  const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / double(n));
  const Eigen::MatrixXd kx = h * gram_matrix(xs, median_pairwise_distance(xs)) * h;
  const Eigen::MatrixXd ky = h * gram_matrix(ys, median_pairwise_distance(ys)) * h;
  EXPECT_NEAR(res.statistic, (kx * ky).trace() / double(n), 1e-9);
  EXPECT_GE(res.statistic, 0.0);
}

TEST(Hsic, PerfectDependenceIsDetected) {
  Rng rng(1);
  const auto x = normals(500, rng);
  const auto res = hsic_test(x, x, {});
  EXPECT_LT(res.p_value, 0.01);
  EXPECT_EQ(res.n_used, 500u);
  EXPECT_FALSE(res.degenerate);
}

TEST(Hsic, ConstantColumnIsDegenerate) {
  Rng rng(2);
  const auto x = normals(100, rng);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(100, 3.0);
  const auto res = hsic_test(x, y, {});
  EXPECT_TRUE(res.degenerate);
  EXPECT_EQ(res.p_value, 1.0);
}

TEST(Hsic, RejectsShortOrMismatchedInput) {
  Rng rng(3);
  EXPECT_THROW(hsic_test(normals(49, rng), normals(49, rng), {}), InvalidArgument);
  EXPECT_THROW(hsic_test(normals(60, rng), normals(61, rng), {}), InvalidArgument);
}

TEST(Hsic, ExchangeableInArguments) {
  Rng rng(4);
  const auto x = normals(300, rng);
  Eigen::VectorXd y = x.array().square().matrix() + normals(300, rng);
  const auto xy = hsic_test(x, y, {}), yx = hsic_test(y, x, {});
  EXPECT_NEAR(xy.statistic, yx.statistic, 1e-10);
}

TEST(Hsic, NullCalibration) {
  std::vector<double> p;
  std::size_t rejected = 0;
  for (std::uint64_t t = 0; t < 200; ++t) {
    Rng rng(derive_seed(1000, t));
    const auto x = normals(200, rng), y = normals(200, rng);
    p.push_back(hsic_test(x, y, {}).p_value);
    rejected += p.back() < 0.05;
  }
  const double rate = double(rejected) / 200.0;
  EXPECT_GE(rate, 0.02);
  EXPECT_LE(rate, 0.09);
  EXPECT_LT(ks_uniform(p), 0.15);
}

TEST(Hsic, SubsamplingIsDeterministicUnderSeed) {
  Rng rng(6);
  const auto x = normals(3000, rng);
  const Eigen::VectorXd y = x + normals(3000, rng, 3.0);
  KciConfig cfg;
  cfg.max_test_samples = 300;
  cfg.seed = 77;
  const auto a = hsic_test(x, y, cfg), b = hsic_test(x, y, cfg);
  EXPECT_EQ(a.statistic, b.statistic);
  EXPECT_EQ(a.p_value, b.p_value);
  EXPECT_EQ(a.n_used, 300u);
  cfg.seed = 78;
  EXPECT_NE(hsic_test(x, y, cfg).statistic, a.statistic);
}

TEST(Hsic, GammaAgreesWithPermutationOracle) {
  std::size_t agree = 0;
  for (std::uint64_t t = 0; t < 12; ++t) {
    Rng rng(derive_seed(2000, t));
    const auto x = normals(200, rng);
    const double coupling = t % 2 == 0 ? 0.0 : 0.4;
    const Eigen::VectorXd y = coupling * x + normals(200, rng);
    KciConfig perm;
    perm.null_method = Permutation{1000};
    perm.seed = t;
    const auto g = hsic_test(x, y, {}), p = hsic_test(x, y, perm);
    EXPECT_EQ(p.method, NullKind::Permutation);
    EXPECT_EQ(g.statistic, p.statistic);
    agree += (g.p_value < 0.05) == (p.p_value < 0.05);
  }
  EXPECT_GE(agree, 11u);
}

TEST(Kci, ChainIsIndependentGivenMiddle) {
  // 300 trials rather than 50 so the 90% acceptance rate is not decided by
  // a handful of draws.
  std::size_t accepted = 0;
  for (std::uint64_t t = 0; t < 300; ++t) {
    Rng rng(derive_seed(3000, t));
    const auto x = normals(500, rng);
    const Eigen::VectorXd z = x + normals(500, rng);
    const Eigen::VectorXd y = z + normals(500, rng);
    accepted += kci_test(x, y, z, {}).p_value > 0.05;
  }
  EXPECT_GE(accepted, 270u);
}

TEST(Kci, ColliderInducesDependence) {
  std::size_t rejected = 0;
  for (std::uint64_t t = 0; t < 50; ++t) {
    Rng rng(derive_seed(4000, t));
    const auto x = normals(500, rng), y = normals(500, rng);
    const Eigen::VectorXd z = x + y + normals(500, rng, 0.3);
    rejected += kci_test(x, y, z, {}).p_value < 0.05;
  }
  EXPECT_GE(rejected, 40u);
}

TEST(Kci, ForkSeparatesMarginalAndConditional) {
  std::size_t cond_accept = 0, marg_reject = 0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    Rng rng(derive_seed(5000, t));
    const auto z = normals(500, rng);
    const Eigen::VectorXd x = z + normals(500, rng, 0.7);
    const Eigen::VectorXd y = z + normals(500, rng, 0.7);
    cond_accept += kci_test(x, y, z, {}).p_value > 0.05;
    marg_reject += hsic_test(x, y, {}).p_value < 0.05;
  }
  EXPECT_GE(cond_accept, 16u);
  EXPECT_EQ(marg_reject, 20u);
}

TEST(Kci, ConstantConditioningFallsBackToHsic) {
  Rng rng(7);
  const auto x = normals(120, rng), y = normals(120, rng);
  const Eigen::MatrixXd z = Eigen::MatrixXd::Constant(120, 1, 2.0);
  const auto a = kci_test(x, y, z, {}), b = hsic_test(x, y, {});
  EXPECT_EQ(a.statistic, b.statistic);
  EXPECT_EQ(a.p_value, b.p_value);
}

TEST(Kci, RejectsEmptyConditioningSet) {
  Rng rng(8);
  const auto x = normals(60, rng), y = normals(60, rng);
  EXPECT_THROW(kci_test(x, y, Eigen::MatrixXd(60, 0), {}), InvalidArgument);
  EXPECT_THROW(kci_test(x, y, Eigen::MatrixXd::Zero(59, 1), {}), InvalidArgument);
}

TEST(Kci, ResultsLieInRange) {
  Rng rng(9);
  const auto x = normals(150, rng), y = normals(150, rng), z = normals(150, rng);
  for (const NullMethod m : {NullMethod{GammaApprox{}}, NullMethod{Permutation{200}}}) {
    KciConfig cfg;
    cfg.null_method = m;
    const auto r = kci_test(x, y, z, cfg);
    EXPECT_GE(r.statistic, 0.0);
    EXPECT_GE(r.p_value, 0.0);
    EXPECT_LE(r.p_value, 1.0);
  }
}
