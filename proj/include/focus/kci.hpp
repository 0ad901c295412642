#pragma once

// Kernel independence tests: HSIC for X _||_ Y and KCI for X _||_ Y | Z.
//
// Both statistics are (1/n) tr(A B) for centered (and, for KCI, Z-residualized)
// Gram matrices A and B. Under the null the statistic behaves like a weighted
// sum of chi-square(1) variables; GammaApprox matches a gamma law to the mean
// and variance of that sum, Permutation builds the empirical null directly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "focus/common.hpp"

namespace focus {

struct MedianHeuristic {};
struct FixedBandwidth {
  double value = 1.0;
};
/// Width shrinking with sample size and growing with sqrt(dimension):
/// b = w(n) sqrt(dim), w = 1.2 below 200 rows, 0.7 below 1200, else 0.4.
struct SampleSizeWidth {};
using BandwidthRule = std::variant<MedianHeuristic, FixedBandwidth, SampleSizeWidth>;

struct GammaApprox {};
struct Permutation {
  int count = 1000;
};
using NullMethod = std::variant<GammaApprox, Permutation>;

enum class NullKind { GammaApprox, Permutation };

struct KciConfig {
  std::size_t max_test_samples = 1000;
  BandwidthRule bandwidth = MedianHeuristic{};
  /// Kernel width on the conditioning set Z, which sets how flexible the
  /// kernel ridge regression on Z is.
  BandwidthRule conditioning_bandwidth = MedianHeuristic{};
  /// Relative to the mean diagonal of the centered conditioning kernel.
  double ridge_epsilon = 1e-3;
  NullMethod null_method = GammaApprox{};
  std::uint64_t seed = 0;

  void validate() const {
    if (max_test_samples < 50) throw InvalidArgument("KciConfig.max_test_samples must be >= 50");
    if (!(ridge_epsilon > 0.0)) throw InvalidArgument("KciConfig.ridge_epsilon must be > 0");
    for (const auto* rule : {&bandwidth, &conditioning_bandwidth})
      if (const auto* fb = std::get_if<FixedBandwidth>(rule); fb && !(fb->value > 0.0))
        throw InvalidArgument("fixed kernel bandwidth must be > 0");
    if (const auto* perm = std::get_if<Permutation>(&null_method); perm && perm->count < 100)
      throw InvalidArgument("Permutation null needs count >= 100");
  }
};

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_used = 0;
  NullKind method = NullKind::GammaApprox;
  /// Set when an input column was constant; p_value is then defined as 1.
  bool degenerate = false;
};

inline NullKind null_kind(const NullMethod& m) {
  return std::holds_alternative<GammaApprox>(m) ? NullKind::GammaApprox : NullKind::Permutation;
}

/// Gaussian RBF Gram matrix, K_ij = exp(-|x_i - x_j|^2 / (2 b^2)).
inline Eigen::MatrixXd gram_matrix(const Eigen::Ref<const Eigen::MatrixXd>& x, double bandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw InvalidArgument("kernel bandwidth must be > 0");
  if (x.rows() < 2) throw InvalidArgument("gram_matrix needs at least two points");
  if (!x.allFinite()) throw InvalidArgument("gram_matrix input contains non-finite values");
  const Eigen::Index n = x.rows();
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Eigen::MatrixXd k = x * x.transpose();
  const double scale = -1.0 / (2.0 * bandwidth * bandwidth);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d2 = std::max(0.0, sq(i) + sq(j) - 2.0 * k(i, j));
      k(i, j) = std::exp(scale * d2);
    }
    k(j, j) = 1.0;
  }
  // Symmetrize away rounding from the norm expansion.
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i) k(j, i) = k(i, j);
  return k;
}

/// Median Euclidean distance over all distinct pairs of rows.
inline double median_pairwise_distance(const Eigen::Ref<const Eigen::MatrixXd>& x) {
  const Eigen::Index n = x.rows();
  std::vector<double> d;
  d.reserve(std::size_t(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((x.row(i) - x.row(j)).norm());
  if (d.empty()) return 1.0;
  auto mid = d.begin() + std::ptrdiff_t(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (!(med > 0.0)) {
    // Heavily tied data; fall back to the mean distance.
    med = std::accumulate(d.begin(), d.end(), 0.0) / double(d.size());
  }
  return med > 0.0 ? med : 1.0;
}

inline double resolve_bandwidth(const BandwidthRule& rule, const Eigen::Ref<const Eigen::MatrixXd>& x) {
  if (const auto* fb = std::get_if<FixedBandwidth>(&rule)) return fb->value;
  if (std::holds_alternative<SampleSizeWidth>(rule)) {
    const double w = x.rows() < 200 ? 1.2 : x.rows() < 1200 ? 0.7 : 0.4;
    return w * std::sqrt(double(x.cols()));
  }
  return median_pairwise_distance(x);
}

/// H K H with H = I - 11'/n.
inline Eigen::MatrixXd center_gram(const Eigen::MatrixXd& k) {
  const Eigen::VectorXd col_mean = k.colwise().mean().transpose();
  const double grand = col_mean.mean();
  Eigen::MatrixXd c = k;
  c.rowwise() -= col_mean.transpose();
  c.colwise() -= col_mean;
  c.array() += grand;
  return c;
}

/// Column-wise z-scores. Returns false if any column is (numerically) constant.
inline bool standardize_columns(Eigen::MatrixXd& x) {
  bool ok = true;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    auto col = x.col(c);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / double(std::max<Eigen::Index>(1, x.rows() - 1)));
    if (!(sd > 1e-12 * (1.0 + std::abs(mean)))) {
      ok = false;
      col.setZero();
    } else {
      col /= sd;
    }
  }
  return ok;
}

/// Sorted row indices of a uniform subsample of size min(n, cap).
inline std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t cap, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= cap) return idx;
  Rng rng(derive_seed(seed, 0x737562));
  // Partial Fisher-Yates: first `cap` positions become the sample.
  for (std::size_t i = 0; i < cap; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline Eigen::MatrixXd take_rows(const Eigen::Ref<const Eigen::MatrixXd>& m, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(Eigen::Index(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(Eigen::Index(k)) = m.row(Eigen::Index(rows[k]));
  return out;
}

namespace detail {

inline double gamma_upper_tail(double statistic, double mean, double var) {
  if (!(mean > 0.0) || !(var > 0.0)) return 1.0;
  const double shape = mean * mean / var;
  const double scale = var / mean;
  if (statistic <= 0.0) return 1.0;
  return std::clamp(boost::math::gamma_q(shape, statistic / scale), 0.0, 1.0);
}

/// sum_ij A_ij B_pi(i)pi(j)
inline double permuted_trace(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const std::vector<Eigen::Index>& perm) {
  const Eigen::Index n = a.rows();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index pj = perm[std::size_t(j)];
    for (Eigen::Index i = 0; i < n; ++i) acc += a(i, j) * b(perm[std::size_t(i)], pj);
  }
  return acc;
}

inline double permutation_p_value(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double raw_stat, int count,
                                  std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x7065726d));
  std::vector<Eigen::Index> perm(std::size_t(a.rows()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  int exceed = 0;
  const double tol = 1e-12 * std::abs(raw_stat);
  for (int b_i = 0; b_i < count; ++b_i) {
    std::shuffle(perm.begin(), perm.end(), rng);
    if (permuted_trace(a, b, perm) >= raw_stat - tol) ++exceed;
  }
  return double(exceed + 1) / double(count + 1);
}

}  // namespace detail

/// Test result from two already centered (and, if conditional, residualized)
/// kernel matrices. The null moments use tr(A o B) and |A o B|_F^2, the sum and
/// squared sum of the null's chi-square weights.
inline TestResult test_from_kernels(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, bool conditional,
                                    const NullMethod& null_method, std::uint64_t seed) {
  const Eigen::Index n = a.rows();
  const double nd = double(n);
  TestResult res;
  res.n_used = std::size_t(n);
  res.method = null_kind(null_method);
  const double raw = a.cwiseProduct(b).sum();
  res.statistic = std::max(0.0, raw / nd);
  if (std::holds_alternative<Permutation>(null_method)) {
    res.p_value = detail::permutation_p_value(a, b, raw, std::get<Permutation>(null_method).count, seed);
    return res;
  }
  double mean = 0.0, var = 0.0;
  if (conditional) {
    mean = a.diagonal().dot(b.diagonal()) / nd;
    var = 2.0 * a.cwiseProduct(b).squaredNorm() / (nd * nd);
  } else {
    mean = a.trace() * b.trace() / (nd * nd);
    var = 2.0 * a.squaredNorm() * b.squaredNorm() / (nd * nd * nd * nd);
  }
  res.p_value = detail::gamma_upper_tail(res.statistic, mean, var);
  return res;
}

inline TestResult degenerate_result(std::size_t n, const NullMethod& m) {
  TestResult r;
  r.n_used = n;
  r.method = null_kind(m);
  r.degenerate = true;
  return r;
}

/// Centered Gram matrix of standardized data; returns false on a constant column.
inline bool centered_kernel(Eigen::MatrixXd data, const BandwidthRule& rule, Eigen::MatrixXd& out) {
  if (!standardize_columns(data)) return false;
  out = center_gram(gram_matrix(data, resolve_bandwidth(rule, data)));
  return true;
}

/// Kernel ridge residualization on Z: R = eps (K_z + eps I)^{-1}, applied as R K R.
class ConditioningKernel {
 public:
  /// `z` must already be standardized.
  ConditioningKernel(const Eigen::Ref<const Eigen::MatrixXd>& z, const KciConfig& cfg) {
    const Eigen::MatrixXd kz = center_gram(gram_matrix(z, resolve_bandwidth(cfg.conditioning_bandwidth, z)));
    const Eigen::Index n = kz.rows();
    double eps = cfg.ridge_epsilon * std::max(kz.diagonal().mean(), 1e-12);
    for (int attempt = 0; attempt < 2; ++attempt, eps *= 10.0) {
      Eigen::MatrixXd sys = kz;
      sys.diagonal().array() += eps;
      Eigen::LLT<Eigen::MatrixXd> llt(sys);
      if (llt.info() != Eigen::Success) continue;
      r_ = eps * llt.solve(Eigen::MatrixXd::Identity(n, n));
      if (!r_.allFinite()) continue;
      r_ = 0.5 * (r_ + r_.transpose()).eval();
      epsilon_ = eps;
      return;
    }
    throw NumericalError("conditioning kernel system is rank deficient even after raising epsilon");
  }

  Eigen::MatrixXd residualize(const Eigen::MatrixXd& centered) const {
    Eigen::MatrixXd tmp;
    tmp.noalias() = r_ * centered;
    Eigen::MatrixXd out;
    out.noalias() = tmp * r_;
    return 0.5 * (out + out.transpose());
  }

  double epsilon() const { return epsilon_; }
  const Eigen::MatrixXd& residual_operator() const { return r_; }

 private:
  Eigen::MatrixXd r_;
  double epsilon_ = 0.0;
};

namespace detail {
inline void check_pair(Eigen::Index nx, Eigen::Index ny, const char* op) {
  if (nx != ny) throw InvalidArgument(std::string(op) + ": inputs differ in length");
  if (nx < 50) throw InvalidArgument(std::string(op) + ": needs at least 50 samples");
}
}  // namespace detail

inline TestResult hsic_test(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                            const KciConfig& cfg) {
  cfg.validate();
  detail::check_pair(x.size(), y.size(), "hsic_test");
  const auto rows = subsample_indices(std::size_t(x.size()), cfg.max_test_samples, cfg.seed);
  const Eigen::MatrixXd xs = take_rows(x, rows), ys = take_rows(y, rows);
  Eigen::MatrixXd kx, ky;
  if (!centered_kernel(xs, cfg.bandwidth, kx) || !centered_kernel(ys, cfg.bandwidth, ky))
    return degenerate_result(rows.size(), cfg.null_method);
  return test_from_kernels(kx, ky, false, cfg.null_method, cfg.seed);
}

/// Conditional test. X is augmented with Z/2 before residualization.
inline TestResult kci_test(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                           const Eigen::Ref<const Eigen::MatrixXd>& z, const KciConfig& cfg) {
  cfg.validate();
  detail::check_pair(x.size(), y.size(), "kci_test");
  if (z.rows() != x.size()) throw InvalidArgument("kci_test: conditioning set length differs");
  if (z.cols() < 1) throw InvalidArgument("kci_test: empty conditioning set; use hsic_test");
  const auto rows = subsample_indices(std::size_t(x.size()), cfg.max_test_samples, cfg.seed);
  Eigen::MatrixXd xs = take_rows(x, rows), ys = take_rows(y, rows), zs = take_rows(z, rows);
  if (!standardize_columns(xs) || !standardize_columns(ys)) return degenerate_result(rows.size(), cfg.null_method);
  // Constant conditioning columns carry no information; drop them.
  standardize_columns(zs);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < zs.cols(); ++c)
    if (zs.col(c).squaredNorm() > 0.0) keep.push_back(c);
  if (keep.empty()) {
    KciConfig uncond = cfg;
    return hsic_test(x, y, uncond);
  }
  Eigen::MatrixXd zk(zs.rows(), Eigen::Index(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) zk.col(Eigen::Index(k)) = zs.col(keep[k]);

  const ConditioningKernel cond(zk, cfg);
  Eigen::MatrixXd xz(xs.rows(), 1 + zk.cols());
  xz << xs, 0.5 * zk;
  const Eigen::MatrixXd kx = center_gram(gram_matrix(xz, resolve_bandwidth(cfg.bandwidth, xz)));
  const Eigen::MatrixXd ky = center_gram(gram_matrix(ys, resolve_bandwidth(cfg.bandwidth, ys)));
  return test_from_kernels(cond.residualize(kx), cond.residualize(ky), true, cfg.null_method, cfg.seed);
}

}  // namespace focus
