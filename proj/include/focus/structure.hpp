#pragma once

// Causal structure learning over one transition step: a p-value for every
// (time-t input, time-t+1 target) pair, a shared gap threshold, and the mask.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "focus/common.hpp"
#include "focus/data.hpp"
#include "focus/kci.hpp"

namespace focus {

enum class ConditioningRule { FocusRule, AllVariables, NoConditioning };
enum class CiTest { Kci, Linear };

inline std::string to_string(ConditioningRule r) {
  switch (r) {
    case ConditioningRule::FocusRule: return "focus";
    case ConditioningRule::AllVariables: return "all-variables";
    case ConditioningRule::NoConditioning: return "none";
  }
  return "focus";
}

inline ConditioningRule conditioning_rule_from_string(const std::string& s) {
  if (s == "focus") return ConditioningRule::FocusRule;
  if (s == "all-variables" || s == "all") return ConditioningRule::AllVariables;
  if (s == "none") return ConditioningRule::NoConditioning;
  throw InvalidArgument("unknown conditioning rule '" + s + "' (expected focus|all|none)");
}

inline std::string to_string(CiTest t) { return t == CiTest::Kci ? "kci" : "linear"; }

inline CiTest ci_test_from_string(const std::string& s) {
  if (s == "kci") return CiTest::Kci;
  if (s == "linear") return CiTest::Linear;
  throw InvalidArgument("unknown independence test '" + s + "' (expected kci|linear)");
}

struct LinearTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_used = 0;
  /// Residual covariance was singular; p_value is then 1.
  bool singular = false;
};

/// Partial-correlation test with Fisher's z transform. An empty Z gives the
/// plain correlation test.
inline LinearTestResult linear_ci_test(const Eigen::Ref<const Eigen::VectorXd>& x,
                                       const Eigen::Ref<const Eigen::VectorXd>& y,
                                       const Eigen::Ref<const Eigen::MatrixXd>& z) {
  const Eigen::Index n = x.size();
  if (y.size() != n || z.rows() != n) throw InvalidArgument("linear_ci_test: inputs differ in length");
  LinearTestResult res;
  res.n_used = std::size_t(n);
  const Eigen::Index dof = n - z.cols() - 3;
  if (dof < 1) throw InvalidArgument("linear_ci_test: too few samples for the conditioning set");
  Eigen::MatrixXd design(n, z.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(z.cols()) = z;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  const Eigen::VectorXd rx = x - design * qr.solve(x);
  const Eigen::VectorXd ry = y - design * qr.solve(y);
  const double sxx = rx.squaredNorm(), syy = ry.squaredNorm();
  const double scale = std::max({x.squaredNorm(), y.squaredNorm(), 1.0});
  if (sxx <= 1e-20 * scale || syy <= 1e-20 * scale) {
    res.singular = true;
    return res;
  }
  const double r = std::clamp(rx.dot(ry) / std::sqrt(sxx * syy), -1.0 + 1e-15, 1.0 - 1e-15);
  res.statistic = std::atanh(r) * std::sqrt(double(dof));
  const boost::math::normal_distribution<double> std_normal;
  res.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(std_normal, std::abs(res.statistic))));
  return res;
}

/// KCI settings used for structure learning: a narrower kernel on the
/// conditioning set and a larger ridge than the bare test defaults.
inline KciConfig structure_kci_defaults() {
  KciConfig k;
  k.conditioning_bandwidth = SampleSizeWidth{};
  k.ridge_epsilon = 1e-2;
  return k;
}

struct StructureConfig {
  ConditioningRule rule = ConditioningRule::FocusRule;
  CiTest test = CiTest::Kci;
  KciConfig kci = structure_kci_defaults();
};

namespace detail {

/// All inputs (columns 0..n_in-1) followed by all targets.
inline Eigen::MatrixXd joint_columns(const TransitionDataset& ds, const std::vector<std::size_t>& rows) {
  const Eigen::MatrixXd in = ds.inputs(), out = ds.targets();
  Eigen::MatrixXd all(Eigen::Index(rows.size()), in.cols() + out.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    all.row(Eigen::Index(r)) << in.row(Eigen::Index(rows[r])), out.row(Eigen::Index(rows[r]));
  }
  return all;
}

inline Eigen::MatrixXd pick_columns(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(m.rows(), Eigen::Index(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(Eigen::Index(k)) = m.col(cols[k]);
  return out;
}

/// Column indices (into joint_columns) of the conditioning set for (i, j).
inline std::vector<Eigen::Index> conditioning_set(ConditioningRule rule, std::size_t n_in, std::size_t n_out,
                                                  std::size_t i, std::size_t j) {
  std::vector<Eigen::Index> z;
  if (rule == ConditioningRule::NoConditioning) return z;
  for (std::size_t k = 0; k < n_in; ++k)
    if (k != i) z.push_back(Eigen::Index(k));
  if (rule == ConditioningRule::AllVariables)
    for (std::size_t k = 0; k < n_out; ++k)
      if (k != j) z.push_back(Eigen::Index(n_in + k));
  return z;
}

/// Standardizes in place and removes constant columns.
inline Eigen::MatrixXd informative_columns(Eigen::MatrixXd z) {
  standardize_columns(z);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < z.cols(); ++c)
    if (z.col(c).squaredNorm() > 0.0) keep.push_back(c);
  return pick_columns(z, keep);
}

inline PValueMatrix linear_pvalue_matrix(const TransitionDataset& ds, const StructureConfig& cfg,
                                         const Eigen::MatrixXd& all) {
  const auto& schema = ds.schema();
  const std::size_t n_in = schema.n_inputs(), n_out = schema.n_targets();
  Eigen::MatrixXd p(static_cast<Eigen::Index>(n_in), static_cast<Eigen::Index>(n_out));
  parallel_for(n_in * n_out, [&](std::size_t cell) {
    const std::size_t i = cell / n_out, j = cell % n_out;
    const auto zc = conditioning_set(cfg.rule, n_in, n_out, i, j);
    const auto r = linear_ci_test(all.col(Eigen::Index(i)), all.col(Eigen::Index(n_in + j)), pick_columns(all, zc));
    p(Eigen::Index(i), Eigen::Index(j)) = r.p_value;
  });
  return PValueMatrix(schema, std::move(p));
}

}  // namespace detail

/// p-value for every (input i, target j) pair. All tests share one row
/// subsample of at most cfg.kci.max_test_samples rows, which lets the centered
/// target kernels and (under FocusRule) the per-source residualization be
/// computed once and reused.
inline PValueMatrix build_pvalue_matrix(const TransitionDataset& ds, const StructureConfig& cfg) {
  cfg.kci.validate();
  const auto& schema = ds.schema();
  const std::size_t n_in = schema.n_inputs(), n_out = schema.n_targets();
  const std::size_t cap = cfg.test == CiTest::Linear ? ds.size() : cfg.kci.max_test_samples;
  const auto rows = subsample_indices(ds.size(), cap, cfg.kci.seed);
  if (rows.size() < 50) throw InvalidArgument("build_pvalue_matrix: needs at least 50 transitions");
  const Eigen::MatrixXd all = detail::joint_columns(ds, rows);
  if (cfg.test == CiTest::Linear) return detail::linear_pvalue_matrix(ds, cfg, all);

  const std::size_t n_cols = n_in + n_out;
  std::vector<Eigen::MatrixXd> std_cols(n_cols);
  std::vector<char> constant(n_cols, 0);
  for (std::size_t c = 0; c < n_cols; ++c) {
    std_cols[c] = all.col(Eigen::Index(c));
    constant[c] = standardize_columns(std_cols[c]) ? 0 : 1;
  }
  // Centered kernels of the targets, shared by every source.
  std::vector<Eigen::MatrixXd> target_kernel(n_out);
  parallel_for(n_out, [&](std::size_t j) {
    if (!constant[n_in + j])
      target_kernel[j] = center_gram(gram_matrix(std_cols[n_in + j], resolve_bandwidth(cfg.kci.bandwidth, std_cols[n_in + j])));
  });

  Eigen::MatrixXd p = Eigen::MatrixXd::Ones(Eigen::Index(n_in), Eigen::Index(n_out));
  auto cell_error = [&](std::size_t i, std::size_t j, const std::exception& e) {
    return NumericalError("test " + schema.input_name(i) + " -> " + schema.target_name(j) + " failed: " + e.what());
  };

  // Tests whose conditioning set does not depend on the target.
  auto run_source = [&](std::size_t i) {
    if (constant[i]) return;
    const auto zc = detail::conditioning_set(cfg.rule, n_in, n_out, i, 0);
    const Eigen::MatrixXd z = zc.empty() ? Eigen::MatrixXd() : detail::informative_columns(detail::pick_columns(all, zc));
    if (z.cols() == 0) {
      Eigen::MatrixXd kx = center_gram(gram_matrix(std_cols[i], resolve_bandwidth(cfg.kci.bandwidth, std_cols[i])));
      for (std::size_t j = 0; j < n_out; ++j)
        if (!constant[n_in + j])
          p(Eigen::Index(i), Eigen::Index(j)) =
              test_from_kernels(kx, target_kernel[j], false, cfg.kci.null_method, derive_seed(cfg.kci.seed, i, j)).p_value;
      return;
    }
    std::optional<ConditioningKernel> cond;
    try {
      cond.emplace(z, cfg.kci);
    } catch (const std::exception& e) {
      throw cell_error(i, 0, e);
    }
    Eigen::MatrixXd xz(z.rows(), 1 + z.cols());
    xz << std_cols[i], 0.5 * z;
    const Eigen::MatrixXd kx = cond->residualize(center_gram(gram_matrix(xz, resolve_bandwidth(cfg.kci.bandwidth, xz))));
    for (std::size_t j = 0; j < n_out; ++j) {
      if (constant[n_in + j]) continue;
      p(Eigen::Index(i), Eigen::Index(j)) =
          test_from_kernels(kx, cond->residualize(target_kernel[j]), true, cfg.kci.null_method, derive_seed(cfg.kci.seed, i, j))
              .p_value;
    }
  };

  auto run_cell = [&](std::size_t i, std::size_t j) {
    if (constant[i] || constant[n_in + j]) return;
    const auto zc = detail::conditioning_set(cfg.rule, n_in, n_out, i, j);
    const Eigen::MatrixXd z = detail::informative_columns(detail::pick_columns(all, zc));
    try {
      if (z.cols() == 0) {
        const Eigen::MatrixXd kx = center_gram(gram_matrix(std_cols[i], resolve_bandwidth(cfg.kci.bandwidth, std_cols[i])));
        p(Eigen::Index(i), Eigen::Index(j)) =
            test_from_kernels(kx, target_kernel[j], false, cfg.kci.null_method, derive_seed(cfg.kci.seed, i, j)).p_value;
        return;
      }
      const ConditioningKernel cond(z, cfg.kci);
      Eigen::MatrixXd xz(z.rows(), 1 + z.cols());
      xz << std_cols[i], 0.5 * z;
      const Eigen::MatrixXd kx = center_gram(gram_matrix(xz, resolve_bandwidth(cfg.kci.bandwidth, xz)));
      p(Eigen::Index(i), Eigen::Index(j)) =
          test_from_kernels(cond.residualize(kx), cond.residualize(target_kernel[j]), true, cfg.kci.null_method,
                            derive_seed(cfg.kci.seed, i, j))
              .p_value;
    } catch (const std::exception& e) {
      throw cell_error(i, j, e);
    }
  };

  if (cfg.rule == ConditioningRule::AllVariables)
    parallel_for(n_in * n_out, [&](std::size_t cell) { run_cell(cell / n_out, cell % n_out); });
  else
    parallel_for(n_in, run_source);
  return PValueMatrix(schema, std::move(p));
}

struct ThresholdReport {
  std::vector<double> sorted_p;
  std::size_t chosen_index = 0;  // 0-based into sorted_p
  double p_star = 0.0;
  std::vector<double> gap_scores;
};

/// Gap rule: with p_1 <= ... <= p_n, pick p_i maximizing p_{i+1}/(i+1) - p_i/i.
inline ThresholdReport select_threshold(const std::vector<double>& values) {
  if (values.size() < 2) throw InvalidArgument("select_threshold needs at least two p-values");
  ThresholdReport rep;
  rep.sorted_p = values;
  std::sort(rep.sorted_p.begin(), rep.sorted_p.end());
  if (rep.sorted_p.front() == rep.sorted_p.back())
    throw InvalidArgument("all p-values are identical; no gap to threshold on, set p* manually");
  const std::size_t n = rep.sorted_p.size();
  rep.gap_scores.resize(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    rep.gap_scores[k] = rep.sorted_p[k + 1] / double(k + 2) - rep.sorted_p[k] / double(k + 1);
    if (rep.gap_scores[k] > rep.gap_scores[rep.chosen_index]) rep.chosen_index = k;
  }
  rep.p_star = rep.sorted_p[rep.chosen_index];
  return rep;
}

inline ThresholdReport select_threshold(const PValueMatrix& p) {
  const auto& v = p.values();
  return select_threshold(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Json threshold_to_json(const ThresholdReport& r) {
  return Json{{"p_star", r.p_star}, {"chosen_index", r.chosen_index}, {"sorted_p", r.sorted_p}, {"gap_scores", r.gap_scores}};
}

inline ThresholdReport threshold_from_json(const Json& j) {
  ThresholdReport r;
  r.p_star = j.at("p_star").get<double>();
  r.chosen_index = j.at("chosen_index").get<std::size_t>();
  r.sorted_p = j.at("sorted_p").get<std::vector<double>>();
  r.gap_scores = j.at("gap_scores").get<std::vector<double>>();
  return r;
}

/// mask(i,j) = 1 iff p(i,j) <= p_star.
inline CausalGraph graph_from_pvalues(const PValueMatrix& p, double p_star) {
  if (!(p_star > 0.0 && p_star < 1.0)) throw InvalidArgument("p_star must lie in (0,1)");
  const auto& v = p.values();
  CausalGraph::Mask mask = (v.array() <= p_star).cast<std::uint8_t>();
  return CausalGraph(p.schema(), std::move(mask));
}

struct StructureScore {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline StructureScore structure_accuracy(const CausalGraph& learned, const CausalGraph& truth) {
  const auto& a = learned.mask();
  const auto& b = truth.mask();
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("structure_accuracy: graph shapes differ");
  std::size_t match = 0, tp = 0, fp = 0, fn = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const bool x = a(i, j) != 0, y = b(i, j) != 0;
      match += x == y;
      tp += x && y;
      fp += x && !y;
      fn += !x && y;
    }
  StructureScore s;
  s.accuracy = double(match) / double(a.size());
  s.precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 1.0;
  s.recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 1.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

struct LearnedStructure {
  PValueMatrix pvalues;
  ThresholdReport threshold;
  CausalGraph graph;
};

inline LearnedStructure learn_structure(const TransitionDataset& ds, const StructureConfig& cfg) {
  auto p = build_pvalue_matrix(ds, cfg);
  auto thr = select_threshold(p);
  auto g = graph_from_pvalues(p, std::clamp(thr.p_star, 1e-300, std::nextafter(1.0, 0.0)));
  return {std::move(p), std::move(thr), std::move(g)};
}

namespace detail {

// Bandwidth rules serialize as "median", "sample-size" or a fixed number.
inline Json bandwidth_to_json(const BandwidthRule& r) {
  if (std::holds_alternative<MedianHeuristic>(r)) return "median";
  if (std::holds_alternative<SampleSizeWidth>(r)) return "sample-size";
  return std::get<FixedBandwidth>(r).value;
}

inline BandwidthRule bandwidth_from_json(const Json& j) {
  if (j.is_number()) return FixedBandwidth{j.get<double>()};
  const auto s = j.get<std::string>();
  if (s == "median") return MedianHeuristic{};
  if (s == "sample-size") return SampleSizeWidth{};
  throw InvalidArgument("unknown bandwidth rule '" + s + "' (expected median|sample-size|<number>)");
}

}  // namespace detail

inline Json kci_config_to_json(const KciConfig& k) {
  Json j{{"max_test_samples", k.max_test_samples},
         {"bandwidth", detail::bandwidth_to_json(k.bandwidth)},
         {"conditioning_bandwidth", detail::bandwidth_to_json(k.conditioning_bandwidth)},
         {"ridge_epsilon", k.ridge_epsilon},
         {"seed", k.seed}};
  if (const auto* p = std::get_if<Permutation>(&k.null_method))
    j["null_method"] = Json{{"permutation", p->count}};
  else
    j["null_method"] = "gamma";
  return j;
}

inline KciConfig kci_config_from_json(const Json& j, KciConfig k = {}) {
  k.max_test_samples = j.value("max_test_samples", k.max_test_samples);
  if (j.contains("bandwidth")) k.bandwidth = detail::bandwidth_from_json(j.at("bandwidth"));
  if (j.contains("conditioning_bandwidth")) k.conditioning_bandwidth = detail::bandwidth_from_json(j.at("conditioning_bandwidth"));
  k.ridge_epsilon = j.value("ridge_epsilon", k.ridge_epsilon);
  k.seed = j.value("seed", k.seed);
  if (j.contains("null_method")) {
    const auto& n = j.at("null_method");
    if (n.is_object())
      k.null_method = Permutation{n.at("permutation").get<int>()};
    else if (n.get<std::string>() == "gamma")
      k.null_method = GammaApprox{};
    else
      throw InvalidArgument("unknown null method (expected \"gamma\" or {\"permutation\": count})");
  }
  k.validate();
  return k;
}

inline Json structure_config_to_json(const StructureConfig& c) {
  return Json{{"rule", to_string(c.rule)}, {"test", to_string(c.test)}, {"kci", kci_config_to_json(c.kci)}};
}

inline StructureConfig structure_config_from_json(const Json& j) {
  StructureConfig c;
  c.rule = conditioning_rule_from_string(j.value("rule", to_string(c.rule)));
  c.test = ci_test_from_string(j.value("test", to_string(c.test)));
  if (j.contains("kci")) c.kci = kci_config_from_json(j.at("kci"), c.kci);
  return c;
}

}  // namespace focus
