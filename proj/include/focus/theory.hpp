#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "focus/common.hpp"
#include "focus/data.hpp"
#include "focus/world_model.hpp"

namespace focus::theory {

/// Scalar linear model y = beta* x_cau + eps_cau where, in the biased training
/// distribution, x_spu = gamma_spu x_cau + eps_spu.
struct SpuriousSpec {
  double beta_star = 1.0;
  double gamma_spu = 1.0;
  double sigma_cau_sq = 1.0;
  double sigma_spu_sq = 0.25;
  double sigma_noise_sq = 0.0;
  std::size_t n_samples = 100000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(sigma_cau_sq > 0.0)) throw InvalidArgument("SpuriousSpec.sigma_cau_sq must be > 0");
    if (!(sigma_spu_sq >= 0.0)) throw InvalidArgument("SpuriousSpec.sigma_spu_sq must be >= 0");
    if (!(sigma_noise_sq >= 0.0)) throw InvalidArgument("SpuriousSpec.sigma_noise_sq must be >= 0");
    if (n_samples < 100) throw InvalidArgument("SpuriousSpec.n_samples must be >= 100");
    if (!std::isfinite(beta_star) || !std::isfinite(gamma_spu)) throw InvalidArgument("SpuriousSpec coefficients must be finite");
  }
};

inline Json spec_to_json(const SpuriousSpec& s) {
  return Json{{"beta_star", s.beta_star},         {"gamma_spu", s.gamma_spu},
              {"sigma_cau_sq", s.sigma_cau_sq},   {"sigma_spu_sq", s.sigma_spu_sq},
              {"sigma_noise_sq", s.sigma_noise_sq}, {"n_samples", s.n_samples},
              {"seed", s.seed}};
}

struct BoundReport {
  double empirical_value = 0.0;
  double bound_value = 0.0;
  bool satisfied = false;
  double margin = 0.0;
};

/// Builds a report with the numerical slack 1e-9 + 1e-6 |bound| plus any
/// caller-supplied Monte-Carlo slack.
inline BoundReport make_bound_report(double empirical, double bound, double mc_slack = 0.0) {
  BoundReport r;
  r.empirical_value = empirical;
  r.bound_value = bound;
  r.margin = bound - empirical;
  r.satisfied = empirical <= bound + 1e-9 + 1e-6 * std::abs(bound) + mc_slack;
  return r;
}

inline Json bound_to_json(const BoundReport& b) {
  return Json{{"empirical", b.empirical_value}, {"bound", b.bound_value}, {"satisfied", b.satisfied}, {"margin", b.margin}};
}

struct SpuriousData {
  Eigen::MatrixXd x;  // columns: x_cau, x_spu
  Eigen::VectorXd y;
};

namespace detail {

/// Normal draw, resampled while |value| > limit (limit <= 0 disables).
inline double truncated_normal(Rng& rng, double sd, double limit) {
  std::normal_distribution<double> nd(0.0, 1.0);
  for (;;) {
    const double v = sd * nd(rng);
    if (limit <= 0.0 || std::abs(v) <= limit) return v;
  }
}

inline double spu_marginal_sd(const SpuriousSpec& s) {
  return std::sqrt(s.gamma_spu * s.gamma_spu * s.sigma_cau_sq + s.sigma_spu_sq);
}

}  // namespace detail

/// Largest coordinate magnitude allowed when sampling is truncated at three
/// marginal standard deviations.
inline double truncation_limit(const SpuriousSpec& s) {
  return 3.0 * std::max(std::sqrt(s.sigma_cau_sq), detail::spu_marginal_sd(s));
}

/// Training data (correlated) has x_spu = gamma x_cau + eps_spu. Test data
/// draws x_spu independently with the same marginal variance. With truncate
/// set, every coordinate is bounded by truncation_limit and eps_cau by three
/// of its standard deviations.
inline SpuriousData generate_spurious_data(const SpuriousSpec& spec, bool correlated, bool truncate = false) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n_samples);
  SpuriousData d{Eigen::MatrixXd(n, 2), Eigen::VectorXd(n)};
  Rng rng(derive_seed(spec.seed, correlated ? 1 : 2));
  const double x_max = truncate ? truncation_limit(spec) : 0.0;
  const double sd_c = std::sqrt(spec.sigma_cau_sq), sd_s = std::sqrt(spec.sigma_spu_sq);
  const double sd_n = std::sqrt(spec.sigma_noise_sq);
  for (Eigen::Index i = 0; i < n; ++i) {
    double xc, xs;
    for (;;) {
      xc = detail::truncated_normal(rng, sd_c, x_max);
      xs = correlated ? spec.gamma_spu * xc + (sd_s > 0.0 ? detail::truncated_normal(rng, sd_s, 0.0) : 0.0)
                      : detail::truncated_normal(rng, detail::spu_marginal_sd(spec), x_max);
      if (!truncate || std::abs(xs) <= x_max) break;
    }
    const double eps = sd_n > 0.0 ? detail::truncated_normal(rng, sd_n, truncate ? 3.0 * sd_n : 0.0) : 0.0;
    d.x(i, 0) = xc;
    d.x(i, 1) = xs;
    d.y(i) = spec.beta_star * xc + eps;
  }
  return d;
}

/// Closed-form leakage onto the spurious input under ridge regression with the
/// Hoerl-Kennard coefficient.
inline double lambda_formula(const SpuriousSpec& s) {
  if (s.beta_star == 0.0) throw InvalidArgument("lambda_formula: beta_star must be non-zero");
  if (!(s.sigma_cau_sq > 0.0)) throw InvalidArgument("lambda_formula: sigma_cau_sq must be > 0");
  const double b2 = s.beta_star * s.beta_star;
  const double ratio = s.sigma_spu_sq / s.sigma_cau_sq;
  return s.beta_star * s.gamma_spu / (b2 + s.gamma_spu * s.gamma_spu + 1.0 + ratio * (1.0 + 1.0 / b2));
}

/// Ridge fit of the sample objective mean((X b - y)^2) + k |b|^2, i.e. the
/// normal equations (X'X + kN I) b = X'y.
inline RidgeSolution population_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double k) {
  return ridge_fit(x, y, k * static_cast<double>(x.rows()));
}

struct LambdaCheck {
  double lambda_formula = 0.0;
  double lambda_empirical = 0.0;
  double relative_error = 0.0;
  double k = 0.0;
  RidgeSolution fit;
};

/// Fits ridge with the Hoerl-Kennard k on correlated data and compares the
/// coefficient on x_spu with lambda_formula.
inline LambdaCheck verify_lambda_lemma(const SpuriousSpec& spec) {
  spec.validate();
  if (!(spec.sigma_spu_sq > 0.0)) throw InvalidArgument("verify_lambda_lemma: sigma_spu_sq must be > 0");
  const SpuriousData d = generate_spurious_data(spec, true);
  LambdaCheck c;
  c.k = hoerl_kennard_k(spec.beta_star, spec.sigma_spu_sq);
  c.fit = population_ridge(d.x, d.y, c.k);
  c.lambda_formula = lambda_formula(spec);
  c.lambda_empirical = c.fit.beta(1);
  const double diff = std::abs(c.lambda_empirical - c.lambda_formula);
  c.relative_error = c.lambda_formula != 0.0 ? diff / std::abs(c.lambda_formula) : diff;
  return c;
}

/// Lemma-1 candidate: (beta* - lambda gamma, lambda).
inline Eigen::Vector2d spurious_solution(const SpuriousSpec& s, double lambda) {
  return {s.beta_star - lambda * s.gamma_spu, lambda};
}

struct Lemma1Row {
  double lambda = 0.0;
  double mse_causal = 0.0;
  double mse_spurious = 0.0;
  double difference = 0.0;
};

/// Training MSE of (beta*, 0) against each Lemma-1 candidate on correlated data.
inline std::vector<Lemma1Row> verify_lemma1_equivalence(const SpuriousSpec& spec, const std::vector<double>& lambdas) {
  const SpuriousData d = generate_spurious_data(spec, true);
  const double n = static_cast<double>(d.y.size());
  const Eigen::Vector2d causal(spec.beta_star, 0.0);
  const double mse_c = (d.x * causal - d.y).squaredNorm() / n;
  std::vector<Lemma1Row> rows;
  for (double l : lambdas) {
    Lemma1Row r;
    r.lambda = l;
    r.mse_causal = mse_c;
    r.mse_spurious = (d.x * spurious_solution(spec, l) - d.y).squaredNorm() / n;
    r.difference = r.mse_spurious - r.mse_causal;
    rows.push_back(r);
  }
  return rows;
}

/// beta*, gamma uniform on [-10, 10] without zero; variances log-uniform on
/// [1e-2, 1e2].
inline SpuriousSpec random_spec(Rng& rng) {
  std::uniform_real_distribution<double> coef(-10.0, 10.0), logv(std::log(1e-2), std::log(1e2));
  SpuriousSpec s;
  do s.beta_star = coef(rng);
  while (s.beta_star == 0.0);
  do s.gamma_spu = coef(rng);
  while (s.gamma_spu == 0.0);
  s.sigma_cau_sq = std::exp(logv(rng));
  s.sigma_spu_sq = std::exp(logv(rng));
  s.sigma_noise_sq = std::exp(logv(rng));
  return s;
}

struct PropositionReport {
  std::size_t n_specs = 0;
  std::size_t violations = 0;
  double max_abs_lambda = 0.0;
};

inline PropositionReport verify_proposition_bound(std::size_t n_specs, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x9e0));
  PropositionReport r;
  r.n_specs = n_specs;
  for (std::size_t i = 0; i < n_specs; ++i) {
    const double l = std::abs(lambda_formula(random_spec(rng)));
    r.max_abs_lambda = std::max(r.max_abs_lambda, l);
    if (l > 0.5) ++r.violations;
  }
  return r;
}

/// X_max |lambda| (|gamma| + 1) + eps_c.
inline double spurious_error_bound(double x_max, double lambda, double gamma_spu, double eps_c) {
  return x_max * std::abs(lambda) * (std::abs(gamma_spu) + 1.0) + eps_c;
}

struct TheoremCheck {
  BoundReport report;
  double lambda_formula = 0.0;
  double lambda_empirical = 0.0;
  double x_max = 0.0;
  double eps_c = 0.0;
  double standard_error = 0.0;
};

/// Builds the Lemma-1 solution from the ridge-measured lambda on truncated
/// training data and measures its mean absolute error on independent test
/// data. Passes when the MAE is within the closed-form bound plus three
/// Monte-Carlo standard errors.
inline TheoremCheck verify_spurious_theorem(const SpuriousSpec& spec) {
  spec.validate();
  TheoremCheck c;
  c.x_max = truncation_limit(spec);
  c.eps_c = 3.0 * std::sqrt(spec.sigma_noise_sq);
  c.lambda_formula = spec.gamma_spu != 0.0 ? lambda_formula(spec) : 0.0;
  const SpuriousData train = generate_spurious_data(spec, true, true);
  if (spec.sigma_spu_sq > 0.0 && spec.gamma_spu != 0.0) {
    const double k = hoerl_kennard_k(spec.beta_star, spec.sigma_spu_sq);
    c.lambda_empirical = population_ridge(train.x, train.y, k).beta(1);
  } else {
    c.lambda_empirical = c.lambda_formula;
  }
  const SpuriousData test = generate_spurious_data(spec, false, true);
  const Eigen::ArrayXd err = (test.x * spurious_solution(spec, c.lambda_empirical) - test.y).array().abs();
  const double n = static_cast<double>(err.size());
  const double mae = err.mean();
  c.standard_error = std::sqrt((err - mae).square().sum() / (n - 1.0) / n);
  const double bound = spurious_error_bound(c.x_max, c.lambda_formula, spec.gamma_spu, c.eps_c);
  c.report = make_bound_report(mae, bound, 3.0 * c.standard_error);
  return c;
}

/// Three values each of beta*, gamma_spu and sigma_spu^2.
inline std::vector<SpuriousSpec> theorem_grid(std::size_t n_samples, std::uint64_t seed) {
  std::vector<SpuriousSpec> out;
  for (double b : {0.5, 1.0, 2.0})
    for (double g : {-1.0, 0.5, 2.0})
      for (double s2 : {0.01, 0.1, 1.0}) {
        SpuriousSpec s;
        s.beta_star = b;
        s.gamma_spu = g;
        s.sigma_cau_sq = 1.0;
        s.sigma_spu_sq = s2;
        s.sigma_noise_sq = 0.01;
        s.n_samples = n_samples;
        s.seed = derive_seed(seed, out.size());
        out.push_back(s);
      }
  return out;
}

inline double rl_spurious_bound(double n_s, double n_a, double r_max, double gamma, double s_max, double eps_c,
                                double eps_pi, double gamma_max, double lambda_max, double r_spu) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("rl_spurious_bound: gamma must lie in (0, 1)");
  for (double v : {n_s, n_a, r_max, s_max, eps_c, eps_pi, gamma_max, lambda_max, r_spu})
    if (!(v >= 0.0)) throw InvalidArgument("rl_spurious_bound: magnitudes must be >= 0");
  const double g2 = (1.0 - gamma) * (1.0 - gamma);
  return 2.0 * std::sqrt(2.0) * r_max / g2 * std::sqrt(eps_pi) +
         r_max * gamma / (2.0 * g2) * s_max *
             (n_s * eps_c + (1.0 + gamma_max) * lambda_max * n_s * (n_s + n_a) * r_spu);
}

/// Linear-Gaussian MDP with two state dimensions driven by one shared action:
/// s_i' = clip(rho s_i + b a + e_i), reward -min(s_1^2 + s_2^2, r_max). The
/// behaviour policy draws a ~ N(0, action_sd^2), so under its occupancy s_1
/// and s_2 are nearly collinear and each is spurious for the other's target.
struct SmallMdp {
  double rho = 0.9;
  double b = 0.5;
  double noise_sd = 0.1;
  double action_sd = 1.0;
  double s_max = 3.0;
  double r_max = 5.0;
  double gamma = 0.9;
  std::size_t train_steps = 20000;
  std::size_t episodes = 10000;
};

inline std::size_t discount_horizon(double gamma) {
  return static_cast<std::size_t>(std::ceil(std::log(1e-3) / std::log(gamma)));
}

/// Per-target linear model over (s_1, s_2, a) restricted to a mask.
struct LinearMdpModel {
  Eigen::Matrix<double, 3, 2> coef = Eigen::Matrix<double, 3, 2>::Zero();
  Eigen::Vector2d noise_sd = Eigen::Vector2d::Zero();
  Eigen::Matrix<std::uint8_t, 3, 2> mask = Eigen::Matrix<std::uint8_t, 3, 2>::Ones();
};

struct SmallMdpCheck {
  std::string construction;
  BoundReport report;
  double value_model = 0.0;
  double value_true = 0.0;
  double standard_error = 0.0;
  double eps_c = 0.0;
  double eps_pi = 0.0;
  double lambda_max = 0.0;
  double gamma_max = 0.0;
  double r_spu = 0.0;
};

namespace detail {

inline double clip_state(double v, double s_max) { return std::clamp(v, -s_max, s_max); }

inline double mdp_reward(const Eigen::Vector2d& s, double r_max) { return -std::min(s.squaredNorm(), r_max); }

/// Discounted returns of the behaviour policy under either the true dynamics
/// (model == nullptr) or a fitted linear model.
inline Eigen::VectorXd mdp_returns(const SmallMdp& m, const LinearMdpModel* model, std::uint64_t seed) {
  const std::size_t h = discount_horizon(m.gamma);
  Eigen::VectorXd out(static_cast<Eigen::Index>(m.episodes));
  parallel_for(m.episodes, [&](std::size_t ep) {
    Rng rng(derive_seed(seed, ep));
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::Vector2d s = Eigen::Vector2d::Zero();
    double ret = 0.0, disc = 1.0;
    for (std::size_t t = 0; t < h; ++t) {
      const double a = m.action_sd * nd(rng);
      Eigen::Vector2d next;
      for (int i = 0; i < 2; ++i) {
        double mean, sd;
        if (model) {
          const Eigen::Vector3d x(s(0), s(1), a);
          mean = 0.0;
          for (int j = 0; j < 3; ++j)
            if (model->mask(j, i)) mean += model->coef(j, i) * x(j);
          sd = model->noise_sd(i);
        } else {
          mean = m.rho * s(i) + m.b * a;
          sd = m.noise_sd;
        }
        next(i) = clip_state(mean + truncated_normal(rng, sd, 3.0 * sd), m.s_max);
      }
      s = next;
      ret += disc * mdp_reward(s, m.r_max);
      disc *= m.gamma;
    }
    out(static_cast<Eigen::Index>(ep)) = ret;
  });
  return out;
}

}  // namespace detail

/// Behaviour-policy transitions in the true MDP: columns s_1, s_2, a, s_1', s_2'.
inline Eigen::MatrixXd small_mdp_transitions(const SmallMdp& m, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x7a));
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m.train_steps), 5);
  Eigen::Vector2d s = Eigen::Vector2d::Zero();
  for (Eigen::Index t = 0; t < out.rows(); ++t) {
    const double a = m.action_sd * nd(rng);
    Eigen::Vector2d next;
    for (int i = 0; i < 2; ++i)
      next(i) = detail::clip_state(m.rho * s(i) + m.b * a + detail::truncated_normal(rng, m.noise_sd, 3.0 * m.noise_sd),
                                   m.s_max);
    out.row(t) << s(0), s(1), a, next(0), next(1);
    s = next;
  }
  return out;
}

/// Least-squares fit of each next-state dimension on its masked inputs.
inline LinearMdpModel fit_small_mdp_model(const Eigen::MatrixXd& tr, const Eigen::Matrix<std::uint8_t, 3, 2>& mask) {
  LinearMdpModel model;
  model.mask = mask;
  for (int i = 0; i < 2; ++i) {
    std::vector<Eigen::Index> cols;
    for (int j = 0; j < 3; ++j)
      if (mask(j, i)) cols.push_back(j);
    Eigen::MatrixXd x(tr.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) x.col(static_cast<Eigen::Index>(c)) = tr.col(cols[c]);
    const RidgeSolution sol = ridge_fit(x, tr.col(3 + i), 0.0);
    for (std::size_t c = 0; c < cols.size(); ++c) model.coef(cols[c], i) = sol.beta(static_cast<Eigen::Index>(c));
    model.noise_sd(i) = std::sqrt(sol.training_mse);
  }
  return model;
}

/// Compares Monte-Carlo values of the behaviour policy in the fitted and true
/// MDPs against the policy-evaluation bound. The spurious construction uses the
/// all-ones mask, the spurious-free one the true mask. lambda_max is the
/// largest fitted weight on a spurious input and gamma_max the largest
/// regression coefficient of a spurious input on the other state dimension.
inline SmallMdpCheck verify_rl_bound_small_mdp(bool spurious, std::uint64_t seed, const SmallMdp& m = {}) {
  const Eigen::MatrixXd tr = small_mdp_transitions(m, seed);
  Eigen::Matrix<std::uint8_t, 3, 2> mask;
  mask << 1, 0, 0, 1, 1, 1;
  if (spurious) mask.setOnes();
  const LinearMdpModel model = fit_small_mdp_model(tr, mask);

  SmallMdpCheck c;
  c.construction = spurious ? "spurious" : "spurious-free";
  std::size_t n_spu = 0;
  for (int i = 0; i < 2; ++i) {
    const int other = 1 - i;
    if (!mask(other, i)) continue;
    ++n_spu;
    c.lambda_max = std::max(c.lambda_max, std::abs(model.coef(other, i)));
    const RidgeSolution g = ridge_fit(tr.col(i), tr.col(other), 0.0);
    c.gamma_max = std::max(c.gamma_max, std::abs(g.beta(0)));
  }
  c.r_spu = static_cast<double>(n_spu) / (2.0 * 3.0);
  c.eps_c = 3.0 * m.noise_sd;
  c.eps_pi = 0.0;

  const Eigen::VectorXd vm = detail::mdp_returns(m, &model, derive_seed(seed, 0x51));
  const Eigen::VectorXd vt = detail::mdp_returns(m, nullptr, derive_seed(seed, 0x52));
  const double n = static_cast<double>(m.episodes);
  c.value_model = vm.mean();
  c.value_true = vt.mean();
  const double var_m = (vm.array() - c.value_model).square().sum() / (n - 1.0);
  const double var_t = (vt.array() - c.value_true).square().sum() / (n - 1.0);
  c.standard_error = std::sqrt(var_m / n + var_t / n);
  const double bound = rl_spurious_bound(2, 1, m.r_max, m.gamma, m.s_max, c.eps_c, c.eps_pi, c.gamma_max,
                                         c.lambda_max, c.r_spu);
  c.report = make_bound_report(std::abs(c.value_model - c.value_true), bound, 3.0 * c.standard_error);
  return c;
}

/// One named verification entry in the report.
struct TheoryEntry {
  std::string suite;
  std::string name;
  Json parameters;
  double empirical = 0.0;
  double bound = 0.0;
  bool passed = false;
};

struct TheoryReport {
  std::vector<TheoryEntry> entries;
  bool all_passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const TheoryEntry& e) { return e.passed; });
  }
};

/// Twenty random specs for the lambda check: moderate coefficients and
/// variances so that sampling noise at N = 1e6 is well below the tolerance.
inline std::vector<SpuriousSpec> lambda_sweep_specs(std::size_t count, std::size_t n_samples, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x1a));
  std::uniform_real_distribution<double> mag(0.5, 2.0), lv(std::log(0.5), std::log(2.0)), ls(std::log(0.1), std::log(1.0));
  std::bernoulli_distribution sign(0.5);
  std::vector<SpuriousSpec> out;
  for (std::size_t i = 0; i < count; ++i) {
    SpuriousSpec s;
    s.beta_star = (sign(rng) ? 1.0 : -1.0) * mag(rng);
    s.gamma_spu = (sign(rng) ? 1.0 : -1.0) * mag(rng);
    s.sigma_cau_sq = std::exp(lv(rng));
    s.sigma_spu_sq = std::exp(ls(rng));
    s.sigma_noise_sq = 0.1;
    s.n_samples = n_samples;
    s.seed = derive_seed(seed, i);
    out.push_back(s);
  }
  return out;
}

inline void run_lambda_suite(TheoryReport& rep, std::uint64_t seed) {
  const auto specs = lambda_sweep_specs(20, 1000000, seed);
  std::vector<LambdaCheck> checks(specs.size());
  parallel_for(specs.size(), [&](std::size_t i) { checks[i] = verify_lambda_lemma(specs[i]); });
  std::vector<double> errs;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    errs.push_back(checks[i].relative_error);
    rep.entries.push_back({"lambda", "spec " + std::to_string(i), spec_to_json(specs[i]), checks[i].lambda_empirical,
                           checks[i].lambda_formula, checks[i].relative_error < 0.05});
  }
  std::sort(errs.begin(), errs.end());
  const double median = 0.5 * (errs[(errs.size() - 1) / 2] + errs[errs.size() / 2]);
  rep.entries.push_back({"lambda", "max relative error", Json{{"tolerance", 0.05}}, errs.back(), 0.05, errs.back() < 0.05});
  rep.entries.push_back({"lambda", "median relative error", Json{{"tolerance", 0.02}}, median, 0.02, median < 0.02});
}

inline void run_lemma1_suite(TheoryReport& rep, std::uint64_t seed) {
  SpuriousSpec s;
  s.beta_star = 1.5;
  s.gamma_spu = 0.8;
  s.sigma_spu_sq = 0.0;
  s.sigma_noise_sq = 0.1;
  s.n_samples = 100000;
  s.seed = seed;
  for (const Lemma1Row& r : verify_lemma1_equivalence(s, {-0.5, 0.0, 0.25, 0.5})) {
    const double d = std::abs(r.difference);
    rep.entries.push_back({"lemma1", "lambda " + std::to_string(r.lambda), spec_to_json(s), d, 1e-10, d < 1e-10});
  }
}

inline void run_prop1_suite(TheoryReport& rep, std::uint64_t seed) {
  const PropositionReport p = verify_proposition_bound(10000, seed);
  rep.entries.push_back({"prop1", "max |lambda| over random specs",
                         Json{{"n_specs", p.n_specs}, {"violations", p.violations}}, p.max_abs_lambda, 0.5,
                         p.violations == 0});
}

inline void run_thm1_suite(TheoryReport& rep, std::uint64_t seed) {
  const auto grid = theorem_grid(100000, seed);
  std::vector<TheoremCheck> checks(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) { checks[i] = verify_spurious_theorem(grid[i]); });
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Json p = spec_to_json(grid[i]);
    p["x_max"] = checks[i].x_max;
    p["lambda"] = checks[i].lambda_formula;
    p["lambda_empirical"] = checks[i].lambda_empirical;
    p["standard_error"] = checks[i].standard_error;
    rep.entries.push_back({"thm1", "grid " + std::to_string(i), p, checks[i].report.empirical_value,
                           checks[i].report.bound_value, checks[i].report.satisfied});
  }
}

inline void run_thm2_suite(TheoryReport& rep, std::uint64_t seed) {
  for (bool spu : {true, false}) {
    const SmallMdpCheck c = verify_rl_bound_small_mdp(spu, seed);
    rep.entries.push_back({"thm2", c.construction,
                           Json{{"value_model", c.value_model},
                                {"value_true", c.value_true},
                                {"standard_error", c.standard_error},
                                {"eps_c", c.eps_c},
                                {"eps_pi", c.eps_pi},
                                {"lambda_max", c.lambda_max},
                                {"gamma_max", c.gamma_max},
                                {"r_spu", c.r_spu}},
                           c.report.empirical_value, c.report.bound_value, c.report.satisfied});
  }
}

inline const std::vector<std::string>& theory_suites() {
  static const std::vector<std::string> s{"lambda", "lemma1", "prop1", "thm1", "thm2"};
  return s;
}

/// suite is one of theory_suites() or "all".
inline TheoryReport run_theory_suite(const std::string& suite, std::uint64_t seed = 0) {
  const auto& names = theory_suites();
  if (suite != "all" && std::find(names.begin(), names.end(), suite) == names.end())
    throw InvalidArgument("unknown theory suite '" + suite + "' (expected lambda|lemma1|prop1|thm1|thm2|all)");
  TheoryReport rep;
  auto want = [&](const char* s) { return suite == "all" || suite == s; };
  if (want("lambda")) run_lambda_suite(rep, seed);
  if (want("lemma1")) run_lemma1_suite(rep, seed);
  if (want("prop1")) run_prop1_suite(rep, seed);
  if (want("thm1")) run_thm1_suite(rep, seed);
  if (want("thm2")) run_thm2_suite(rep, seed);
  return rep;
}

inline Json theory_report_to_json(const TheoryReport& r) {
  Json entries = Json::array();
  for (const auto& e : r.entries)
    entries.push_back(Json{{"suite", e.suite},
                           {"name", e.name},
                           {"parameters", e.parameters},
                           {"empirical", e.empirical},
                           {"bound", e.bound},
                           {"passed", e.passed}});
  return Json{{"all_passed", r.all_passed()}, {"entries", entries}};
}

inline std::string theory_report_text(const TheoryReport& r) {
  std::string out;
  char buf[256];
  for (const auto& e : r.entries) {
    std::snprintf(buf, sizeof buf, "%-7s %-32s empirical %-12.6g bound %-12.6g %s\n", e.suite.c_str(), e.name.c_str(),
                  e.empirical, e.bound, e.passed ? "pass" : "FAIL");
    out += buf;
  }
  out += r.all_passed() ? "all checks passed\n" : "some checks FAILED\n";
  return out;
}

}  // namespace focus::theory
