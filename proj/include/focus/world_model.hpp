#pragma once

// Per-target dynamics models whose inputs are masked by a causal graph.
// Each target column gets its own bootstrap ensemble; the ensemble spread is
// the uncertainty signal used for pessimistic planning.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "focus/common.hpp"
#include "focus/data.hpp"

namespace focus {

struct RidgeSolution {
  Eigen::VectorXd beta;
  double k = 0.0;
  double training_mse = 0.0;
};

/// beta = (X'X + kI)^{-1} X'y. With k > 0 the system is solved as the least
/// squares problem on [X; sqrt(k) I], which never forms X'X.
inline RidgeSolution ridge_fit(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                               double k) {
  if (x.rows() != y.size()) throw InvalidArgument("ridge_fit: X and y differ in length");
  if (!(k >= 0.0) || !std::isfinite(k)) throw InvalidArgument("ridge_fit: k must be finite and >= 0");
  if (!x.allFinite() || !y.allFinite()) throw InvalidArgument("ridge_fit: non-finite input");
  const Eigen::Index n = x.rows(), d = x.cols();
  RidgeSolution sol;
  sol.k = k;
  if (d == 0) {
    sol.beta = Eigen::VectorXd();
    sol.training_mse = n > 0 ? y.squaredNorm() / double(n) : 0.0;
    return sol;
  }
  if (k == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (n < d || qr.rank() < d) throw NumericalError("ridge_fit: X'X is singular with k = 0; set k > 0");
    sol.beta = qr.solve(y);
  } else {
    Eigen::MatrixXd aug(n + d, d);
    aug.topRows(n) = x;
    aug.bottomRows(d) = std::sqrt(k) * Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + d);
    rhs.head(n) = y;
    sol.beta = aug.colPivHouseholderQr().solve(rhs);
  }
  if (!sol.beta.allFinite()) throw NumericalError("ridge_fit: solution is not finite");
  sol.training_mse = n > 0 ? (y - x * sol.beta).squaredNorm() / double(n) : 0.0;
  return sol;
}

/// k = sigma_spu^2 / beta*^2.
inline double hoerl_kennard_k(double beta_star, double sigma_spu_sq) {
  if (beta_star == 0.0) throw InvalidArgument("hoerl_kennard_k: beta_star must be non-zero");
  if (!(sigma_spu_sq >= 0.0)) throw InvalidArgument("hoerl_kennard_k: sigma_spu_sq must be >= 0");
  return sigma_spu_sq / (beta_star * beta_star);
}

enum class ModelKind { LinearRidge, Mlp, Auto };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::LinearRidge: return "linear";
    case ModelKind::Mlp: return "mlp";
    case ModelKind::Auto: return "auto";
  }
  return "linear";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "linear") return ModelKind::LinearRidge;
  if (s == "mlp") return ModelKind::Mlp;
  if (s == "auto") return ModelKind::Auto;
  throw InvalidArgument("unknown model kind '" + s + "' (expected linear|mlp|auto)");
}

/// Training recipe of the small MLP. A fixed constant, not a tuning surface.
struct MlpRecipe {
  int hidden = 16;
  int steps = 3000;
  int batch = 128;
  double learning_rate = 3e-3;
};

struct ModelConfig {
  ModelKind kind = ModelKind::LinearRidge;
  std::size_t ensemble_size = 5;
  /// Ridge coefficient of linear members, fitted on centered data.
  double ridge_k = 1e-3;
  /// State dimensions that are angles in (-pi, pi]; their deltas and
  /// predictions are wrapped.
  std::vector<std::size_t> periodic_states;
  MlpRecipe mlp;
  /// Auto picks the MLP for a target only if its out-of-bag MSE is below
  /// this fraction of the linear member's.
  double auto_mlp_ratio = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (ensemble_size < 2) throw InvalidArgument("ensemble_size must be >= 2");
    if (!(ridge_k >= 0.0)) throw InvalidArgument("ridge_k must be >= 0");
    if (mlp.hidden < 1 || mlp.steps < 1 || mlp.batch < 1 || !(mlp.learning_rate > 0.0))
      throw InvalidArgument("invalid MLP recipe");
  }
};

/// Two tanh hidden layers, linear output, standardized inputs and target.
struct MlpMember {
  Eigen::VectorXd x_mean, x_scale;
  double y_mean = 0.0, y_scale = 1.0;
  Eigen::MatrixXd w1, w2;  // hidden x in, hidden x hidden
  Eigen::VectorXd b1, b2, w3;
  double b3 = 0.0;

  /// x: rows are samples.
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd xs = ((x.rowwise() - x_mean.transpose()).array().rowwise() / x_scale.transpose().array()).matrix();
    Eigen::MatrixXd h1 = (xs * w1.transpose()).rowwise() + b1.transpose();
    h1 = h1.array().tanh().matrix();
    Eigen::MatrixXd h2 = (h1 * w2.transpose()).rowwise() + b2.transpose();
    h2 = h2.array().tanh().matrix();
    return ((h2 * w3).array() + b3).matrix() * y_scale + Eigen::VectorXd::Constant(x.rows(), y_mean);
  }
};

struct LinearMember {
  Eigen::VectorXd x_mean;
  double y_mean = 0.0;
  Eigen::VectorXd beta;

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    return ((x.rowwise() - x_mean.transpose()) * beta).array() + y_mean;
  }
};

namespace detail {

inline void column_moments(const Eigen::MatrixXd& x, Eigen::VectorXd& mean, Eigen::VectorXd& scale) {
  mean = x.colwise().mean().transpose();
  scale.resize(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double sd = std::sqrt((x.col(c).array() - mean(c)).square().mean());
    scale(c) = sd > 1e-12 ? sd : 1.0;
  }
}

inline LinearMember fit_linear_member(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double k) {
  LinearMember m;
  m.x_mean = x.colwise().mean().transpose();
  m.y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - m.x_mean.transpose();
  const Eigen::VectorXd yc = y.array() - m.y_mean;
  m.beta = ridge_fit(xc, yc, k).beta;
  return m;
}

inline MlpMember fit_mlp_member(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const MlpRecipe& recipe,
                                std::uint64_t seed) {
  MlpMember m;
  column_moments(x, m.x_mean, m.x_scale);
  m.y_mean = y.mean();
  const double ysd = std::sqrt((y.array() - m.y_mean).square().mean());
  m.y_scale = ysd > 1e-12 ? ysd : 1.0;
  const Eigen::MatrixXd xs = ((x.rowwise() - m.x_mean.transpose()).array().rowwise() / m.x_scale.transpose().array()).matrix();
  const Eigen::VectorXd ys = (y.array() - m.y_mean) / m.y_scale;

  const Eigen::Index d = x.cols(), h = recipe.hidden, n = x.rows();
  Rng rng(seed);
  auto glorot = [&](Eigen::Index rows, Eigen::Index cols) {
    const double lim = std::sqrt(6.0 / double(rows + cols));
    std::uniform_real_distribution<double> u(-lim, lim);
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    return w;
  };
  m.w1 = glorot(h, d);
  m.w2 = glorot(h, h);
  m.w3 = glorot(h, 1).col(0);
  m.b1 = Eigen::VectorXd::Zero(h);
  m.b2 = Eigen::VectorXd::Zero(h);
  m.b3 = 0.0;

  // Adam state, one slot per parameter block.
  struct Moments {
    Eigen::MatrixXd m, v;
  };
  auto zeros_like = [](const auto& a) { return Moments{Eigen::MatrixXd::Zero(a.rows(), a.cols()), Eigen::MatrixXd::Zero(a.rows(), a.cols())}; };
  Moments mw1 = zeros_like(m.w1), mw2 = zeros_like(m.w2), mw3 = zeros_like(m.w3), mb1 = zeros_like(m.b1),
          mb2 = zeros_like(m.b2);
  double mb3 = 0.0, vb3 = 0.0;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  const Eigen::Index bs = std::min<Eigen::Index>(recipe.batch, n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[std::size_t(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  Eigen::Index cursor = 0;
  Eigen::MatrixXd xb(bs, d);
  Eigen::VectorXd yb(bs);

  for (int step = 1; step <= recipe.steps; ++step) {
    for (Eigen::Index r = 0; r < bs; ++r) {
      if (cursor == n) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Eigen::Index src = order[std::size_t(cursor++)];
      xb.row(r) = xs.row(src);
      yb(r) = ys(src);
    }
    const Eigen::MatrixXd h1 = ((xb * m.w1.transpose()).rowwise() + m.b1.transpose()).array().tanh().matrix();
    const Eigen::MatrixXd h2 = ((h1 * m.w2.transpose()).rowwise() + m.b2.transpose()).array().tanh().matrix();
    const Eigen::VectorXd out = (h2 * m.w3).array() + m.b3;
    const Eigen::VectorXd g_out = 2.0 * (out - yb) / double(bs);

    const Eigen::VectorXd g_w3 = h2.transpose() * g_out;
    const double g_b3 = g_out.sum();
    const Eigen::MatrixXd g_h2 = (g_out * m.w3.transpose()).array() * (1.0 - h2.array().square());
    const Eigen::MatrixXd g_w2 = g_h2.transpose() * h1;
    const Eigen::VectorXd g_b2 = g_h2.colwise().sum().transpose();
    const Eigen::MatrixXd g_h1 = (g_h2 * m.w2).array() * (1.0 - h1.array().square());
    const Eigen::MatrixXd g_w1 = g_h1.transpose() * xb;
    const Eigen::VectorXd g_b1 = g_h1.colwise().sum().transpose();

    const double c1 = 1.0 - std::pow(beta1, step), c2 = 1.0 - std::pow(beta2, step);
    const double lr = recipe.learning_rate;
    auto adam = [&](auto& param, Moments& mo, const auto& grad) {
      mo.m = beta1 * mo.m + (1.0 - beta1) * grad;
      mo.v = beta2 * mo.v + (1.0 - beta2) * grad.array().square().matrix();
      param.array() -= lr * (mo.m.array() / c1) / ((mo.v.array() / c2).sqrt() + eps);
    };
    adam(m.w1, mw1, g_w1);
    adam(m.w2, mw2, g_w2);
    adam(m.w3, mw3, g_w3);
    adam(m.b1, mb1, g_b1);
    adam(m.b2, mb2, g_b2);
    mb3 = beta1 * mb3 + (1.0 - beta1) * g_b3;
    vb3 = beta2 * vb3 + (1.0 - beta2) * g_b3 * g_b3;
    m.b3 -= lr * (mb3 / c1) / (std::sqrt(vb3 / c2) + eps);
  }
  return m;
}

inline std::vector<Eigen::Index> bootstrap_rows(Eigen::Index n, Rng& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  for (auto& r : rows) r = pick(rng);
  return rows;
}

}  // namespace detail

/// One target's ensemble. Members are all linear or all MLP.
struct TargetEnsemble {
  std::vector<std::size_t> parents;
  ModelKind kind = ModelKind::LinearRidge;  // LinearRidge or Mlp once fitted
  /// Target is predicted as a change from the target's own time-t value.
  bool delta = false;
  bool periodic = false;
  /// Used when the target has no parents.
  double constant = 0.0;
  std::vector<LinearMember> linear;
  std::vector<MlpMember> mlp;

  std::size_t size() const { return kind == ModelKind::Mlp ? mlp.size() : linear.size(); }

  /// Raw member outputs (delta or absolute), one column per member.
  Eigen::MatrixXd member_outputs(const Eigen::MatrixXd& x) const {
    const Eigen::Index b = x.rows();
    const std::size_t e = std::max<std::size_t>(1, size());
    Eigen::MatrixXd out(b, Eigen::Index(e));
    if (parents.empty()) {
      out.setConstant(constant);
      return out;
    }
    for (std::size_t m = 0; m < e; ++m)
      out.col(Eigen::Index(m)) = kind == ModelKind::Mlp ? mlp[m].predict(x) : linear[m].predict(x);
    return out;
  }
};

struct Prediction {
  Eigen::VectorXd next_state;
  double reward = 0.0;
  double uncertainty = 0.0;
};

struct BatchPrediction {
  Eigen::MatrixXd next_states;  // B x n_s
  Eigen::VectorXd rewards;      // B
  Eigen::VectorXd uncertainty;  // B
};

inline double wrap_to_pi(double x) {
  double r = std::remainder(x, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

class MaskedWorldModel {
 public:
  MaskedWorldModel(CausalGraph graph, ModelConfig cfg, std::vector<TargetEnsemble> targets)
      : graph_(std::move(graph)), cfg_(std::move(cfg)), targets_(std::move(targets)) {
    if (targets_.size() != schema().n_targets()) throw InvalidArgument("MaskedWorldModel: one ensemble per target required");
  }

  const DimensionSchema& schema() const { return graph_.schema(); }
  const CausalGraph& graph() const { return graph_; }
  const ModelConfig& config() const { return cfg_; }
  const std::vector<TargetEnsemble>& targets() const { return targets_; }

  /// Rows of s and a are independent queries.
  BatchPrediction predict_batch(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) const {
    const auto& sc = schema();
    if (s.cols() != Eigen::Index(sc.n_states()) || a.cols() != Eigen::Index(sc.n_actions()) || s.rows() != a.rows())
      throw InvalidArgument("predict_batch: state/action shapes do not match the schema");
    const Eigen::Index b = s.rows();
    const Eigen::Index ns = Eigen::Index(sc.n_states());
    BatchPrediction out{Eigen::MatrixXd(b, ns), Eigen::VectorXd(b), Eigen::VectorXd::Zero(b)};
    Eigen::MatrixXd x;
    for (std::size_t j = 0; j < targets_.size(); ++j) {
      const auto& t = targets_[j];
      x.resize(b, Eigen::Index(t.parents.size()));
      for (std::size_t c = 0; c < t.parents.size(); ++c) {
        const std::size_t p = t.parents[c];
        x.col(Eigen::Index(c)) = p < sc.n_states() ? s.col(Eigen::Index(p)) : a.col(Eigen::Index(p - sc.n_states()));
      }
      const Eigen::MatrixXd raw = t.member_outputs(x);
      Eigen::VectorXd mean = raw.rowwise().mean();
      if (raw.cols() > 1) {
        const Eigen::VectorXd sd = ((raw.colwise() - mean).array().square().rowwise().mean()).sqrt();
        out.uncertainty = out.uncertainty.cwiseMax(sd);
      }
      if (t.delta) mean += s.col(Eigen::Index(j));
      if (t.periodic) mean = mean.unaryExpr([](double v) { return wrap_to_pi(v); });
      if (Eigen::Index(j) < ns)
        out.next_states.col(Eigen::Index(j)) = mean;
      else
        out.rewards = mean;
    }
    return out;
  }

  Prediction predict(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
    const auto bp = predict_batch(s.transpose(), a.transpose());
    return {bp.next_states.row(0).transpose(), bp.rewards(0), bp.uncertainty(0)};
  }

 private:
  CausalGraph graph_;
  ModelConfig cfg_;
  std::vector<TargetEnsemble> targets_;
};

namespace detail {

inline bool is_periodic(const ModelConfig& cfg, std::size_t j) {
  return std::find(cfg.periodic_states.begin(), cfg.periodic_states.end(), j) != cfg.periodic_states.end();
}

/// Regression target column for target j (delta or absolute, wrapped if periodic).
inline Eigen::VectorXd training_target(const TransitionDataset& ds, std::size_t j, bool delta, bool periodic) {
  Eigen::VectorXd y = ds.target_column(j);
  if (delta) {
    y -= ds.states().col(Eigen::Index(j));
    if (periodic) y = y.unaryExpr([](double v) { return wrap_to_pi(v); });
  }
  return y;
}

inline Eigen::MatrixXd gather(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(Eigen::Index(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(Eigen::Index(r)) = x.row(rows[r]);
  return out;
}

inline Eigen::VectorXd gather(const Eigen::VectorXd& y, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(Eigen::Index(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out(Eigen::Index(r)) = y(rows[r]);
  return out;
}

/// Auto: compare a linear and an MLP fit on member 0's bootstrap sample by
/// their out-of-bag error.
inline ModelKind choose_kind(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ModelConfig& cfg,
                             std::uint64_t seed) {
  Rng rng(seed);
  const auto rows = bootstrap_rows(x.rows(), rng);
  std::vector<char> in_bag(std::size_t(x.rows()), 0);
  for (auto r : rows) in_bag[std::size_t(r)] = 1;
  std::vector<Eigen::Index> oob;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    if (!in_bag[std::size_t(i)]) oob.push_back(i);
  if (oob.size() < 10) return ModelKind::LinearRidge;
  const Eigen::MatrixXd xb = gather(x, rows), xo = gather(x, oob);
  const Eigen::VectorXd yb = gather(y, rows), yo = gather(y, oob);
  const double lin = (fit_linear_member(xb, yb, cfg.ridge_k).predict(xo) - yo).squaredNorm();
  const double net = (fit_mlp_member(xb, yb, cfg.mlp, derive_seed(seed, 1)).predict(xo) - yo).squaredNorm();
  return net < cfg.auto_mlp_ratio * lin ? ModelKind::Mlp : ModelKind::LinearRidge;
}

}  // namespace detail

/// Fits one bootstrap ensemble per target on the graph's parent columns.
inline MaskedWorldModel fit_masked_model(const TransitionDataset& ds, const CausalGraph& graph, const ModelConfig& cfg) {
  cfg.validate();
  const auto& sc = ds.schema();
  if (!(graph.schema() == sc)) throw InvalidArgument("fit_masked_model: graph schema differs from dataset schema");
  const std::size_t n_targets = sc.n_targets();
  std::size_t max_parents = 0;
  for (std::size_t j = 0; j < n_targets; ++j) max_parents = std::max(max_parents, graph.parents(j).size());
  if (ds.size() < 10 * std::max<std::size_t>(1, max_parents))
    throw InvalidArgument("fit_masked_model: need at least 10 transitions per input of the largest parent set");

  const Eigen::MatrixXd inputs = ds.inputs();
  std::vector<TargetEnsemble> targets(n_targets);
  for (std::size_t j = 0; j < n_targets; ++j) {
    auto& t = targets[j];
    t.parents = graph.parents(j);
    t.periodic = j < sc.n_states() && detail::is_periodic(cfg, j);
    t.delta = j < sc.n_states() && graph.edge(j, j);
    if (t.parents.empty()) {
      // No inputs: the training mean of the target.
      t.constant = detail::training_target(ds, j, false, false).mean();
    }
  }

  // Decide each target's member kind first (Auto needs a trial fit).
  parallel_for(n_targets, [&](std::size_t j) {
    auto& t = targets[j];
    if (t.parents.empty()) return;
    if (cfg.kind != ModelKind::Auto) {
      t.kind = cfg.kind;
      return;
    }
    Eigen::MatrixXd x(inputs.rows(), Eigen::Index(t.parents.size()));
    for (std::size_t c = 0; c < t.parents.size(); ++c) x.col(Eigen::Index(c)) = inputs.col(Eigen::Index(t.parents[c]));
    t.kind = detail::choose_kind(x, detail::training_target(ds, j, t.delta, t.periodic), cfg, derive_seed(cfg.seed, 0x6b696e64, j));
  });

  const std::size_t e = cfg.ensemble_size;
  for (auto& t : targets) {
    if (t.parents.empty()) continue;
    if (t.kind == ModelKind::Mlp)
      t.mlp.resize(e);
    else
      t.linear.resize(e);
  }
  parallel_for(n_targets * e, [&](std::size_t cell) {
    const std::size_t j = cell / e, m = cell % e;
    auto& t = targets[j];
    if (t.parents.empty()) return;
    Rng rng(derive_seed(cfg.seed, j, m));
    const auto rows = detail::bootstrap_rows(inputs.rows(), rng);
    Eigen::MatrixXd x(Eigen::Index(rows.size()), Eigen::Index(t.parents.size()));
    for (std::size_t c = 0; c < t.parents.size(); ++c)
      for (std::size_t r = 0; r < rows.size(); ++r) x(Eigen::Index(r), Eigen::Index(c)) = inputs(rows[r], Eigen::Index(t.parents[c]));
    const Eigen::VectorXd y = detail::gather(detail::training_target(ds, j, t.delta, t.periodic), rows);
    if (t.kind == ModelKind::Mlp)
      t.mlp[m] = detail::fit_mlp_member(x, y, cfg.mlp, derive_seed(cfg.seed, 0x6d6c70, cell));
    else
      t.linear[m] = detail::fit_linear_member(x, y, cfg.ridge_k);
  });
  return MaskedWorldModel(graph, cfg, std::move(targets));
}

// JSON round trip. Coefficients are written with full double precision by the
// JSON library, so a reloaded model predicts bit-identically.

namespace detail {

inline Json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vec_from(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

}  // namespace detail

inline Json model_config_to_json(const ModelConfig& c) {
  return Json{{"kind", to_string(c.kind)},
              {"ensemble_size", c.ensemble_size},
              {"ridge_k", c.ridge_k},
              {"periodic_states", c.periodic_states},
              {"mlp", {{"hidden", c.mlp.hidden}, {"steps", c.mlp.steps}, {"batch", c.mlp.batch}, {"learning_rate", c.mlp.learning_rate}}},
              {"auto_mlp_ratio", c.auto_mlp_ratio},
              {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  c.kind = model_kind_from_string(j.value("kind", to_string(c.kind)));
  c.ensemble_size = j.value("ensemble_size", c.ensemble_size);
  c.ridge_k = j.value("ridge_k", c.ridge_k);
  c.periodic_states = j.value("periodic_states", c.periodic_states);
  if (j.contains("mlp")) {
    const auto& m = j.at("mlp");
    c.mlp.hidden = m.value("hidden", c.mlp.hidden);
    c.mlp.steps = m.value("steps", c.mlp.steps);
    c.mlp.batch = m.value("batch", c.mlp.batch);
    c.mlp.learning_rate = m.value("learning_rate", c.mlp.learning_rate);
  }
  c.auto_mlp_ratio = j.value("auto_mlp_ratio", c.auto_mlp_ratio);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

inline Json model_to_json(const MaskedWorldModel& model) {
  Json targets = Json::array();
  for (const auto& t : model.targets()) {
    Json jt{{"parents", t.parents}, {"kind", to_string(t.kind)}, {"delta", t.delta}, {"periodic", t.periodic}, {"constant", t.constant}};
    Json members = Json::array();
    for (const auto& m : t.linear) members.push_back({{"x_mean", detail::vec_json(m.x_mean)}, {"y_mean", m.y_mean}, {"beta", detail::vec_json(m.beta)}});
    for (const auto& m : t.mlp)
      members.push_back({{"x_mean", detail::vec_json(m.x_mean)},
                         {"x_scale", detail::vec_json(m.x_scale)},
                         {"y_mean", m.y_mean},
                         {"y_scale", m.y_scale},
                         {"w1", detail::matrix_to_json(m.w1)},
                         {"w2", detail::matrix_to_json(m.w2)},
                         {"b1", detail::vec_json(m.b1)},
                         {"b2", detail::vec_json(m.b2)},
                         {"w3", detail::vec_json(m.w3)},
                         {"b3", m.b3}});
    jt["members"] = std::move(members);
    targets.push_back(std::move(jt));
  }
  return Json{{"graph", graph_to_json(model.graph())}, {"config", model_config_to_json(model.config())}, {"targets", std::move(targets)}};
}

inline MaskedWorldModel model_from_json(const Json& j) {
  auto graph = graph_from_json(j.at("graph"));
  auto cfg = model_config_from_json(j.at("config"));
  std::vector<TargetEnsemble> targets;
  for (const auto& jt : j.at("targets")) {
    TargetEnsemble t;
    t.parents = jt.at("parents").get<std::vector<std::size_t>>();
    t.kind = model_kind_from_string(jt.at("kind").get<std::string>());
    t.delta = jt.at("delta").get<bool>();
    t.periodic = jt.at("periodic").get<bool>();
    t.constant = jt.at("constant").get<double>();
    for (const auto& jm : jt.at("members")) {
      if (t.kind == ModelKind::Mlp) {
        MlpMember m;
        m.x_mean = detail::vec_from(jm.at("x_mean"));
        m.x_scale = detail::vec_from(jm.at("x_scale"));
        m.y_mean = jm.at("y_mean").get<double>();
        m.y_scale = jm.at("y_scale").get<double>();
        m.w1 = detail::matrix_from_json<double>(jm.at("w1"));
        m.w2 = detail::matrix_from_json<double>(jm.at("w2"));
        m.b1 = detail::vec_from(jm.at("b1"));
        m.b2 = detail::vec_from(jm.at("b2"));
        m.w3 = detail::vec_from(jm.at("w3"));
        m.b3 = jm.at("b3").get<double>();
        t.mlp.push_back(std::move(m));
      } else {
        LinearMember m;
        m.x_mean = detail::vec_from(jm.at("x_mean"));
        m.y_mean = jm.at("y_mean").get<double>();
        m.beta = detail::vec_from(jm.at("beta"));
        t.linear.push_back(std::move(m));
      }
    }
    targets.push_back(std::move(t));
  }
  return MaskedWorldModel(std::move(graph), std::move(cfg), std::move(targets));
}

}  // namespace focus
