#pragma once

// Pessimistic model-predictive control on top of a learned world-model, and
// the experiment harness comparing causal (masked) and plain models.
//
// The planner only needs `predict_batch(S, A)` returning an object with
// `next_states`, `rewards` and `uncertainty`, so any model with that shape
// (including hand-built test models) can be planned against.

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "focus/car_env.hpp"
#include "focus/common.hpp"
#include "focus/data.hpp"
#include "focus/structure.hpp"
#include "focus/world_model.hpp"

namespace focus {

template <typename M>
concept BatchDynamicsModel = requires(const M& m, const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
  { m.predict_batch(s, a).next_states } -> std::convertible_to<Eigen::MatrixXd>;
  { m.predict_batch(s, a).rewards } -> std::convertible_to<Eigen::VectorXd>;
  { m.predict_batch(s, a).uncertainty } -> std::convertible_to<Eigen::VectorXd>;
};

struct PessimismConfig {
  double penalty_coefficient = 1.0;
  int rollout_horizon = 5;
  double gamma = 0.99;

  void validate() const {
    if (!(penalty_coefficient >= 0.0)) throw InvalidArgument("penalty_coefficient must be >= 0");
    if (rollout_horizon < 1) throw InvalidArgument("rollout_horizon must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0,1)");
  }
};

struct RandomShooting {
  int candidates = 500;
};
struct CrossEntropy {
  int population = 500;
  int elites = 50;
  int iterations = 5;
};
using PlannerMethod = std::variant<RandomShooting, CrossEntropy>;

struct PlannerConfig {
  PlannerMethod method = CrossEntropy{};
  int plan_horizon = 5;
  Eigen::VectorXd action_low;
  Eigen::VectorXd action_high;
  std::uint64_t seed = 0;

  void validate(const PessimismConfig& m) const {
    if (plan_horizon < 1) throw InvalidArgument("plan_horizon must be >= 1");
    if (plan_horizon > m.rollout_horizon) throw InvalidArgument("plan_horizon must not exceed rollout_horizon");
    if (action_low.size() == 0 || action_low.size() != action_high.size())
      throw InvalidArgument("action bounds must be set, one interval per action dimension");
    if (!(action_low.array() < action_high.array()).all()) throw InvalidArgument("action_low must be < action_high");
    if (const auto* rs = std::get_if<RandomShooting>(&method); rs && rs->candidates < 1)
      throw InvalidArgument("RandomShooting needs at least one candidate");
    if (const auto* ce = std::get_if<CrossEntropy>(&method)) {
      if (ce->elites < 1 || ce->elites >= ce->population) throw InvalidArgument("CrossEntropy needs 1 <= elites < population");
      if (ce->iterations < 1) throw InvalidArgument("CrossEntropy needs iterations >= 1");
    }
  }
};

struct RolloutResult {
  double discounted_return = 0.0;
  Eigen::MatrixXd states;  // (steps + 1) x n_s, first row is s0
  Eigen::VectorXd penalized_rewards;
  bool truncated = false;
};

/// Imagined rollout with MOPO-style reward r - penalty * uncertainty.
/// actions: one row per step.
template <BatchDynamicsModel Model>
RolloutResult penalized_rollout(const Model& model, const Eigen::VectorXd& s0, const Eigen::MatrixXd& actions,
                                const PessimismConfig& cfg) {
  cfg.validate();
  if (actions.rows() > cfg.rollout_horizon) throw InvalidArgument("more actions than rollout_horizon");
  RolloutResult res;
  res.states.resize(actions.rows() + 1, s0.size());
  res.states.row(0) = s0.transpose();
  res.penalized_rewards.resize(actions.rows());
  double discount = 1.0;
  Eigen::Index t = 0;
  for (; t < actions.rows(); ++t) {
    const auto p = model.predict_batch(res.states.row(t), actions.row(t));
    const double r = p.rewards(0) - cfg.penalty_coefficient * p.uncertainty(0);
    if (!std::isfinite(r) || !p.next_states.allFinite()) {
      res.truncated = true;
      break;
    }
    res.states.row(t + 1) = p.next_states.row(0);
    res.penalized_rewards(t) = r;
    res.discounted_return += discount * r;
    discount *= cfg.gamma;
  }
  if (res.truncated) {
    res.states.conservativeResize(t + 1, Eigen::NoChange);
    res.penalized_rewards.conservativeResize(t);
  }
  return res;
}

namespace detail {

/// Penalized discounted returns of P action sequences at once.
/// seqs: P x (H * n_a), step-major. Non-finite rollouts score -inf.
template <BatchDynamicsModel Model>
Eigen::VectorXd batch_returns(const Model& model, const Eigen::VectorXd& s0, const Eigen::MatrixXd& seqs, int horizon,
                              Eigen::Index n_a, const PessimismConfig& cfg) {
  const Eigen::Index p = seqs.rows();
  Eigen::MatrixXd s = s0.transpose().replicate(p, 1);
  Eigen::VectorXd ret = Eigen::VectorXd::Zero(p);
  double discount = 1.0;
  for (int t = 0; t < horizon; ++t) {
    const Eigen::MatrixXd a = seqs.middleCols(Eigen::Index(t) * n_a, n_a);
    auto pred = model.predict_batch(s, a);
    ret.array() += discount * (pred.rewards.array() - cfg.penalty_coefficient * pred.uncertainty.array());
    s = std::move(pred.next_states);
    discount *= cfg.gamma;
  }
  for (Eigen::Index i = 0; i < p; ++i)
    if (!std::isfinite(ret(i))) ret(i) = -std::numeric_limits<double>::infinity();
  return ret;
}

}  // namespace detail

/// First action of the best sequence found by the configured optimizer.
template <BatchDynamicsModel Model>
Eigen::VectorXd plan_action(const Model& model, const Eigen::VectorXd& s, const PlannerConfig& pcfg,
                            const PessimismConfig& mcfg) {
  mcfg.validate();
  pcfg.validate(mcfg);
  const Eigen::Index n_a = pcfg.action_low.size();
  const int h = pcfg.plan_horizon;
  const Eigen::Index dim = Eigen::Index(h) * n_a;
  const Eigen::VectorXd lo = pcfg.action_low.replicate(h, 1), hi = pcfg.action_high.replicate(h, 1);
  Rng rng(pcfg.seed);

  Eigen::VectorXd best_seq = (lo + hi) / 2.0;
  double best = -std::numeric_limits<double>::infinity();
  auto consider = [&](const Eigen::MatrixXd& seqs, const Eigen::VectorXd& ret) {
    for (Eigen::Index i = 0; i < seqs.rows(); ++i)
      if (ret(i) > best) {
        best = ret(i);
        best_seq = seqs.row(i).transpose();
      }
  };

  if (const auto* rs = std::get_if<RandomShooting>(&pcfg.method)) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd seqs(rs->candidates, dim);
    for (Eigen::Index i = 0; i < seqs.rows(); ++i)
      for (Eigen::Index k = 0; k < dim; ++k) seqs(i, k) = lo(k) + (hi(k) - lo(k)) * unit(rng);
    consider(seqs, detail::batch_returns(model, s, seqs, h, n_a, mcfg));
  } else {
    const auto& ce = std::get<CrossEntropy>(pcfg.method);
    Eigen::VectorXd mu = (lo + hi) / 2.0, sigma = (hi - lo) / 2.0;
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd seqs(ce.population, dim);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(ce.population));
    for (int it = 0; it < ce.iterations; ++it) {
      for (Eigen::Index i = 0; i < seqs.rows(); ++i)
        for (Eigen::Index k = 0; k < dim; ++k) seqs(i, k) = std::clamp(mu(k) + sigma(k) * gauss(rng), lo(k), hi(k));
      const Eigen::VectorXd ret = detail::batch_returns(model, s, seqs, h, n_a, mcfg);
      consider(seqs, ret);
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = Eigen::Index(i);
      std::partial_sort(order.begin(), order.begin() + ce.elites, order.end(),
                        [&](Eigen::Index x, Eigen::Index y) { return ret(x) > ret(y) || (ret(x) == ret(y) && x < y); });
      Eigen::MatrixXd elite(ce.elites, dim);
      for (int e = 0; e < ce.elites; ++e) elite.row(e) = seqs.row(order[std::size_t(e)]);
      mu = elite.colwise().mean().transpose();
      sigma = ((elite.rowwise() - mu.transpose()).array().square().colwise().mean()).sqrt().transpose();
    }
  }
  return best_seq.head(n_a);
}

/// Receding-horizon policy; each call re-plans with a fresh per-step seed.
template <BatchDynamicsModel Model>
class MpcPolicy {
 public:
  MpcPolicy(const Model& model, PlannerConfig pcfg, PessimismConfig mcfg)
      : model_(&model), pcfg_(std::move(pcfg)), mcfg_(mcfg) {}

  Eigen::VectorXd operator()(const Eigen::VectorXd& s) {
    PlannerConfig step = pcfg_;
    step.seed = derive_seed(pcfg_.seed, step_++);
    return plan_action(*model_, s, step, mcfg_);
  }

 private:
  const Model* model_;
  PlannerConfig pcfg_;
  PessimismConfig mcfg_;
  std::uint64_t step_ = 0;
};

inline PlannerConfig car_planner_config(const car::CarParams& p) {
  PlannerConfig c;
  c.action_low = Eigen::VectorXd::Constant(1, -p.max_steer);
  c.action_high = Eigen::VectorXd::Constant(1, p.max_steer);
  return c;
}

inline ModelConfig car_model_config() {
  ModelConfig c;
  c.kind = ModelKind::Auto;
  c.periodic_states = {car::kD};
  return c;
}

/// Runs the MPC policy for `episodes` episodes in the true simulator. Episode
/// e plans with seed derive_seed(seed, "pla", e).
inline car::EvalResult evaluate_mpc(const MaskedWorldModel& model, const PlannerConfig& planner,
                                    const PessimismConfig& pessimism, const car::CarParams& env, std::size_t episodes,
                                    std::uint64_t seed) {
  pessimism.validate();
  planner.validate(pessimism);
  auto make_policy = [&](std::size_t ep) -> car::Policy {
    PlannerConfig per = planner;
    per.seed = derive_seed(seed, 0x706c61, ep);
    auto mpc = std::make_shared<MpcPolicy<MaskedWorldModel>>(model, per, pessimism);
    return [mpc](const car::CarState& s) { return (*mpc)(s.to_vector()); };
  };
  return car::evaluate_policy_episodes(make_policy, env, episodes, derive_seed(seed, 0x6576));
}

/// One offline-RL run on a given dataset: structure (or the full mask),
/// model, and policy evaluation in the true simulator.
struct PipelineConfig {
  bool use_causal_graph = true;
  StructureConfig structure;
  /// Use this graph instead of learning one (e.g. the ground truth).
  std::optional<CausalGraph> fixed_graph;
  ModelConfig model = car_model_config();
  PlannerConfig planner;
  PessimismConfig pessimism;
  car::CarParams car;
  std::size_t eval_episodes = 5;
};

struct PipelineOutcome {
  CausalGraph graph;
  std::optional<StructureScore> structure;
  std::optional<double> p_star;
  car::EvalResult evaluation;
  double seconds = 0.0;
};

inline PipelineOutcome run_pipeline(const TransitionDataset& ds, const PipelineConfig& cfg, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<StructureScore> score;
  std::optional<double> p_star;
  CausalGraph graph = CausalGraph::full(ds.schema());
  try {
    if (cfg.fixed_graph) {
      graph = *cfg.fixed_graph;
    } else if (cfg.use_causal_graph) {
      StructureConfig sc = cfg.structure;
      sc.kci.seed = derive_seed(seed, 0x737472);
      auto learned = learn_structure(ds, sc);
      graph = learned.graph;
      p_star = learned.threshold.p_star;
    }
    if (ds.schema() == car::car_schema()) score = structure_accuracy(graph, car::ground_truth_graph(cfg.car));
  } catch (const Error& e) {
    throw Error(std::string("structure stage: ") + e.what());
  }
  ModelConfig mc = cfg.model;
  mc.seed = derive_seed(seed, 0x6d6f64);
  std::optional<MaskedWorldModel> model;
  try {
    model.emplace(fit_masked_model(ds, graph, mc));
  } catch (const Error& e) {
    throw Error(std::string("model stage: ") + e.what());
  }
  PlannerConfig pc = cfg.planner;
  if (pc.action_low.size() == 0) pc = car_planner_config(cfg.car);
  auto eval = evaluate_mpc(*model, pc, cfg.pessimism, cfg.car, cfg.eval_episodes, seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(graph), score, p_star, std::move(eval), secs};
}

struct ExperimentConfig {
  car::DataKind dataset = car::DataKind::Random;
  std::size_t n_transitions = 20000;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  PipelineConfig pipeline;
};

struct SeedRecord {
  std::uint64_t seed = 0;
  double mean_return = 0.0;
  double sd_return = 0.0;
  std::optional<double> accuracy;
  std::optional<double> p_star;
  std::size_t edges = 0;
  double seconds = 0.0;
};

struct ExperimentReport {
  std::string label;
  std::vector<SeedRecord> seeds;
  double mean_return = 0.0;
  double sd_return = 0.0;  // across seeds
  std::optional<double> mean_accuracy;
  std::optional<double> sd_accuracy;
};

namespace detail {

inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= double(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0};
}

inline void summarize(ExperimentReport& rep) {
  std::vector<double> ret, acc;
  for (const auto& s : rep.seeds) {
    ret.push_back(s.mean_return);
    if (s.accuracy) acc.push_back(*s.accuracy);
  }
  std::tie(rep.mean_return, rep.sd_return) = mean_sd(ret);
  if (acc.size() == rep.seeds.size() && !acc.empty()) {
    auto [m, sd] = mean_sd(acc);
    rep.mean_accuracy = m;
    rep.sd_accuracy = sd;
  }
}

inline SeedRecord record(std::uint64_t seed, const PipelineOutcome& o) {
  SeedRecord r;
  r.seed = seed;
  r.mean_return = o.evaluation.mean_return;
  r.sd_return = o.evaluation.sd;
  if (o.structure) r.accuracy = o.structure->accuracy;
  r.p_star = o.p_star;
  r.edges = o.graph.edge_count();
  r.seconds = o.seconds;
  return r;
}

}  // namespace detail

inline std::string experiment_label(const ExperimentConfig& cfg) {
  const auto& p = cfg.pipeline;
  std::string name = p.fixed_graph ? "fixed-graph" : !p.use_causal_graph ? "plain" : "focus";
  if (p.use_causal_graph && !p.fixed_graph) {
    if (p.structure.test == CiTest::Linear) name += "-linear";
    if (p.structure.rule != ConditioningRule::FocusRule) name += "-" + to_string(p.structure.rule);
  }
  return name + "/" + car::to_string(cfg.dataset);
}

inline TransitionDataset experiment_dataset(car::DataKind kind, std::size_t n, const car::CarParams& p, std::uint64_t seed) {
  return car::generate_offline_data(kind, n, p, derive_seed(seed, 0x64617461));
}

/// Seeds run one after another; each pipeline stage parallelizes internally.
inline ExperimentReport run_focus_experiment(const ExperimentConfig& cfg) {
  ExperimentReport rep;
  rep.label = experiment_label(cfg);
  for (auto seed : cfg.seeds) {
    const auto ds = experiment_dataset(cfg.dataset, cfg.n_transitions, cfg.pipeline.car, seed);
    rep.seeds.push_back(detail::record(seed, run_pipeline(ds, cfg.pipeline, seed)));
  }
  detail::summarize(rep);
  return rep;
}

struct SweepConfig {
  std::vector<double> fractions{0.0, 0.1, 0.25, 0.5, 1.0};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t n_medium = 20000;
  std::size_t n_replay = 20000;
  PipelineConfig pipeline;  // use_causal_graph is overridden per arm
};

struct SweepPoint {
  double fraction = 0.0;
  ExperimentReport focus;
  ExperimentReport plain;
};

struct SweepReport {
  std::vector<SweepPoint> points;
  /// Mean return of a uniformly random steering policy, the zero of the
  /// normalized score.
  double random_policy_return = 0.0;
};

inline double random_policy_return(const car::CarParams& p, std::size_t episodes, std::uint64_t seed) {
  auto make = [&](std::size_t ep) -> car::Policy {
    auto rng = std::make_shared<Rng>(derive_seed(seed, 0x726e64, ep));
    return [rng, p](const car::CarState&) {
      return Eigen::VectorXd::Constant(1, std::uniform_real_distribution<double>(-p.max_steer, p.max_steer)(*rng));
    };
  };
  return car::evaluate_policy_episodes(make, p, episodes, seed).mean_return;
}

inline SweepReport run_mixture_sweep(const SweepConfig& cfg) {
  for (double f : cfg.fractions)
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument("mixture fractions must lie in [0,1]");
  SweepReport rep;
  rep.random_policy_return = random_policy_return(cfg.pipeline.car, 100, 0x5eed);
  for (double f : cfg.fractions) {
    SweepPoint pt;
    pt.fraction = f;
    pt.focus.label = "focus/mixture";
    pt.plain.label = "plain/mixture";
    for (auto seed : cfg.seeds) {
      const auto medium = experiment_dataset(car::DataKind::Medium, cfg.n_medium, cfg.pipeline.car, seed);
      const auto replay = experiment_dataset(car::DataKind::MediumReplay, cfg.n_replay, cfg.pipeline.car, seed);
      const auto mixed = f == 0.0 ? medium : mix_datasets(medium, replay, f, seed);
      for (bool causal : {true, false}) {
        PipelineConfig pc = cfg.pipeline;
        pc.use_causal_graph = causal;
        (causal ? pt.focus : pt.plain).seeds.push_back(detail::record(seed, run_pipeline(mixed, pc, seed)));
      }
    }
    detail::summarize(pt.focus);
    detail::summarize(pt.plain);
    rep.points.push_back(std::move(pt));
  }
  return rep;
}

/// (R - R_random) / (R_full - R_random): the share of the full-mixture
/// improvement over random steering reached at each fraction.
inline double normalized_score(double r, double r_full, double r_random) {
  const double span = r_full - r_random;
  if (!(std::abs(span) > 1e-12)) return r >= r_full ? 1.0 : 0.0;
  return (r - r_random) / span;
}

/// Smallest fraction whose normalized score reaches `level`; nullopt if none.
inline std::optional<double> fraction_reaching(const SweepReport& rep, bool focus, double level = 0.8) {
  if (rep.points.empty()) return std::nullopt;
  const auto full_it = std::max_element(rep.points.begin(), rep.points.end(),
                                        [](const SweepPoint& a, const SweepPoint& b) { return a.fraction < b.fraction; });
  const double full = (focus ? full_it->focus : full_it->plain).mean_return;
  std::optional<double> best;
  for (const auto& pt : rep.points) {
    const double r = (focus ? pt.focus : pt.plain).mean_return;
    if (normalized_score(r, full, rep.random_policy_return) >= level && (!best || pt.fraction < *best)) best = pt.fraction;
  }
  return best;
}

inline Json pessimism_to_json(const PessimismConfig& c) {
  return Json{{"penalty_coefficient", c.penalty_coefficient}, {"rollout_horizon", c.rollout_horizon}, {"gamma", c.gamma}};
}

inline PessimismConfig pessimism_from_json(const Json& j) {
  PessimismConfig c;
  c.penalty_coefficient = j.value("penalty_coefficient", c.penalty_coefficient);
  c.rollout_horizon = j.value("rollout_horizon", c.rollout_horizon);
  c.gamma = j.value("gamma", c.gamma);
  c.validate();
  return c;
}

inline Json planner_to_json(const PlannerConfig& c) {
  Json m;
  if (const auto* rs = std::get_if<RandomShooting>(&c.method))
    m = Json{{"random_shooting", {{"candidates", rs->candidates}}}};
  else {
    const auto& ce = std::get<CrossEntropy>(c.method);
    m = Json{{"cross_entropy", {{"population", ce.population}, {"elites", ce.elites}, {"iterations", ce.iterations}}}};
  }
  return Json{{"method", m},
              {"plan_horizon", c.plan_horizon},
              {"action_low", detail::vec_json(c.action_low)},
              {"action_high", detail::vec_json(c.action_high)},
              {"seed", c.seed}};
}

inline PlannerConfig planner_from_json(const Json& j) {
  PlannerConfig c;
  if (j.contains("method")) {
    const auto& m = j.at("method");
    if (m.contains("random_shooting"))
      c.method = RandomShooting{m.at("random_shooting").value("candidates", 500)};
    else if (m.contains("cross_entropy")) {
      const auto& ce = m.at("cross_entropy");
      CrossEntropy x;
      c.method = CrossEntropy{ce.value("population", x.population), ce.value("elites", x.elites), ce.value("iterations", x.iterations)};
    } else {
      throw InvalidArgument("planner method must be random_shooting or cross_entropy");
    }
  }
  c.plan_horizon = j.value("plan_horizon", c.plan_horizon);
  if (j.contains("action_low")) c.action_low = detail::vec_from(j.at("action_low"));
  if (j.contains("action_high")) c.action_high = detail::vec_from(j.at("action_high"));
  c.seed = j.value("seed", c.seed);
  return c;
}

inline Json pipeline_config_to_json(const PipelineConfig& c) {
  Json j{{"use_causal_graph", c.use_causal_graph},
         {"structure", structure_config_to_json(c.structure)},
         {"model", model_config_to_json(c.model)},
         {"planner", planner_to_json(c.planner)},
         {"pessimism", pessimism_to_json(c.pessimism)},
         {"car", car::params_to_json(c.car)},
         {"eval_episodes", c.eval_episodes}};
  j["fixed_graph"] = c.fixed_graph ? graph_to_json(*c.fixed_graph) : Json(nullptr);
  return j;
}

inline PipelineConfig pipeline_config_from_json(const Json& j) {
  PipelineConfig c;
  c.use_causal_graph = j.value("use_causal_graph", c.use_causal_graph);
  if (j.contains("structure")) c.structure = structure_config_from_json(j.at("structure"));
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("planner")) c.planner = planner_from_json(j.at("planner"));
  if (j.contains("pessimism")) c.pessimism = pessimism_from_json(j.at("pessimism"));
  if (j.contains("car")) c.car = car::params_from_json(j.at("car"));
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  if (j.contains("fixed_graph") && !j.at("fixed_graph").is_null()) c.fixed_graph = graph_from_json(j.at("fixed_graph"));
  return c;
}

inline Json report_to_json(const ExperimentReport& r) {
  Json seeds = Json::array();
  for (const auto& s : r.seeds) {
    Json js{{"seed", s.seed}, {"mean_return", s.mean_return}, {"sd_return", s.sd_return}, {"edges", s.edges}, {"seconds", s.seconds}};
    js["accuracy"] = s.accuracy ? Json(*s.accuracy) : Json(nullptr);
    js["p_star"] = s.p_star ? Json(*s.p_star) : Json(nullptr);
    seeds.push_back(std::move(js));
  }
  Json j{{"label", r.label}, {"mean_return", r.mean_return}, {"sd_return", r.sd_return}, {"seeds", std::move(seeds)}};
  j["mean_accuracy"] = r.mean_accuracy ? Json(*r.mean_accuracy) : Json(nullptr);
  j["sd_accuracy"] = r.sd_accuracy ? Json(*r.sd_accuracy) : Json(nullptr);
  return j;
}

inline Json sweep_to_json(const SweepReport& r) {
  Json pts = Json::array();
  for (const auto& p : r.points)
    pts.push_back({{"fraction", p.fraction}, {"focus", report_to_json(p.focus)}, {"plain", report_to_json(p.plain)}});
  Json j{{"random_policy_return", r.random_policy_return}, {"points", std::move(pts)}};
  const auto ff = fraction_reaching(r, true), fp = fraction_reaching(r, false);
  j["focus_fraction_80"] = ff ? Json(*ff) : Json(nullptr);
  j["plain_fraction_80"] = fp ? Json(*fp) : Json(nullptr);
  return j;
}

inline void write_report_csv(const std::vector<ExperimentReport>& reports, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "label,seed,mean_return,sd_return,accuracy,edges\n";
  for (const auto& r : reports)
    for (const auto& s : r.seeds) {
      out << r.label << ',' << s.seed << ',' << s.mean_return << ',' << s.sd_return << ',';
      if (s.accuracy) out << *s.accuracy;
      out << ',' << s.edges << '\n';
    }
}

inline void write_sweep_csv(const SweepReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "fraction,method,seed,mean_return\n";
  for (const auto& p : r.points)
    for (const auto* rep : {&p.focus, &p.plain})
      for (const auto& s : rep->seeds)
        out << p.fraction << ',' << (rep == &p.focus ? "focus" : "plain") << ',' << s.seed << ',' << s.mean_return << '\n';
}

}  // namespace focus
