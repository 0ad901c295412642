// Runs the acceptance criteria end to end and prints one PASS/FAIL line per
// criterion. Criteria 1-5, 8 and 11 gate the exit code; the empirical
// structure and policy comparisons (6, 7, 9, 10) are reported but do not,
// since their outcome is a measurement rather than a correctness property.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "focus/offline_rl.hpp"
#include "focus/theory.hpp"

using namespace focus;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Eigen::VectorXd normals(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g;
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = g(rng);
  return v;
}

Outcome suite_outcome(const char* suite, double limit_seconds = 0.0) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = theory::run_theory_suite(suite, 0);
  const double secs = seconds_since(t0);
  std::size_t failed = 0;
  double worst = 0.0;
  for (const auto& e : rep.entries) {
    failed += !e.passed;
    if (e.bound != 0.0) worst = std::max(worst, e.empirical / e.bound);
  }
  Outcome o;
  o.passed = failed == 0 && (limit_seconds == 0.0 || secs < limit_seconds);
  o.detail = fmt("%zu entries, %zu failed, max empirical/bound %.3g, %.1f s", rep.entries.size(), failed, worst, secs);
  return o;
}

Outcome lambda_lemma() {
  const auto t0 = std::chrono::steady_clock::now();
  theory::TheoryReport rep;
  theory::run_lambda_suite(rep, 0);
  const double secs = seconds_since(t0);
  double max_err = 0.0, median = 0.0;
  for (const auto& e : rep.entries) {
    if (e.name == "max relative error") max_err = e.empirical;
    if (e.name == "median relative error") median = e.empirical;
  }
  return {rep.all_passed() && secs < 60.0,
          fmt("max rel err %.4f, median %.4f, %.1f s (limit 60 s)", max_err, median, secs)};
}

Outcome proposition() {
  const auto r = theory::verify_proposition_bound(10000, 0);
  return {r.violations == 0, fmt("%zu specs, %zu violations, max |lambda| %.4f", r.n_specs, r.violations, r.max_abs_lambda)};
}

Outcome structure_accuracy_run(std::vector<double>* focus_acc, std::vector<double>* cond_acc,
                               std::vector<double>* lin_acc, double* focus_secs) {
  const car::CarParams p;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ds = experiment_dataset(car::DataKind::Random, 20000, p, seed);
    const auto truth = car::ground_truth_graph(p);
    auto run = [&](ConditioningRule rule, CiTest test) {
      StructureConfig sc;
      sc.rule = rule;
      sc.test = test;
      sc.kci.max_test_samples = 1000;
      sc.kci.seed = derive_seed(seed, 0x737472);
      return focus::structure_accuracy(learn_structure(ds, sc).graph, truth).accuracy;
    };
    const auto t0 = std::chrono::steady_clock::now();
    focus_acc->push_back(run(ConditioningRule::FocusRule, CiTest::Kci));
    *focus_secs += seconds_since(t0);
    cond_acc->push_back(run(ConditioningRule::AllVariables, CiTest::Kci));
    lin_acc->push_back(run(ConditioningRule::FocusRule, CiTest::Linear));
    std::printf("  seed %llu: focus %.4f  -condition %.4f  -kci %.4f\n", static_cast<unsigned long long>(seed),
                focus_acc->back(), cond_acc->back(), lin_acc->back());
    std::fflush(stdout);
  }
  return {};
}

Outcome kci_calibration() {
  std::size_t rejected = 0, cond_rejected = 0;
  for (std::uint64_t t = 0; t < 200; ++t) {
    Rng rng(derive_seed(0xca1, t));
    const auto x = normals(500, rng), y = normals(500, rng), z = normals(500, rng);
    KciConfig cfg;
    cfg.seed = t;
    rejected += hsic_test(x, y, cfg).p_value < 0.05;
    cond_rejected += kci_test(x, y, z, cfg).p_value < 0.05;
  }
  const double rate = double(rejected) / 200.0;
  const double cond_rate = double(cond_rejected) / 200.0;

  // Thirty linear-Gaussian instances: independent, weakly and moderately
  // dependent, chains and colliders.
  std::size_t agree = 0;
  for (std::uint64_t t = 0; t < 30; ++t) {
    Rng rng(derive_seed(0xa9e, t));
    const auto x = normals(500, rng), e1 = normals(500, rng), e2 = normals(500, rng);
    KciConfig gamma, perm;
    gamma.seed = perm.seed = t;
    perm.null_method = Permutation{1000};
    TestResult g, q;
    switch (t % 5) {
      case 0:
        g = hsic_test(x, e1, gamma), q = hsic_test(x, e1, perm);
        break;
      case 1: {
        const Eigen::VectorXd y = 0.15 * x + e1;
        g = hsic_test(x, y, gamma), q = hsic_test(x, y, perm);
        break;
      }
      case 2: {
        const Eigen::VectorXd y = 0.3 * x + e1;
        g = hsic_test(x, y, gamma), q = hsic_test(x, y, perm);
        break;
      }
      case 3: {
        const Eigen::VectorXd z = x + e1, y = z + e2;
        g = kci_test(x, y, z, gamma), q = kci_test(x, y, z, perm);
        break;
      }
      default: {
        const Eigen::VectorXd z = x + e1 + 0.3 * e2;
        g = kci_test(x, e1, z, gamma), q = kci_test(x, e1, z, perm);
        break;
      }
    }
    agree += (g.p_value < 0.05) == (q.p_value < 0.05);
  }
  return {rate >= 0.02 && rate <= 0.09 && agree >= 27,
          fmt("H0 rejection %.3f (conditional test %.3f), gamma/permutation agreement %zu/30", rate, cond_rate, agree)};
}

std::pair<double, double> mean_sd(const std::vector<double>& v) { return detail::mean_sd(v); }

PipelineConfig policy_pipeline() {
  PipelineConfig c;
  c.planner = car_planner_config(c.car);
  return c;
}

Outcome policy_ordering(double* secs_out) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport rep[2][2];  // [dataset][focus?]
  const car::DataKind kinds[2] = {car::DataKind::Random, car::DataKind::MediumReplay};
  for (int d = 0; d < 2; ++d)
    for (int f = 0; f < 2; ++f) {
      ExperimentConfig cfg;
      cfg.dataset = kinds[d];
      cfg.pipeline = policy_pipeline();
      cfg.pipeline.use_causal_graph = f == 1;
      rep[d][f] = run_focus_experiment(cfg);
      std::printf("  %-22s mean return %9.3f (sd %.3f)\n", rep[d][f].label.c_str(), rep[d][f].mean_return,
                  rep[d][f].sd_return);
      std::fflush(stdout);
    }
  *secs_out = seconds_since(t0);
  std::size_t wins = 0;
  for (std::size_t i = 0; i < rep[0][1].seeds.size(); ++i)
    wins += rep[0][1].seeds[i].mean_return > rep[0][0].seeds[i].mean_return;
  const double gap_random = rep[0][1].mean_return - rep[0][0].mean_return;
  const double gap_replay = rep[1][1].mean_return - rep[1][0].mean_return;
  const bool sign_ok = wins == 5 || (wins == 4 && gap_random > 0.0);
  const bool ok = sign_ok && gap_replay < gap_random && *secs_out < 1200.0;
  return {ok, fmt("random: focus wins %zu/5, gap %.3f; medium-replay gap %.3f; %.0f s (limit 1200 s)", wins, gap_random,
                  gap_replay, *secs_out)};
}

Outcome mixture_sweep() {
  SweepConfig cfg;
  cfg.pipeline = policy_pipeline();
  const auto rep = run_mixture_sweep(cfg);
  for (const auto& pt : rep.points)
    std::printf("  fraction %.2f: focus %9.3f  plain %9.3f\n", pt.fraction, pt.focus.mean_return, pt.plain.mean_return);
  const auto ff = fraction_reaching(rep, true), fp = fraction_reaching(rep, false);
  const bool ok = ff && fp && *ff < *fp;
  return {ok, fmt("random-policy return %.3f; 80%% reached at fraction focus %s, plain %s", rep.random_policy_return,
                  ff ? fmt("%.2f", *ff).c_str() : "never", fp ? fmt("%.2f", *fp).c_str() : "never")};
}

// Each check returns an empty string on success or a description of the failure.
std::string check_mask_enforcement() {
  const car::CarParams p;
  const auto ds = car::generate_offline_data(car::DataKind::MediumReplay, 3000, p, 11);
  const auto g = car::ground_truth_graph(p);
  ModelConfig mc = car_model_config();
  mc.kind = ModelKind::LinearRidge;
  const auto model = fit_masked_model(ds, g, mc);
  Rng rng(12);
  std::uniform_real_distribution<double> bump(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index row = static_cast<Eigen::Index>(trial * 37);
    const Eigen::VectorXd s = ds.states().row(row), a = ds.actions().row(row);
    const auto base = model.predict(s, a);
    for (std::size_t i = 0; i < 7; ++i) {
      Eigen::VectorXd s2 = s, a2 = a;
      if (i < 6) s2(static_cast<Eigen::Index>(i)) += bump(rng);
      else a2(0) += bump(rng);
      const auto moved = model.predict(s2, a2);
      for (std::size_t j = 0; j < 7; ++j) {
        if (g.edge(i, j)) continue;
        const double before = j < 6 ? base.next_state(static_cast<Eigen::Index>(j)) : base.reward;
        const double after = j < 6 ? moved.next_state(static_cast<Eigen::Index>(j)) : moved.reward;
        if (before != after) return fmt("non-parent input %zu changed target %zu", i, j);
      }
    }
  }
  return {};
}

std::string check_kinematic_identity() {
  const car::CarParams p;
  Rng rng(13);
  std::uniform_real_distribution<double> u(-p.max_steer, p.max_steer);
  auto s = car::CarState::kinematic(0.2, 0.9, 0.0, 0.0);
  for (int t = 0; t < 5000; ++t) {
    s = car::car_step(s, u(rng), p, &rng).next;
    if (std::abs(s.v_x * s.v_x + s.v_y * s.v_y - s.v * s.v) > 1e-9) return fmt("identity broken at step %d", t);
  }
  return {};
}

std::string check_graph_vs_dynamics() {
  const car::CarParams p = car::CarParams{}.noiseless();
  const auto g = car::ground_truth_graph(p);
  Rng rng(14);
  std::uniform_real_distribution<double> ang(-3.0, 3.0), spd(0.2, 1.5), pos(-5.0, 5.0), steer(-1.4, 1.4);
  std::vector<std::vector<int>> moved(7, std::vector<int>(7, 0));
  auto targets = [&](const Eigen::VectorXd& x) {
    const auto out = car::car_step(car::CarState::from_vector(x.head(6)), x(6), p, nullptr);
    Eigen::VectorXd t(7);
    t << out.next.to_vector(), out.reward;
    return t;
  };
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd x(7);
    x << ang(rng), spd(rng), spd(rng), spd(rng), pos(rng), pos(rng), steer(rng);
    const Eigen::VectorXd base = targets(x);
    for (Eigen::Index i = 0; i < 7; ++i) {
      Eigen::VectorXd y = x;
      y(i) += 0.1;
      const Eigen::VectorXd d = targets(y) - base;
      for (Eigen::Index j = 0; j < 7; ++j) {
        if (!g.edge(std::size_t(i), std::size_t(j)) && d(j) != 0.0)
          return fmt("input %d moves target %d without an edge", int(i), int(j));
        moved[std::size_t(i)][std::size_t(j)] += d(j) != 0.0;
      }
    }
  }
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j)
      if (g.edge(i, j) && moved[i][j] == 0) return fmt("edge %zu -> %zu never exercised", i, j);
  return {};
}

std::string check_round_trips() {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "focus_acceptance";
  fs::create_directories(dir);
  const auto ds = car::generate_offline_data(car::DataKind::Medium, 2000, {}, 15);
  const auto file = (dir / "data.jsonl").string();
  write_dataset(ds, file);
  if (!(read_dataset(file) == ds)) return "dataset file round trip";
  const auto g = car::ground_truth_graph();
  if (!(graph_from_json(Json::parse(graph_to_json(g).dump())) == g)) return "graph round trip";
  ModelConfig mc = car_model_config();
  mc.mlp.steps = 200;
  for (auto kind : {ModelKind::LinearRidge, ModelKind::Mlp}) {
    mc.kind = kind;
    const auto model = fit_masked_model(ds, g, mc);
    const auto j = model_to_json(model);
    if (model_to_json(model_from_json(Json::parse(j.dump()))) != j) return "model round trip (" + to_string(kind) + ")";
  }
  const car::CarParams p;
  if (car::params_to_json(car::params_from_json(car::params_to_json(p))) != car::params_to_json(p))
    return "car params round trip";
  const auto pc = policy_pipeline();
  if (pipeline_config_to_json(pipeline_config_from_json(pipeline_config_to_json(pc))) != pipeline_config_to_json(pc))
    return "pipeline config round trip";
  fs::remove_all(dir);
  return {};
}

std::string check_determinism() {
  for (auto kind : {car::DataKind::Random, car::DataKind::Medium, car::DataKind::MediumReplay})
    if (!(car::generate_offline_data(kind, 2000, {}, 16) == car::generate_offline_data(kind, 2000, {}, 16)))
      return "data generation (" + car::to_string(kind) + ")";
  const auto ds = car::generate_offline_data(car::DataKind::Random, 2000, {}, 17);
  StructureConfig sc;
  sc.kci.max_test_samples = 300;
  sc.kci.seed = 3;
  const auto s1 = learn_structure(ds, sc), s2 = learn_structure(ds, sc);
  if (!(s1.graph == s2.graph) || s1.threshold.p_star != s2.threshold.p_star) return "structure learning";
  const auto m1 = fit_masked_model(ds, s1.graph, car_model_config());
  const auto m2 = fit_masked_model(ds, s1.graph, car_model_config());
  if (model_to_json(m1) != model_to_json(m2)) return "model fitting";
  PipelineConfig pc = policy_pipeline();
  pc.structure = sc;
  pc.planner.method = CrossEntropy{100, 10, 3};
  pc.eval_episodes = 2;
  if (run_pipeline(ds, pc, 4).evaluation.returns != run_pipeline(ds, pc, 4).evaluation.returns) return "policy evaluation";
  return {};
}

Outcome invariants() {
  const std::vector<std::pair<const char*, std::function<std::string()>>> checks{
      {"mask enforcement", check_mask_enforcement}, {"kinematic identity", check_kinematic_identity},
      {"graph vs dynamics", check_graph_vs_dynamics}, {"serialization", check_round_trips},
      {"seed determinism", check_determinism}};
  std::string failures;
  for (const auto& [name, fn] : checks) {
    std::string msg;
    try {
      msg = fn();
    } catch (const std::exception& e) {
      msg = std::string("threw: ") + e.what();
    }
    if (!msg.empty()) failures += std::string(failures.empty() ? "" : "; ") + name + ": " + msg;
  }
  return {failures.empty(), failures.empty() ? "mask, kinematics, graph, serialization, determinism all hold" : failures};
}

}  // namespace

int main() {
  int gating_failures = 0, reported_failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o, bool gating) {
    std::printf("[%s] criterion %d: %s: %s\n", o.passed ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.passed) ++(gating ? gating_failures : reported_failures);
  };
  auto guarded = [](auto&& fn) -> Outcome {
    try {
      return fn();
    } catch (const std::exception& e) {
      return {false, std::string("threw: ") + e.what()};
    }
  };

  report(1, "lambda lemma", guarded(lambda_lemma), true);
  report(2, "lambda bounded by one half", guarded(proposition), true);
  report(3, "collinear equivalence", guarded([] { return suite_outcome("lemma1"); }), true);
  report(4, "spurious error bound", guarded([] { return suite_outcome("thm1"); }), true);
  report(5, "offline RL bound on small MDP", guarded([] { return suite_outcome("thm2"); }), true);

  std::vector<double> acc_focus, acc_cond, acc_lin;
  double focus_secs = 0.0;
  const auto structure_ok = guarded([&] { return structure_accuracy_run(&acc_focus, &acc_cond, &acc_lin, &focus_secs); });
  if (acc_focus.size() == 5) {
    const auto [mf, sf] = mean_sd(acc_focus);
    const auto [mc, sc] = mean_sd(acc_cond);
    const auto [ml, sl] = mean_sd(acc_lin);
    report(6, "structure accuracy on Random data",
           {mf >= 0.95 && sf <= 0.05 && focus_secs < 300.0,
            fmt("mean %.4f (target >= 0.95), sd %.4f, %.0f s for 5 seeds", mf, sf, focus_secs)},
           false);
    report(7, "ablation ordering",
           {mf > mc && mf > ml, fmt("focus %.4f, -condition %.4f (sd %.4f), -kci %.4f (sd %.4f)", mf, mc, sc, ml, sl)},
           false);
  } else {
    report(6, "structure accuracy on Random data", structure_ok, false);
    report(7, "ablation ordering", structure_ok, false);
  }

  report(8, "KCI calibration", guarded(kci_calibration), true);
  double policy_secs = 0.0;
  report(9, "policy ordering", guarded([&] { return policy_ordering(&policy_secs); }), false);
  report(10, "mixture sweep", guarded(mixture_sweep), false);
  report(11, "mechanical invariants", guarded(invariants), true);

  std::printf("summary: %d gating failure(s), %d reported-only failure(s)\n", gating_failures, reported_failures);
  return gating_failures == 0 ? 0 : 1;
}
