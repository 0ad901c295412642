// focus: command-line front end for data generation, structure learning,
// policy training and evaluation, theory checks and experiment sweeps.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 theory-bound
// violation. Every command writes its resolved options as JSON next to its
// outputs; `focus --replay that.json` reruns it.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "focus/car_env.hpp"
#include "focus/data.hpp"
#include "focus/offline_rl.hpp"
#include "focus/structure.hpp"
#include "focus/theory.hpp"
#include "focus/world_model.hpp"

namespace fs = std::filesystem;
using namespace focus;

namespace {

constexpr int kExitOk = 0, kExitRuntime = 1, kExitUsage = 2, kExitTheory = 3;

struct UsageError : Error {
  using Error::Error;
};

car::CarParams load_params(const std::string& path) {
  return path.empty() ? car::CarParams{} : car::params_from_json(read_json_file(path));
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

void write_config(const std::string& command, const Json& options, const std::string& path) {
  write_json_file(Json{{"command", command}, {"options", options}}, path);
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const auto comma = list.find(',', pos);
    const std::string tok = list.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("--seeds expects a comma-separated list of non-negative integers, got '" + list + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// gen-data

struct GenDataOptions {
  std::string kind = "random";
  std::size_t n = 20000;
  std::string out;
  std::uint64_t seed = 0;
  car::CarParams car;
};

Json to_json(const GenDataOptions& o) {
  return Json{{"kind", o.kind}, {"n", o.n}, {"out", o.out}, {"seed", o.seed}, {"car", car::params_to_json(o.car)}};
}

GenDataOptions gen_data_from_json(const Json& j) {
  GenDataOptions o;
  o.kind = j.at("kind").get<std::string>();
  o.n = j.at("n").get<std::size_t>();
  o.out = j.at("out").get<std::string>();
  o.seed = j.at("seed").get<std::uint64_t>();
  o.car = car::params_from_json(j.at("car"));
  return o;
}

int run_gen_data(const GenDataOptions& o) {
  if (o.n < 1) throw UsageError("--n must be >= 1 (a dataset needs at least one transition)");
  const auto kind = car::data_kind_from_string(o.kind);
  const auto ds = car::generate_offline_data(kind, o.n, o.car, o.seed);
  write_dataset(ds, o.out);
  car::write_heatmap_csv(car::occupancy_heatmap(ds, o.car.arena), o.car.arena, o.out + ".heatmap.csv");
  write_config("gen-data", to_json(o), o.out + ".config.json");
  std::cout << "wrote " << ds.size() << " " << o.kind << " transitions to " << o.out << "\n";
  return kExitOk;
}

// learn-structure

struct LearnOptions {
  std::string data;
  std::string out;
  bool truth = false;
  StructureConfig structure;
};

Json to_json(const LearnOptions& o) {
  return Json{{"data", o.data}, {"out", o.out}, {"truth", o.truth}, {"structure", structure_config_to_json(o.structure)}};
}

LearnOptions learn_from_json(const Json& j) {
  LearnOptions o;
  o.data = j.at("data").get<std::string>();
  o.out = j.at("out").get<std::string>();
  o.truth = j.value("truth", false);
  o.structure = structure_config_from_json(j.at("structure"));
  return o;
}

int run_learn_structure(const LearnOptions& o) {
  const auto ds = read_dataset(o.data);
  const std::size_t minimum = 50;
  if (ds.size() < minimum)
    throw UsageError("structure learning needs at least " + std::to_string(minimum) + " transitions, '" + o.data +
                     "' has " + std::to_string(ds.size()));
  const auto learned = learn_structure(ds, o.structure);
  Json j{{"graph", graph_to_json(learned.graph)},
         {"pvalues", pvalues_to_json(learned.pvalues)},
         {"threshold", threshold_to_json(learned.threshold)}};
  std::cout << "p* = " << learned.threshold.p_star << ", " << learned.graph.edge_count() << " edges\n";
  if (o.truth) {
    if (!(ds.schema() == car::car_schema())) throw UsageError("--truth needs a car dataset");
    const auto score = structure_accuracy(learned.graph, car::ground_truth_graph());
    j["accuracy"] = score.accuracy;
    j["precision"] = score.precision;
    j["recall"] = score.recall;
    std::cout << "accuracy " << score.accuracy << " (precision " << score.precision << ", recall " << score.recall
              << ")\n";
  }
  write_json_file(j, o.out);
  write_config("learn-structure", to_json(o), o.out + ".config.json");
  return kExitOk;
}

// train-policy

struct TrainOptions {
  std::string data;
  std::string graph;
  bool plain = false;
  std::string out;
  std::uint64_t seed = 0;
  ModelConfig model = car_model_config();
  PessimismConfig pessimism;
  PlannerConfig planner;
  car::CarParams car;
};

Json to_json(const TrainOptions& o) {
  return Json{{"data", o.data},
              {"graph", o.graph},
              {"plain", o.plain},
              {"out", o.out},
              {"seed", o.seed},
              {"model", model_config_to_json(o.model)},
              {"pessimism", pessimism_to_json(o.pessimism)},
              {"planner", planner_to_json(o.planner)},
              {"car", car::params_to_json(o.car)}};
}

TrainOptions train_from_json(const Json& j) {
  TrainOptions o;
  o.data = j.at("data").get<std::string>();
  o.graph = j.value("graph", std::string());
  o.plain = j.value("plain", false);
  o.out = j.at("out").get<std::string>();
  o.seed = j.at("seed").get<std::uint64_t>();
  o.model = model_config_from_json(j.at("model"));
  o.pessimism = pessimism_from_json(j.at("pessimism"));
  o.planner = planner_from_json(j.at("planner"));
  o.car = car::params_from_json(j.at("car"));
  return o;
}

std::string schema_text(const DimensionSchema& s) {
  auto names = [](const std::vector<std::string>& v) {
    std::string out;
    for (const auto& n : v) out += (out.empty() ? "" : ",") + n;
    return out;
  };
  return "states [" + names(s.state_names) + "], actions [" + names(s.action_names) + "], reward " + s.reward_name;
}

int run_train_policy(const TrainOptions& o) {
  if (o.plain == !o.graph.empty()) throw UsageError("train-policy needs exactly one of --graph or --plain");
  const auto ds = read_dataset(o.data);
  CausalGraph graph = CausalGraph::full(ds.schema());
  if (!o.plain) {
    const Json gj = read_json_file(o.graph);
    graph = graph_from_json(gj.contains("graph") ? gj.at("graph") : gj);
    if (!(graph.schema() == ds.schema()))
      throw UsageError("graph '" + o.graph + "' has " + schema_text(graph.schema()) + " but dataset '" + o.data +
                       "' has " + schema_text(ds.schema()));
  }
  ModelConfig mc = o.model;
  mc.seed = derive_seed(o.seed, 0x6d6f64);
  const auto model = fit_masked_model(ds, graph, mc);
  PlannerConfig pc = o.planner;
  if (pc.action_low.size() == 0) {
    const auto c = car_planner_config(o.car);
    pc.action_low = c.action_low;
    pc.action_high = c.action_high;
  }
  pc.validate(o.pessimism);
  ensure_dir(o.out);
  write_json_file(model_to_json(model), (fs::path(o.out) / "model.json").string());
  write_json_file(Json{{"planner", planner_to_json(pc)},
                       {"pessimism", pessimism_to_json(o.pessimism)},
                       {"car", car::params_to_json(o.car)},
                       {"seed", o.seed}},
                  (fs::path(o.out) / "policy.json").string());
  write_config("train-policy", to_json(o), (fs::path(o.out) / "config.json").string());
  std::cout << "model with " << graph.edge_count() << " input edges written to " << o.out << "\n";
  return kExitOk;
}

// evaluate

struct EvaluateOptions {
  std::string policy;
  std::size_t episodes = 5;
  bool noiseless = false;
};

Json to_json(const EvaluateOptions& o) {
  return Json{{"policy", o.policy}, {"episodes", o.episodes}, {"noiseless", o.noiseless}};
}

EvaluateOptions evaluate_from_json(const Json& j) {
  EvaluateOptions o;
  o.policy = j.at("policy").get<std::string>();
  o.episodes = j.at("episodes").get<std::size_t>();
  o.noiseless = j.value("noiseless", false);
  return o;
}

int run_evaluate(const EvaluateOptions& o) {
  if (o.episodes < 1) throw UsageError("--episodes must be >= 1");
  const fs::path dir(o.policy);
  const auto model = model_from_json(read_json_file((dir / "model.json").string()));
  const Json spec = read_json_file((dir / "policy.json").string());
  car::CarParams env = car::params_from_json(spec.at("car"));
  if (o.noiseless) env = env.noiseless();
  const auto eval = evaluate_mpc(model, planner_from_json(spec.at("planner")), pessimism_from_json(spec.at("pessimism")),
                                 env, o.episodes, spec.at("seed").get<std::uint64_t>());
  Json j{{"mean_return", eval.mean_return}, {"sd", eval.sd}, {"returns", eval.returns}, {"aborted", eval.aborted}};
  write_json_file(j, (dir / "evaluation.json").string());
  std::ofstream csv(dir / "evaluation.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write evaluation.csv in '" + o.policy + "'");
  csv << "episode,return\n";
  for (std::size_t i = 0; i < eval.returns.size(); ++i) csv << i << ',' << eval.returns[i] << '\n';
  csv << "mean," << eval.mean_return << "\nsd," << eval.sd << '\n';
  write_config("evaluate", to_json(o), (dir / "evaluate.config.json").string());
  std::cout << "return " << eval.mean_return << " +- " << eval.sd << " over " << o.episodes << " episodes\n";
  return kExitOk;
}

// verify-theory

struct TheoryOptions {
  std::string suite = "all";
  std::string out = "theory";
  std::uint64_t seed = 0;
};

Json to_json(const TheoryOptions& o) { return Json{{"suite", o.suite}, {"out", o.out}, {"seed", o.seed}}; }

TheoryOptions theory_from_json(const Json& j) {
  TheoryOptions o;
  o.suite = j.at("suite").get<std::string>();
  o.out = j.at("out").get<std::string>();
  o.seed = j.at("seed").get<std::uint64_t>();
  return o;
}

int run_verify_theory(const TheoryOptions& o) {
  const auto rep = theory::run_theory_suite(o.suite, o.seed);
  ensure_dir(o.out);
  write_json_file(theory::theory_report_to_json(rep), (fs::path(o.out) / "theory_report.json").string());
  const std::string text = theory::theory_report_text(rep);
  std::ofstream((fs::path(o.out) / "theory_report.txt").string(), std::ios::trunc) << text;
  write_config("verify-theory", to_json(o), (fs::path(o.out) / "config.json").string());
  std::cout << text;
  return rep.all_passed() ? kExitOk : kExitTheory;
}

// experiment

struct ExperimentOptions {
  std::string variant = "focus";  // focus | plain | truth
  std::string out = "experiment";
  ExperimentConfig config;
};

Json to_json(const ExperimentOptions& o) {
  return Json{{"variant", o.variant},
              {"out", o.out},
              {"dataset", car::to_string(o.config.dataset)},
              {"n", o.config.n_transitions},
              {"seeds", o.config.seeds},
              {"pipeline", pipeline_config_to_json(o.config.pipeline)}};
}

ExperimentOptions experiment_from_json(const Json& j) {
  ExperimentOptions o;
  o.variant = j.at("variant").get<std::string>();
  o.out = j.at("out").get<std::string>();
  o.config.dataset = car::data_kind_from_string(j.at("dataset").get<std::string>());
  o.config.n_transitions = j.at("n").get<std::size_t>();
  o.config.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  o.config.pipeline = pipeline_config_from_json(j.at("pipeline"));
  return o;
}

void apply_variant(ExperimentOptions& o) {
  auto& p = o.config.pipeline;
  if (o.variant == "plain") {
    p.use_causal_graph = false;
    p.fixed_graph.reset();
  } else if (o.variant == "truth") {
    p.fixed_graph = car::ground_truth_graph(p.car);
  } else if (o.variant != "focus") {
    throw UsageError("--variant must be focus, plain or truth");
  }
}

int run_experiment(const ExperimentOptions& o) {
  if (o.config.n_transitions < 1) throw UsageError("--n must be >= 1");
  if (o.config.seeds.empty()) throw UsageError("--seeds must list at least one seed");
  const auto rep = run_focus_experiment(o.config);
  ensure_dir(o.out);
  write_json_file(report_to_json(rep), (fs::path(o.out) / "report.json").string());
  write_report_csv({rep}, (fs::path(o.out) / "report.csv").string());
  write_config("experiment", to_json(o), (fs::path(o.out) / "config.json").string());
  std::cout << rep.label << ": return " << rep.mean_return << " +- " << rep.sd_return;
  if (rep.mean_accuracy) std::cout << ", structure accuracy " << *rep.mean_accuracy << " +- " << *rep.sd_accuracy;
  std::cout << "\n";
  return kExitOk;
}

// mixture-sweep

struct SweepOptions {
  std::string out = "sweep";
  SweepConfig config;
};

Json to_json(const SweepOptions& o) {
  return Json{{"out", o.out},
              {"fractions", o.config.fractions},
              {"seeds", o.config.seeds},
              {"n_medium", o.config.n_medium},
              {"n_replay", o.config.n_replay},
              {"pipeline", pipeline_config_to_json(o.config.pipeline)}};
}

SweepOptions sweep_from_json(const Json& j) {
  SweepOptions o;
  o.out = j.at("out").get<std::string>();
  o.config.fractions = j.at("fractions").get<std::vector<double>>();
  o.config.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  o.config.n_medium = j.at("n_medium").get<std::size_t>();
  o.config.n_replay = j.at("n_replay").get<std::size_t>();
  o.config.pipeline = pipeline_config_from_json(j.at("pipeline"));
  return o;
}

int run_sweep(const SweepOptions& o) {
  if (o.config.seeds.empty()) throw UsageError("--seeds must list at least one seed");
  const auto rep = run_mixture_sweep(o.config);
  ensure_dir(o.out);
  write_json_file(sweep_to_json(rep), (fs::path(o.out) / "sweep.json").string());
  write_sweep_csv(rep, (fs::path(o.out) / "sweep.csv").string());
  write_config("mixture-sweep", to_json(o), (fs::path(o.out) / "config.json").string());
  for (const auto& p : rep.points)
    std::cout << "fraction " << p.fraction << ": focus " << p.focus.mean_return << ", plain " << p.plain.mean_return
              << "\n";
  return kExitOk;
}

int replay(const std::string& path) {
  const Json cfg = read_json_file(path);
  if (!cfg.contains("command") || !cfg.contains("options"))
    throw UsageError("'" + path + "' is not a config written by focus (needs command and options)");
  const auto cmd = cfg.at("command").get<std::string>();
  const Json& o = cfg.at("options");
  try {
    if (cmd == "gen-data") return run_gen_data(gen_data_from_json(o));
    if (cmd == "learn-structure") return run_learn_structure(learn_from_json(o));
    if (cmd == "train-policy") return run_train_policy(train_from_json(o));
    if (cmd == "evaluate") return run_evaluate(evaluate_from_json(o));
    if (cmd == "verify-theory") return run_verify_theory(theory_from_json(o));
    if (cmd == "experiment") return run_experiment(experiment_from_json(o));
    if (cmd == "mixture-sweep") return run_sweep(sweep_from_json(o));
  } catch (const Json::exception& e) {
    throw UsageError("malformed options in '" + path + "': " + e.what());
  }
  throw UsageError("unknown command '" + cmd + "' in '" + path + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FOCUS: causal structure learning and pessimistic model-based offline RL on a toy car"};
  app.require_subcommand(0, 1);
  unsigned jobs = 0;
  std::string replay_path;
  app.add_option("--jobs", jobs, "Worker threads (default: FOCUS_JOBS or all cores)");
  app.add_option("--replay", replay_path, "Rerun a command from the config JSON it wrote");

  const std::vector<std::string> kinds{"random", "medium", "medium-replay"};
  std::string params_path;

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate an offline car dataset and its occupancy heatmap");
  gen_cmd->add_option("--kind", gen.kind, "Behaviour policy")->check(CLI::IsMember(kinds));
  gen_cmd->add_option("--n", gen.n, "Number of transitions");
  gen_cmd->add_option("--out", gen.out, "Output dataset path (JSON lines)")->required();
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--params", params_path, "Car parameter JSON");

  LearnOptions learn;
  std::string rule = "focus", test = "kci";
  auto* learn_cmd = app.add_subcommand("learn-structure", "Learn the causal mask from a dataset");
  learn_cmd->add_option("--data", learn.data, "Dataset path")->required();
  learn_cmd->add_option("--rule", rule, "Conditioning rule")->check(CLI::IsMember({"focus", "all", "none"}));
  learn_cmd->add_option("--test", test, "Independence test")->check(CLI::IsMember({"kci", "linear"}));
  learn_cmd->add_option("--out", learn.out, "Output JSON (graph, p-values, threshold)")->required();
  learn_cmd->add_flag("--truth", learn.truth, "Score against the true car graph");
  learn_cmd->add_option("--max-test-samples", learn.structure.kci.max_test_samples, "Rows used per test");
  learn_cmd->add_option("--seed", learn.structure.kci.seed, "Subsampling seed");

  TrainOptions train;
  std::string model_kind = to_string(train.model.kind);
  auto* train_cmd = app.add_subcommand("train-policy", "Fit the masked world-model and freeze the planner");
  train_cmd->add_option("--data", train.data, "Dataset path")->required();
  auto* graph_opt = train_cmd->add_option("--graph", train.graph, "Graph JSON from learn-structure");
  auto* plain_opt = train_cmd->add_flag("--plain", train.plain, "Use the all-ones mask");
  graph_opt->excludes(plain_opt);
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--seed", train.seed, "Model and planner seed");
  train_cmd->add_option("--model", model_kind, "Model kind")->check(CLI::IsMember({"linear", "mlp", "auto"}));
  train_cmd->add_option("--ensemble", train.model.ensemble_size, "Ensemble size");
  train_cmd->add_option("--penalty", train.pessimism.penalty_coefficient, "Uncertainty penalty coefficient");
  train_cmd->add_option("--params", params_path, "Car parameter JSON");

  EvaluateOptions evaluate;
  auto* eval_cmd = app.add_subcommand("evaluate", "Run a trained policy in the true simulator");
  eval_cmd->add_option("--policy", evaluate.policy, "Directory written by train-policy")->required();
  eval_cmd->add_option("--episodes", evaluate.episodes, "Evaluation episodes");
  eval_cmd->add_flag("--noiseless", evaluate.noiseless, "Disable process noise");

  TheoryOptions theory_opts;
  auto* theory_cmd = app.add_subcommand("verify-theory", "Numerically check the leakage lemma and error bounds");
  theory_cmd->add_option("--suite", theory_opts.suite, "Suite")
      ->check(CLI::IsMember({"lambda", "lemma1", "prop1", "thm1", "thm2", "all"}));
  theory_cmd->add_option("--out", theory_opts.out, "Report directory");
  theory_cmd->add_option("--seed", theory_opts.seed, "Random seed");

  ExperimentOptions exp;
  std::string exp_kind = "random", exp_seeds = "0,1,2,3,4", exp_rule = "focus", exp_test = "kci";
  auto* exp_cmd = app.add_subcommand("experiment", "Full pipeline over several seeds");
  exp_cmd->add_option("--dataset", exp_kind, "Dataset kind")->check(CLI::IsMember(kinds));
  exp_cmd->add_option("--n", exp.config.n_transitions, "Transitions per seed");
  exp_cmd->add_option("--seeds", exp_seeds, "Comma-separated seeds");
  exp_cmd->add_option("--variant", exp.variant, "focus, plain (all-ones mask) or truth (true graph)")
      ->check(CLI::IsMember({"focus", "plain", "truth"}));
  exp_cmd->add_option("--rule", exp_rule, "Conditioning rule")->check(CLI::IsMember({"focus", "all", "none"}));
  exp_cmd->add_option("--test", exp_test, "Independence test")->check(CLI::IsMember({"kci", "linear"}));
  exp_cmd->add_option("--episodes", exp.config.pipeline.eval_episodes, "Evaluation episodes per seed");
  exp_cmd->add_option("--out", exp.out, "Output directory");
  exp_cmd->add_option("--params", params_path, "Car parameter JSON");

  SweepOptions sweep;
  std::string sweep_seeds = "0,1,2";
  auto* sweep_cmd = app.add_subcommand("mixture-sweep", "Medium plus a growing share of Medium-Replay");
  sweep_cmd->add_option("--fractions", sweep.config.fractions, "Replay fractions")->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep_seeds, "Comma-separated seeds");
  sweep_cmd->add_option("--episodes", sweep.config.pipeline.eval_episodes, "Evaluation episodes per run");
  sweep_cmd->add_option("--out", sweep.out, "Output directory");
  sweep_cmd->add_option("--params", params_path, "Car parameter JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (jobs > 0) job_limit() = jobs;
    if (!replay_path.empty()) {
      if (!app.get_subcommands().empty()) throw UsageError("--replay cannot be combined with a subcommand");
      return replay(replay_path);
    }
    if (app.get_subcommands().empty()) {
      std::cout << app.help();
      return kExitUsage;
    }
    if (*gen_cmd) {
      gen.car = load_params(params_path);
      return run_gen_data(gen);
    }
    if (*learn_cmd) {
      learn.structure.rule = conditioning_rule_from_string(rule);
      learn.structure.test = ci_test_from_string(test);
      return run_learn_structure(learn);
    }
    if (*train_cmd) {
      train.model.kind = model_kind_from_string(model_kind);
      train.car = load_params(params_path);
      return run_train_policy(train);
    }
    if (*eval_cmd) return run_evaluate(evaluate);
    if (*theory_cmd) return run_verify_theory(theory_opts);
    if (*exp_cmd) {
      exp.config.dataset = car::data_kind_from_string(exp_kind);
      exp.config.seeds = parse_seeds(exp_seeds);
      exp.config.pipeline.car = load_params(params_path);
      exp.config.pipeline.structure.rule = conditioning_rule_from_string(exp_rule);
      exp.config.pipeline.structure.test = ci_test_from_string(exp_test);
      apply_variant(exp);
      return run_experiment(exp);
    }
    if (*sweep_cmd) {
      sweep.config.seeds = parse_seeds(sweep_seeds);
      sweep.config.pipeline.car = load_params(params_path);
      return run_sweep(sweep);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
