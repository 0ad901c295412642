#pragma once

// Toy 2D car-driving simulator with a known causal graph, plus the three
// behaviour policies used to build offline datasets.
//
// Dynamics (one step, dt = 1):
//   d'   = wrap(d + a + n_d)
//   v'   = max(0, decay * v + n_v)
//   v_x' = v' cos(d' + s) + n_vx     v_y' = v' sin(d' + s) + n_vy
// s is a sideslip angle: the velocity vector deviates from the heading
// without changing its length, so v_x^2 + v_y^2 = v^2 survives the noise
// when n_vx = n_vy = 0.
//   p_x' = clip(p_x + v_x + n_px)    p_y' = clip(p_y + v_y + n_py)
//   r    = -|p' - goal| + bonus * [|p' - goal| <= goal_radius]
// Positions advance with the time-t velocity components.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "focus/common.hpp"
#include "focus/data.hpp"

namespace focus::car {

inline constexpr std::size_t kStateDim = 6;
inline constexpr std::size_t kActionDim = 1;

enum StateIndex : std::size_t { kD = 0, kV = 1, kVx = 2, kVy = 3, kPx = 4, kPy = 5 };
inline constexpr std::size_t kAction = 6;  // input index of the steering angle
inline constexpr std::size_t kReward = 6;  // target index of the reward

struct CarState {
  double d = 0.0;
  double v = 0.0;
  double v_x = 0.0;
  double v_y = 0.0;
  double p_x = 0.0;
  double p_y = 0.0;

  Eigen::VectorXd to_vector() const {
    Eigen::VectorXd x(6);
    x << d, v, v_x, v_y, p_x, p_y;
    return x;
  }
  static CarState from_vector(const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (x.size() != 6) throw InvalidArgument("car state vector must have 6 entries");
    return {x(0), x(1), x(2), x(3), x(4), x(5)};
  }
  /// State with velocity components consistent with (d, v).
  static CarState kinematic(double d, double v, double px, double py) {
    return {d, v, v * std::cos(d), v * std::sin(d), px, py};
  }
};

struct CarParams {
  double dt = 1.0;
  std::array<double, 2> goal{7.0, 7.0};
  double max_steer = std::numbers::pi / 2.0;
  double speed_decay = 1.0;
  /// Noise standard deviation per state dimension, in CarState order.
  std::array<double, 6> process_noise_sd{0.02, 0.005, 0.0, 0.0, 0.02, 0.02};
  /// Standard deviation of the sideslip angle, radians.
  double slip_sd = 0.45;
  /// Steps per evaluation episode (and per Medium / Medium-Replay episode).
  int horizon = 40;
  /// Steps per Random-policy data episode; short episodes keep Random data near the origin.
  int random_episode_length = 20;
  double start_speed = 0.5;
  /// Width of the uniform interval of start speeds centred on start_speed.
  double start_speed_spread = 0.0;
  /// Evaluation episodes start at a speed drawn uniformly from this range.
  std::array<double, 2> eval_speed{0.5, 1.0};
  double start_radius = 0.5;
  double arena = 10.0;
  double goal_radius = 0.5;
  double goal_bonus = 10.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(max_steer > 0.0)) throw InvalidArgument("CarParams.max_steer must be > 0");
    if (horizon < 1 || random_episode_length < 1) throw InvalidArgument("CarParams episode lengths must be >= 1");
    if (!(speed_decay > 0.0 && speed_decay <= 1.0)) throw InvalidArgument("CarParams.speed_decay must lie in (0,1]");
    for (double sd : process_noise_sd)
      if (!(sd >= 0.0)) throw InvalidArgument("CarParams noise scales must be >= 0");
    if (!(slip_sd >= 0.0)) throw InvalidArgument("CarParams.slip_sd must be >= 0");
    if (!(start_speed >= 0.0 && start_speed_spread >= 0.0 && start_speed_spread <= 2.0 * start_speed))
      throw InvalidArgument("CarParams start speed range must be non-negative");
    if (!(eval_speed[0] >= 0.0 && eval_speed[0] <= eval_speed[1])) throw InvalidArgument("CarParams.eval_speed must be an ordered non-negative range");
    if (!(dt > 0.0)) throw InvalidArgument("CarParams.dt must be > 0");
  }

  CarParams noiseless() const {
    CarParams p = *this;
    p.process_noise_sd.fill(0.0);
    p.slip_sd = 0.0;
    return p;
  }
};

inline Json params_to_json(const CarParams& p) {
  Json j;
  j["dt"] = p.dt;
  j["goal"] = p.goal;
  j["max_steer"] = p.max_steer;
  j["speed_decay"] = p.speed_decay;
  j["process_noise_sd"] = p.process_noise_sd;
  j["slip_sd"] = p.slip_sd;
  j["horizon"] = p.horizon;
  j["random_episode_length"] = p.random_episode_length;
  j["start_speed"] = p.start_speed;
  j["start_speed_spread"] = p.start_speed_spread;
  j["eval_speed"] = p.eval_speed;
  j["start_radius"] = p.start_radius;
  j["arena"] = p.arena;
  j["goal_radius"] = p.goal_radius;
  j["goal_bonus"] = p.goal_bonus;
  j["seed"] = p.seed;
  return j;
}

inline CarParams params_from_json(const Json& j) {
  CarParams p;
  p.dt = j.value("dt", p.dt);
  p.goal = j.value("goal", p.goal);
  p.max_steer = j.value("max_steer", p.max_steer);
  p.speed_decay = j.value("speed_decay", p.speed_decay);
  p.process_noise_sd = j.value("process_noise_sd", p.process_noise_sd);
  p.slip_sd = j.value("slip_sd", p.slip_sd);
  p.horizon = j.value("horizon", p.horizon);
  p.random_episode_length = j.value("random_episode_length", p.random_episode_length);
  p.start_speed = j.value("start_speed", p.start_speed);
  p.start_speed_spread = j.value("start_speed_spread", p.start_speed_spread);
  p.eval_speed = j.value("eval_speed", p.eval_speed);
  p.start_radius = j.value("start_radius", p.start_radius);
  p.arena = j.value("arena", p.arena);
  p.goal_radius = j.value("goal_radius", p.goal_radius);
  p.goal_bonus = j.value("goal_bonus", p.goal_bonus);
  p.seed = j.value("seed", p.seed);
  p.validate();
  return p;
}

inline DimensionSchema car_schema() {
  return DimensionSchema{{"d", "v", "v_x", "v_y", "p_x", "p_y"}, {"a"}, "r"};
}

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double x) {
  double r = std::remainder(x, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

inline std::atomic<std::uint64_t>& steering_clip_events() {
  static std::atomic<std::uint64_t> count{0};
  return count;
}

struct StepResult {
  CarState next;
  double reward = 0.0;
  bool steering_clipped = false;
};

inline double goal_reward(const CarParams& p, double px, double py) {
  const double dist = std::hypot(px - p.goal[0], py - p.goal[1]);
  return -dist + (dist <= p.goal_radius ? p.goal_bonus : 0.0);
}

/// One simulator step. `rng == nullptr` runs the noiseless dynamics.
inline StepResult car_step(const CarState& s, double a, const CarParams& p, Rng* rng) {
  StepResult out;
  if (std::abs(a) > p.max_steer) {
    a = std::clamp(a, -p.max_steer, p.max_steer);
    out.steering_clipped = true;
    ++steering_clip_events();
  }
  std::array<double, 6> eta{};
  double slip = 0.0;
  if (rng) {
    for (std::size_t k = 0; k < 6; ++k) {
      if (p.process_noise_sd[k] > 0.0) eta[k] = std::normal_distribution<double>(0.0, p.process_noise_sd[k])(*rng);
    }
    if (p.slip_sd > 0.0) slip = std::normal_distribution<double>(0.0, p.slip_sd)(*rng);
  }
  CarState& n = out.next;
  n.d = wrap_angle(s.d + a + eta[kD]);
  n.v = std::max(0.0, p.speed_decay * s.v + eta[kV]);
  n.v_x = n.v * std::cos(n.d + slip) + eta[kVx];
  n.v_y = n.v * std::sin(n.d + slip) + eta[kVy];
  n.p_x = std::clamp(s.p_x + p.dt * s.v_x + eta[kPx], -p.arena, p.arena);
  n.p_y = std::clamp(s.p_y + p.dt * s.v_y + eta[kPy], -p.arena, p.arena);
  out.reward = goal_reward(p, n.p_x, n.p_y);
  return out;
}

/// Parent mask implied by car_step.
inline CausalGraph ground_truth_graph(const CarParams& = {}) {
  auto g = CausalGraph::empty(car_schema());
  g.set_edge(kD, kD, true);
  g.set_edge(kAction, kD, true);
  g.set_edge(kV, kV, true);
  for (std::size_t t : {std::size_t(kVx), std::size_t(kVy)}) {
    g.set_edge(kV, t, true);
    g.set_edge(kD, t, true);
    g.set_edge(kAction, t, true);
  }
  g.set_edge(kPx, kPx, true);
  g.set_edge(kVx, kPx, true);
  g.set_edge(kPy, kPy, true);
  g.set_edge(kVy, kPy, true);
  for (std::size_t i : {std::size_t(kPx), std::size_t(kPy), std::size_t(kVx), std::size_t(kVy)})
    g.set_edge(i, kReward, true);
  return g;
}

/// Steering that points the car straight at the goal, saturated at max_steer.
inline double goal_seeking_action(const CarState& s, const CarParams& p, double gain = 1.0) {
  const double want = std::atan2(p.goal[1] - s.p_y, p.goal[0] - s.p_x);
  return std::clamp(gain * wrap_angle(want - s.d), -p.max_steer, p.max_steer);
}

enum class DataKind { Random, Medium, MediumReplay };

inline std::string to_string(DataKind k) {
  switch (k) {
    case DataKind::Random: return "random";
    case DataKind::Medium: return "medium";
    case DataKind::MediumReplay: return "medium-replay";
  }
  return "random";
}

inline DataKind data_kind_from_string(const std::string& s) {
  if (s == "random") return DataKind::Random;
  if (s == "medium") return DataKind::Medium;
  if (s == "medium-replay") return DataKind::MediumReplay;
  throw InvalidArgument("unknown dataset kind '" + s + "' (expected random|medium|medium-replay)");
}

inline SourceTag source_tag(DataKind k) {
  switch (k) {
    case DataKind::Random: return SourceTag::Random;
    case DataKind::Medium: return SourceTag::Medium;
    case DataKind::MediumReplay: return SourceTag::MediumReplay;
  }
  return SourceTag::Synthetic;
}

/// Start state used by evaluation episodes and Random data: near the origin,
/// uniform heading, low speed.
inline CarState sample_start(const CarParams& p, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double r = p.start_radius * std::sqrt(unit(rng));
  const double phi = 2.0 * std::numbers::pi * unit(rng);
  const double d = wrap_angle(2.0 * std::numbers::pi * unit(rng));
  const double v = p.start_speed + p.start_speed_spread * (unit(rng) - 0.5);
  return CarState::kinematic(d, v, r * std::cos(phi), r * std::sin(phi));
}

/// Start state of evaluation episodes: near the origin, uniform heading, speed
/// from the eval_speed range (which may extend past the speeds seen in the
/// offline data).
inline CarState sample_eval_start(const CarParams& p, Rng& rng) {
  CarState s = sample_start(p, rng);
  const double v = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * (p.eval_speed[1] - p.eval_speed[0]) + p.eval_speed[0];
  return CarState::kinematic(s.d, v, s.p_x, s.p_y);
}

namespace detail {

struct Behaviour {
  int episode_length;
  std::function<CarState(Rng&)> start;
  std::function<double(const CarState&, Rng&)> act;
};

inline Behaviour make_behaviour(DataKind kind, const CarParams& p, std::size_t episode, std::size_t n_episodes) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (kind) {
    case DataKind::Random:
      return {p.random_episode_length, [p](Rng& rng) { return sample_start(p, rng); },
              [p](const CarState&, Rng& rng) { return std::uniform_real_distribution<double>(-p.max_steer, p.max_steer)(rng); }};
    case DataKind::Medium:
      // One fixed, under-tuned proportional controller from a single start pose.
      return {p.horizon,
              [p](Rng& rng) {
                std::normal_distribution<double> jitter(0.0, 0.05);
                return CarState::kinematic(jitter(rng), p.start_speed, jitter(rng), jitter(rng));
              },
              [p](const CarState& s, Rng& rng) {
                return std::clamp(goal_seeking_action(s, p, 0.25) + std::normal_distribution<double>(0.0, 0.05)(rng),
                                  -p.max_steer, p.max_steer);
              }};
    case DataKind::MediumReplay: {
      // Controllers improve over the course of "training": gains rise and
      // exploration noise falls with the episode index.
      const double progress = n_episodes > 1 ? double(episode) / double(n_episodes - 1) : 1.0;
      const double gain = 0.1 + 0.9 * progress;
      const double noise = p.max_steer * (0.6 * (1.0 - progress)) + 0.05;
      return {p.horizon,
              [p](Rng& rng) {
                std::uniform_real_distribution<double> pos(-3.0, 3.0), speed(0.2, 1.2), ang(-std::numbers::pi, std::numbers::pi);
                return CarState::kinematic(ang(rng), speed(rng), pos(rng), pos(rng));
              },
              [p, gain, noise](const CarState& s, Rng& rng) {
                return std::clamp(goal_seeking_action(s, p, gain) + std::normal_distribution<double>(0.0, noise)(rng),
                                  -p.max_steer, p.max_steer);
              }};
    }
  }
  throw InvalidArgument("unknown data kind");
}

}  // namespace detail

/// Rolls out the behaviour policy of `kind` until n_transitions are collected.
/// Each episode uses its own RNG stream derived from `seed`.
inline TransitionDataset generate_offline_data(DataKind kind, std::size_t n_transitions, const CarParams& p,
                                               std::uint64_t seed) {
  p.validate();
  if (n_transitions < 1) throw InvalidArgument("n_transitions must be >= 1");
  const int ep_len = kind == DataKind::Random ? p.random_episode_length : p.horizon;
  const std::size_t n_episodes = (n_transitions + std::size_t(ep_len) - 1) / std::size_t(ep_len);
  const auto n = Eigen::Index(n_transitions);
  Eigen::MatrixXd s(n, 6), a(n, 1), sn(n, 6);
  Eigen::VectorXd r(n);
  Eigen::Index row = 0;
  for (std::size_t ep = 0; ep < n_episodes && row < n; ++ep) {
    Rng rng(derive_seed(seed, std::uint64_t(kind) + 1, ep));
    const auto beh = detail::make_behaviour(kind, p, ep, n_episodes);
    CarState st = beh.start(rng);
    for (int t = 0; t < beh.episode_length && row < n; ++t, ++row) {
      const double act = beh.act(st, rng);
      const auto step = car_step(st, act, p, &rng);
      s.row(row) = st.to_vector().transpose();
      a(row, 0) = act;
      sn.row(row) = step.next.to_vector().transpose();
      r(row) = step.reward;
      st = step.next;
    }
  }
  return TransitionDataset(car_schema(), std::move(s), std::move(a), std::move(sn), std::move(r), source_tag(kind));
}

using Policy = std::function<Eigen::VectorXd(const CarState&)>;

struct EvalResult {
  double mean_return = 0.0;
  double sd = 0.0;
  std::vector<double> returns;
  /// Episodes cut short because the policy produced a non-finite action.
  std::size_t aborted = 0;
};

/// Undiscounted Monte-Carlo return over horizon-length episodes in the true simulator.
/// `make_policy(episode)` yields the policy for that episode, so stateful or
/// seeded planners can be restarted per episode.
inline EvalResult evaluate_policy_episodes(const std::function<Policy(std::size_t)>& make_policy, const CarParams& p,
                                           std::size_t n_episodes, std::uint64_t seed) {
  p.validate();
  if (n_episodes < 1) throw InvalidArgument("n_episodes must be >= 1");
  EvalResult res;
  res.returns.assign(n_episodes, 0.0);
  std::vector<char> aborted(n_episodes, 0);
  parallel_for(n_episodes, [&](std::size_t ep) {
    Rng rng(derive_seed(seed, 0x6576616c, ep));
    CarState st = sample_eval_start(p, rng);
    const Policy policy = make_policy(ep);
    double ret = 0.0;
    for (int t = 0; t < p.horizon; ++t) {
      const Eigen::VectorXd act = policy(st);
      if (act.size() != 1 || !std::isfinite(act(0))) {
        aborted[ep] = 1;
        break;
      }
      const auto step = car_step(st, act(0), p, &rng);
      ret += step.reward;
      st = step.next;
    }
    res.returns[ep] = ret;
  });
  double sum = 0.0;
  for (double x : res.returns) sum += x;
  res.mean_return = sum / double(n_episodes);
  if (n_episodes > 1) {
    double ss = 0.0;
    for (double x : res.returns) ss += (x - res.mean_return) * (x - res.mean_return);
    res.sd = std::sqrt(ss / double(n_episodes - 1));
  }
  for (char c : aborted) res.aborted += std::size_t(c);
  return res;
}

inline EvalResult evaluate_policy(const Policy& policy, const CarParams& p, std::size_t n_episodes, std::uint64_t seed) {
  return evaluate_policy_episodes([&](std::size_t) { return policy; }, p, n_episodes, seed);
}

/// Visit counts of (p_x, p_y) over a bins x bins grid spanning the arena.
inline Eigen::MatrixXi occupancy_heatmap(const TransitionDataset& ds, double arena, int bins = 20) {
  Eigen::MatrixXi grid = Eigen::MatrixXi::Zero(bins, bins);
  const auto& s = ds.states();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    auto cell = [&](double v) {
      const int c = int(std::floor((v + arena) / (2.0 * arena) * bins));
      return std::clamp(c, 0, bins - 1);
    };
    ++grid(cell(s(i, kPy)), cell(s(i, kPx)));
  }
  return grid;
}

inline void write_heatmap_csv(const Eigen::MatrixXi& grid, double arena, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const int bins = int(grid.rows());
  out << "p_x_center,p_y_center,count\n";
  for (int iy = 0; iy < bins; ++iy)
    for (int ix = 0; ix < bins; ++ix) {
      const double cx = -arena + (ix + 0.5) * 2.0 * arena / bins;
      const double cy = -arena + (iy + 0.5) * 2.0 * arena / bins;
      out << cx << ',' << cy << ',' << grid(iy, ix) << '\n';
    }
}

}  // namespace focus::car
