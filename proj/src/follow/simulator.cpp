// SPDX-License-Identifier: Apache-2.0
#include "stpotr/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numbers>
#include <ostream>

#include <json.hpp>

#include "stpotr/error.hpp"
#include "stpotr/model.hpp"
#include "stpotr/tensor.hpp"

namespace stpotr {

namespace {

constexpr std::array<std::pair<HumanPath, std::string_view>, 5> kPathNames{{
    {HumanPath::kStraight, "straight"},
    {HumanPath::kSShaped, "s_shaped"},
    {HumanPath::kUShaped, "u_shaped"},
    {HumanPath::kSitStand, "sit_stand"},
    {HumanPath::kStationary, "stationary"},
}};

constexpr std::array<std::pair<RobotStart, std::string_view>, 4> kStartNames{{
    {RobotStart::kFront, "front"},
    {RobotStart::kBehind, "behind"},
    {RobotStart::kLeft, "left"},
    {RobotStart::kRight, "right"},
}};

double dt() { return 1.0 / kControlRateHz; }

}  // namespace

HumanPath parse_human_path(std::string_view name) {
  for (const auto& [p, n] : kPathNames)
    if (n == name) return p;
  throw UsageError("unknown human path '" + std::string(name) +
                   "' (expected straight, s_shaped, u_shaped, sit_stand or stationary)");
}

std::string_view to_string(HumanPath path) {
  for (const auto& [p, n] : kPathNames)
    if (p == path) return n;
  return "?";
}

RobotStart parse_robot_start(std::string_view name) {
  for (const auto& [s, n] : kStartNames)
    if (n == name) return s;
  throw UsageError("unknown robot start '" + std::string(name) + "' (expected front, behind, left or right)");
}

std::string_view to_string(RobotStart start) {
  for (const auto& [s, n] : kStartNames)
    if (s == start) return n;
  return "?";
}

MotionKind motion_kind_for(HumanPath path) {
  switch (path) {
    case HumanPath::kStraight: return MotionKind::kStraightWalk;
    case HumanPath::kSShaped: return MotionKind::kSCurveWalk;
    case HumanPath::kUShaped: return MotionKind::kUTurnWalk;
    case HumanPath::kSitStand: return MotionKind::kSitStand;
    case HumanPath::kStationary: return MotionKind::kStationary;
  }
  throw UsageError("unknown human path");
}

void ScenarioConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw UsageError("scenario: " + msg);
  };
  require(std::isfinite(duration_s) && duration_s >= 0.0, "duration_s must be >= 0");
  require(std::isfinite(human_speed_mps) && human_speed_mps >= 0.0, "human_speed_mps must be >= 0");
  require(std::isfinite(human_start_delay_s) && human_start_delay_s >= 0.0, "human_start_delay_s must be >= 0");
  require(std::isfinite(ahead_distance_m) && ahead_distance_m > 0.0, "ahead_distance_m must be > 0");
  require(follow_band_min_m >= 0.0 && follow_band_max_m > follow_band_min_m, "follow band must satisfy 0 <= min < max");
  require(cone_half_angle_deg > 0.0 && cone_half_angle_deg <= 180.0, "cone_half_angle_deg must be in (0, 180]");
  require(std::isfinite(start_distance_m) && start_distance_m >= 0.0, "start_distance_m must be >= 0");
  require(safety_radius_m >= 0.0 && avoidance_radius_m >= 0.0 && path_clearance_m >= 0.0, "radii must be >= 0");
  require(observation_noise_m >= 0.0, "observation_noise_m must be >= 0");
  require(gains.k_v > 0.0 && gains.k_omega > 0.0 && gains.v_max > 0.0 && gains.omega_max > 0.0,
          "controller gains and limits must be positive");
}

RewardParams ScenarioConfig::reward_params() const {
  RewardParams p;
  p.band_min_m = follow_band_min_m;
  p.band_max_m = follow_band_max_m;
  p.cone_half_angle_rad = cone_half_angle_deg * std::numbers::pi / 180.0;
  return p;
}

SyntheticParams ScenarioConfig::human_params() const {
  SyntheticParams p;
  p.speed_mps = human_speed_mps;
  p.start_delay_s = human_start_delay_s;
  return p;
}

Pose2D ScenarioConfig::initial_robot_pose() const {
  if (robot_start_pose) return *robot_start_pose;
  const Pose2D h = human_ground_pose(*this, 0.0);
  const double c = std::cos(h.theta), s = std::sin(h.theta);
  double fwd = 0.0, lat = 0.0;
  switch (robot_start) {
    case RobotStart::kFront: fwd = start_distance_m; break;
    case RobotStart::kBehind: fwd = -start_distance_m; break;
    case RobotStart::kLeft: lat = start_distance_m; break;
    case RobotStart::kRight: lat = -start_distance_m; break;
  }
  return {h.x + c * fwd - s * lat, h.y + s * fwd + c * lat, h.theta};
}

std::size_t ScenarioConfig::step_count() const {
  return static_cast<std::size_t>(std::llround(duration_s * kControlRateHz));
}

ScenarioConfig scenario_from_key_values(const KeyValues& kv) {
  ScenarioConfig c;
  std::optional<double> sx, sy, st;
  for (const auto& [key, value] : kv) {
    if (key == "human_path") c.human_path = parse_human_path(value);
    else if (key == "robot_start") c.robot_start = parse_robot_start(value);
    else if (key == "duration_s") c.duration_s = kv_double(key, value);
    else if (key == "human_speed_mps") c.human_speed_mps = kv_double(key, value);
    else if (key == "human_start_delay_s") c.human_start_delay_s = kv_double(key, value);
    else if (key == "ahead_distance_m") c.ahead_distance_m = kv_double(key, value);
    else if (key == "follow_band_min_m") c.follow_band_min_m = kv_double(key, value);
    else if (key == "follow_band_max_m") c.follow_band_max_m = kv_double(key, value);
    else if (key == "cone_half_angle_deg") c.cone_half_angle_deg = kv_double(key, value);
    else if (key == "start_distance_m") c.start_distance_m = kv_double(key, value);
    else if (key == "safety_radius_m") c.safety_radius_m = kv_double(key, value);
    else if (key == "avoidance_radius_m") c.avoidance_radius_m = kv_double(key, value);
    else if (key == "path_clearance_m") c.path_clearance_m = kv_double(key, value);
    else if (key == "observation_noise_m") c.observation_noise_m = kv_double(key, value);
    else if (key == "seed") c.seed = kv_size(key, value);
    else if (key == "robot_x") sx = kv_double(key, value);
    else if (key == "robot_y") sy = kv_double(key, value);
    else if (key == "robot_theta") st = kv_double(key, value);
    else if (key == "k_v") c.gains.k_v = kv_double(key, value);
    else if (key == "k_omega") c.gains.k_omega = kv_double(key, value);
    else if (key == "v_max") c.gains.v_max = kv_double(key, value);
    else if (key == "omega_max") c.gains.omega_max = kv_double(key, value);
    else if (key == "arrive_radius") c.gains.arrive_radius = kv_double(key, value);
    else throw UsageError("scenario: unknown key '" + key + "'");
  }
  if (sx || sy || st) {
    if (!(sx && sy)) throw UsageError("scenario: robot_x and robot_y must be given together");
    c.robot_start_pose = Pose2D{*sx, *sy, normalize_angle(st.value_or(0.0))};
  }
  c.validate();
  return c;
}

KeyValues scenario_to_key_values(const ScenarioConfig& c) {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  KeyValues kv{
      {"human_path", std::string(to_string(c.human_path))},
      {"robot_start", std::string(to_string(c.robot_start))},
      {"duration_s", num(c.duration_s)},
      {"human_speed_mps", num(c.human_speed_mps)},
      {"human_start_delay_s", num(c.human_start_delay_s)},
      {"ahead_distance_m", num(c.ahead_distance_m)},
      {"follow_band_min_m", num(c.follow_band_min_m)},
      {"follow_band_max_m", num(c.follow_band_max_m)},
      {"cone_half_angle_deg", num(c.cone_half_angle_deg)},
      {"start_distance_m", num(c.start_distance_m)},
      {"safety_radius_m", num(c.safety_radius_m)},
      {"avoidance_radius_m", num(c.avoidance_radius_m)},
      {"path_clearance_m", num(c.path_clearance_m)},
      {"observation_noise_m", num(c.observation_noise_m)},
      {"seed", std::to_string(c.seed)},
      {"k_v", num(c.gains.k_v)},
      {"k_omega", num(c.gains.k_omega)},
      {"v_max", num(c.gains.v_max)},
      {"omega_max", num(c.gains.omega_max)},
      {"arrive_radius", num(c.gains.arrive_radius)},
  };
  if (c.robot_start_pose) {
    kv["robot_x"] = num(c.robot_start_pose->x);
    kv["robot_y"] = num(c.robot_start_pose->y);
    kv["robot_theta"] = num(c.robot_start_pose->theta);
  }
  return kv;
}

Skeleton scripted_human(const ScenarioConfig& cfg, double t) {
  return synthesize_frame(motion_kind_for(cfg.human_path), t, cfg.human_params());
}

Pose2D human_ground_pose(const ScenarioConfig& cfg, double t) {
  const GroundState g = ground_state(motion_kind_for(cfg.human_path), t, cfg.human_params());
  return {g.x, g.y, normalize_angle(g.heading)};
}

double ScenarioResult::cone_fraction(double t_from) const {
  std::size_t total = 0, inside = 0;
  for (const auto& s : log) {
    if (s.t + 1e-9 < t_from) continue;
    ++total;
    inside += s.in_cone ? 1 : 0;
  }
  return total == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(total);
}

double ScenarioResult::first_cone_entry() const {
  for (const auto& s : log)
    if (s.in_cone) return s.t;
  return -1.0;
}

Forecaster oracle_forecaster(const ScenarioConfig& cfg) {
  return [cfg](std::span<const Skeleton>, double t_now) {
    Forecast f;
    f.pose.reserve(kTargetFrames);
    f.traj.reserve(kTargetFrames);
    for (std::size_t k = 1; k <= kTargetFrames; ++k) {
      auto [pose, traj] = decompose(scripted_human(cfg, t_now + static_cast<double>(k) * dt()));
      f.pose.push_back(pose);
      f.traj.push_back(traj);
    }
    return f;
  };
}

Forecaster model_forecaster(const MotionPredictor& predictor) {
  return [&predictor](std::span<const Skeleton> history, double) {
    if (history.size() < kInputFrames) throw DataError("forecaster needs 5 observed frames");
    std::vector<PoseVec> pose;
    std::vector<TrajVec> traj;
    for (const auto& frame : history.last(kInputFrames)) {
      auto [p, t] = decompose(frame);
      pose.push_back(p);
      traj.push_back(t);
    }
    return predictor.predict(pose, traj);
  };
}

Controller default_controller(const ControllerGains& gains) {
  return [gains](const Pose2D& robot, const Pose2D& goal) { return goal_seeking_control(robot, goal, gains); };
}

namespace {

double ground_distance(const Pose2D& a, const Pose2D& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// When the straight line to the goal passes closer than `clearance` to the
// human, steer along the tangent of a circle of radius `orbit` around them,
// turning the short way toward the goal.
Pose2D detour_target(const Pose2D& robot, const Pose2D& goal, const Pose2D& human, double orbit, double clearance,
                     double lookahead) {
  const double gx = goal.x - robot.x, gy = goal.y - robot.y;
  const double len = std::hypot(gx, gy);
  if (orbit <= 0.0 || len < 1e-9) return goal;
  const double ux = gx / len, uy = gy / len;
  const double hx = human.x - robot.x, hy = human.y - robot.y;
  const double along = hx * ux + hy * uy;
  if (along <= 0.0 || along >= len) return goal;
  if (std::hypot(hx - along * ux, hy - along * uy) >= clearance) return goal;

  const double d = std::hypot(hx, hy);
  if (d < 1e-9) return goal;
  const double rx = -hx / d, ry = -hy / d;  // human -> robot
  const double cross = rx * (goal.y - human.y) - ry * (goal.x - human.x);
  const double side = cross >= 0.0 ? 1.0 : -1.0;
  const double tx = -side * ry, ty = side * rx;  // tangential, toward the goal side
  double dx = 0.0, dy = 0.0;
  if (d > orbit) {
    const double beta = std::asin(orbit / d);
    dx = std::cos(beta) * -rx + std::sin(beta) * tx;
    dy = std::cos(beta) * -ry + std::sin(beta) * ty;
  } else {
    const double push = (orbit - d) / orbit;
    dx = tx + push * rx;
    dy = ty + push * ry;
    const double n = std::hypot(dx, dy);
    dx /= n;
    dy /= n;
  }
  return {robot.x + lookahead * dx, robot.y + lookahead * dy, std::atan2(dy, dx)};
}

}  // namespace

ScenarioResult simulate(const ScenarioConfig& cfg, const Forecaster& forecaster, const Controller& controller) {
  cfg.validate();
  if (!forecaster) throw UsageError("simulate: no forecaster");
  const Controller control = controller ? controller : default_controller(cfg.gains);
  const RewardParams reward_params = cfg.reward_params();
  const std::size_t steps = cfg.step_count();
  Rng noise(cfg.seed);

  auto observe = [&](double t) {
    Skeleton s = scripted_human(cfg, t);
    if (cfg.observation_noise_m > 0.0)
      for (auto& j : s.joints)
        for (double& v : j) v += noise.normal(0.0, cfg.observation_noise_m);
    return s;
  };

  std::deque<Skeleton> buffer;
  for (std::size_t k = kInputFrames; k-- > 1;) buffer.push_back(observe(-static_cast<double>(k) * dt()));

  ScenarioResult result;
  result.log.reserve(steps);
  result.min_separation = steps == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  GoalTracker tracker(cfg.ahead_distance_m);
  Pose2D robot = cfg.initial_robot_pose();
  double forecast_ms_total = 0.0;

  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt();
    buffer.push_back(observe(t));
    while (buffer.size() > kInputFrames) buffer.pop_front();
    const std::vector<Skeleton> history(buffer.begin(), buffer.end());

    Forecast forecast;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      forecast = forecaster(history, t);
    } catch (const std::exception& e) {
      throw SimulationError(k, e.what());
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    forecast_ms_total += ms;
    result.forecast_ms_max = std::max(result.forecast_ms_max, ms);
    if (forecast.pose.size() != kTargetFrames || forecast.traj.size() != kTargetFrames) {
      throw SimulationError(k, "forecast has " + std::to_string(forecast.pose.size()) + " frames, expected 20");
    }
    const Pose2D goal = tracker.update(forecast).goal;

    const Pose2D human = human_ground_pose(cfg, t);
    ScenarioStep step;
    step.t = t;
    step.human = human;
    step.robot = robot;
    step.goal = goal;
    step.separation = ground_distance(human, robot);
    step.reward = follow_reward(human, robot, reward_params);
    step.in_cone = in_frontal_cone(human, robot, reward_params);
    result.total_reward += step.reward;
    result.min_separation = std::min(result.min_separation, step.separation);
    result.log.push_back(step);

    VelocityCommand cmd = control(robot, detour_target(robot, goal, human, cfg.avoidance_radius_m, cfg.path_clearance_m,
                                                          cfg.gains.v_max / cfg.gains.k_v));
    cmd.v = std::clamp(cmd.v, -cfg.gains.v_max, cfg.gains.v_max);
    cmd.omega = std::clamp(cmd.omega, -cfg.gains.omega_max, cfg.gains.omega_max);

    // Separation guard against where the human will be at the next step.
    const Pose2D human_next = human_ground_pose(cfg, t + dt());
    auto separation_after = [&](double v) {
      return ground_distance(human_next, integrate_unicycle(robot, {v, cmd.omega}, dt()));
    };
    const double now = step.separation;
    if (separation_after(cmd.v) < cfg.safety_radius_m && separation_after(cmd.v) < now) {
      // Stop, or escape forward/backward if the human is closing in.
      double best_v = 0.0, best = separation_after(0.0);
      for (double v : {cfg.gains.v_max, -cfg.gains.v_max}) {
        if (separation_after(v) > best + 1e-12) best_v = v, best = separation_after(v);
      }
      cmd.v = best_v;
    }
    robot = integrate_unicycle(robot, cmd, dt());
  }
  if (steps > 0) result.forecast_ms_mean = forecast_ms_total / static_cast<double>(steps);
  return result;
}

void write_scenario_csv(std::ostream& out, const ScenarioResult& result) {
  out << "t,hx,hy,htheta,rx,ry,rtheta,gx,gy,gtheta,reward\n";
  char line[512];
  for (const auto& s : result.log) {
    std::snprintf(line, sizeof line, "%.3f,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", s.t, s.human.x,
                  s.human.y, s.human.theta, s.robot.x, s.robot.y, s.robot.theta, s.goal.x, s.goal.y, s.goal.theta,
                  s.reward);
    out << line;
  }
}

std::string scenario_summary_json(const ScenarioConfig& cfg, const ScenarioResult& result) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json config;
  for (const auto& [k, v] : scenario_to_key_values(cfg)) config[k] = v;
  j["scenario"] = config;
  j["steps"] = result.log.size();
  j["total_reward"] = result.total_reward;
  j["min_separation_m"] = result.min_separation;
  j["cone_fraction"] = result.cone_fraction();
  j["steady_state_cone_fraction"] = result.cone_fraction(10.0);
  j["first_cone_entry_s"] = result.first_cone_entry();
  return j.dump(2) + "\n";
}

}  // namespace stpotr
