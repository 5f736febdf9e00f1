// SPDX-License-Identifier: Apache-2.0
//
// Kinematic follow-ahead simulation: a scripted human walks a named path,
// a forecaster sees the last five frames each 10 Hz cycle, and a unicycle
// robot chases the goal derived from the forecast.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "stpotr/follow_ahead.hpp"
#include "stpotr/key_value.hpp"
#include "stpotr/synthetic.hpp"

namespace stpotr {

class MotionPredictor;

enum class HumanPath { kStraight, kSShaped, kUShaped, kSitStand, kStationary };
enum class RobotStart { kFront, kBehind, kLeft, kRight };

HumanPath parse_human_path(std::string_view name);
std::string_view to_string(HumanPath path);
RobotStart parse_robot_start(std::string_view name);
std::string_view to_string(RobotStart start);
MotionKind motion_kind_for(HumanPath path);

inline constexpr double kControlRateHz = 10.0;

struct ScenarioConfig {
  HumanPath human_path = HumanPath::kStraight;
  RobotStart robot_start = RobotStart::kBehind;
  double duration_s = 20.0;
  double human_speed_mps = 1.0;
  double human_start_delay_s = 4.0;  // human stands still before walking
  double ahead_distance_m = 1.5;
  double follow_band_min_m = 1.0;
  double follow_band_max_m = 2.5;
  double cone_half_angle_deg = 25.0;
  double start_distance_m = 1.5;  // robot offset from the human at t = 0
  double safety_radius_m = 0.8;
  double avoidance_radius_m = 1.2;  // radius of the detour circle around the human
  double path_clearance_m = 1.0;    // detour when the straight path passes closer than this
  double observation_noise_m = 0.0;  // Gaussian noise on the frames the forecaster sees
  std::uint64_t seed = 0;
  std::optional<Pose2D> robot_start_pose;  // overrides robot_start when set
  ControllerGains gains;

  void validate() const;
  RewardParams reward_params() const;
  Pose2D initial_robot_pose() const;
  SyntheticParams human_params() const;
  std::size_t step_count() const;
};

/// Unknown keys and malformed values throw UsageError.
ScenarioConfig scenario_from_key_values(const KeyValues& kv);
KeyValues scenario_to_key_values(const ScenarioConfig& cfg);

Skeleton scripted_human(const ScenarioConfig& cfg, double t);
Pose2D human_ground_pose(const ScenarioConfig& cfg, double t);

struct ScenarioStep {
  double t = 0.0;
  Pose2D human, robot, goal;
  double reward = 0.0;
  double separation = 0.0;
  bool in_cone = false;
};

struct ScenarioResult {
  std::vector<ScenarioStep> log;
  double total_reward = 0.0;
  double min_separation = 0.0;  // 0 for an empty log
  double forecast_ms_mean = 0.0;
  double forecast_ms_max = 0.0;

  /// Fraction of steps with t >= t_from inside the frontal cone (0 if none).
  double cone_fraction(double t_from = 0.0) const;
  /// First time the robot is inside the cone, or -1.
  double first_cone_entry() const;
};

/// Maps the observation history (oldest first, last element at t_now) to an
/// N-frame forecast.
using Forecaster = std::function<Forecast(std::span<const Skeleton> history, double t_now)>;
using Controller = std::function<VelocityCommand(const Pose2D& robot, const Pose2D& goal)>;

/// Ground-truth future of the scripted human.
Forecaster oracle_forecaster(const ScenarioConfig& cfg);
/// Feeds the last five frames to a trained predictor. `predictor` must outlive the result.
Forecaster model_forecaster(const MotionPredictor& predictor);
Controller default_controller(const ControllerGains& gains = {});

class SimulationError : public std::runtime_error {
 public:
  SimulationError(std::size_t step, const std::string& what)
      : std::runtime_error("predictor failed at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

ScenarioResult simulate(const ScenarioConfig& cfg, const Forecaster& forecaster,
                        const Controller& controller = nullptr);

void write_scenario_csv(std::ostream& out, const ScenarioResult& result);
/// JSON summary text (config, totals, cone fractions, latency).
std::string scenario_summary_json(const ScenarioConfig& cfg, const ScenarioResult& result);

}  // namespace stpotr
