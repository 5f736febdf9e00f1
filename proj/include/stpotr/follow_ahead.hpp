// SPDX-License-Identifier: Apache-2.0
//
// Robot follow-ahead geometry: a planar goal placed a fixed distance in
// front of the human's predicted final pose, a proportional unicycle
// controller that drives to it, and the per-step relative-position reward.
#pragma once

#include <optional>

#include "stpotr/skeleton.hpp"

namespace stpotr {

/// Ground-plane pose; theta in (-pi, pi].
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  bool operator==(const Pose2D&) const = default;
};

double normalize_angle(double a);

enum class GoalSource {
  kHipLine,       // perpendicular to the predicted left/right hip segment
  kDisplacement,  // hip segment degenerate: direction of predicted hip travel
  kPrevious,      // both degenerate: previous goal reused
  kDefault,       // nothing usable and no previous goal: world +x
};

struct GoalResult {
  Pose2D goal;
  GoalSource source = GoalSource::kHipLine;
};

/// Degeneracy thresholds on ground-plane lengths, meters.
inline constexpr double kMinHipSpan = 0.01;
inline constexpr double kMinDisplacement = 0.01;

/// Goal `ahead_m` in front of the hip at the final predicted frame, facing
/// the predicted heading. Of the two hip-line normals, the one pointing
/// along the predicted hip displacement wins; with no displacement the one
/// closer to `previous`'s heading; with neither, the anatomical forward
/// (left-to-right hip vector rotated +90 degrees).
GoalResult goal_from_prediction(const Forecast& forecast, double ahead_m,
                                const std::optional<Pose2D>& previous = std::nullopt);

/// Keeps the previous goal between calls.
class GoalTracker {
 public:
  explicit GoalTracker(double ahead_m = 1.5) : ahead_m_(ahead_m) {}
  GoalResult update(const Forecast& forecast);
  const std::optional<Pose2D>& previous() const { return previous_; }

 private:
  double ahead_m_;
  std::optional<Pose2D> previous_;
};

struct ControllerGains {
  double k_v = 0.8;
  double k_omega = 2.0;
  double v_max = 1.2;      // m/s
  double omega_max = 1.5;  // rad/s
  double arrive_radius = 0.1;
};

struct VelocityCommand {
  double v = 0.0;
  double omega = 0.0;
};

/// Drives toward the goal position (speed proportional to distance, scaled
/// down when not facing it), then aligns with the goal heading once within
/// arrive_radius.
VelocityCommand goal_seeking_control(const Pose2D& robot, const Pose2D& goal, const ControllerGains& gains = {});

/// Exact unicycle motion under a constant command for `dt` seconds.
Pose2D integrate_unicycle(const Pose2D& pose, const VelocityCommand& cmd, double dt);

struct RewardParams {
  double band_min_m = 1.0;
  double band_max_m = 2.5;
  double cone_half_angle_rad = 25.0 * 3.14159265358979323846 / 180.0;
  double in_cone = 0.1;
  double outside_cone = -0.1;
  double too_close = -0.3;
  double far_slope = 0.1;  // per meter beyond band_max_m, excess capped at 1 m
};

/// Within the distance band and inside the frontal cone of the human.
bool in_frontal_cone(const Pose2D& human, const Pose2D& robot, const RewardParams& params = {});

double follow_reward(const Pose2D& human, const Pose2D& robot, const RewardParams& params = {});

}  // namespace stpotr
