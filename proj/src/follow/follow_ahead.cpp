// SPDX-License-Identifier: Apache-2.0
#include "stpotr/follow_ahead.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stpotr/error.hpp"

namespace stpotr {

double normalize_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

GoalResult goal_from_prediction(const Forecast& forecast, double ahead_m, const std::optional<Pose2D>& previous) {
  if (forecast.pose.empty() || forecast.pose.size() != forecast.traj.size()) {
    throw ShapeError("goal: forecast needs matching, non-empty pose and trajectory frames");
  }
  if (!(ahead_m > 0.0)) throw UsageError("goal: ahead distance must be positive");
  const Skeleton final_frame = compose(forecast.pose.back(), forecast.traj.back());
  const Vec3& hip = final_frame[joint::kPelvis];
  const Vec3& left = final_frame[joint::kLeftHip];
  const Vec3& right = final_frame[joint::kRightHip];
  const double rx = right[0] - left[0], ry = right[1] - left[1];
  const double span = std::hypot(rx, ry);
  const double dx = forecast.traj.back()[0] - forecast.traj.front()[0];
  const double dy = forecast.traj.back()[1] - forecast.traj.front()[1];
  const double travel = std::hypot(dx, dy);

  GoalResult result;
  double hx = 0.0, hy = 0.0;
  if (span >= kMinHipSpan) {
    hx = -ry / span;
    hy = rx / span;
    if (travel >= kMinDisplacement) {
      if (hx * dx + hy * dy < 0.0) hx = -hx, hy = -hy;
    } else if (previous) {
      if (hx * std::cos(previous->theta) + hy * std::sin(previous->theta) < 0.0) hx = -hx, hy = -hy;
    }
    result.source = GoalSource::kHipLine;
  } else if (travel >= kMinDisplacement) {
    hx = dx / travel;
    hy = dy / travel;
    result.source = GoalSource::kDisplacement;
  } else if (previous) {
    return {*previous, GoalSource::kPrevious};
  } else {
    hx = 1.0;
    result.source = GoalSource::kDefault;
  }
  result.goal = {hip[0] + ahead_m * hx, hip[1] + ahead_m * hy, normalize_angle(std::atan2(hy, hx))};
  return result;
}

GoalResult GoalTracker::update(const Forecast& forecast) {
  GoalResult r = goal_from_prediction(forecast, ahead_m_, previous_);
  previous_ = r.goal;
  return r;
}

VelocityCommand goal_seeking_control(const Pose2D& robot, const Pose2D& goal, const ControllerGains& g) {
  const double dx = goal.x - robot.x, dy = goal.y - robot.y;
  const double dist = std::hypot(dx, dy);
  VelocityCommand cmd;
  if (dist < g.arrive_radius) {
    cmd.omega = std::clamp(g.k_omega * normalize_angle(goal.theta - robot.theta), -g.omega_max, g.omega_max);
    return cmd;
  }
  const double err = normalize_angle(std::atan2(dy, dx) - robot.theta);
  cmd.v = std::clamp(g.k_v * dist * std::max(0.0, std::cos(err)), 0.0, g.v_max);
  cmd.omega = std::clamp(g.k_omega * err, -g.omega_max, g.omega_max);
  return cmd;
}

Pose2D integrate_unicycle(const Pose2D& p, const VelocityCommand& cmd, double dt) {
  Pose2D out = p;
  if (std::abs(cmd.omega) < 1e-9) {
    out.x += cmd.v * dt * std::cos(p.theta);
    out.y += cmd.v * dt * std::sin(p.theta);
  } else {
    const double th = p.theta + cmd.omega * dt;
    out.x += cmd.v / cmd.omega * (std::sin(th) - std::sin(p.theta));
    out.y += cmd.v / cmd.omega * (std::cos(p.theta) - std::cos(th));
    out.theta = th;
  }
  out.theta = normalize_angle(out.theta);
  return out;
}

namespace {
struct Relative {
  double distance;
  double bearing;  // relative to the human's heading
};
Relative relative(const Pose2D& human, const Pose2D& robot) {
  const double dx = robot.x - human.x, dy = robot.y - human.y;
  const double c = std::cos(human.theta), s = std::sin(human.theta);
  const double fwd = c * dx + s * dy;
  const double lat = -s * dx + c * dy;
  return {std::hypot(dx, dy), std::atan2(lat, fwd)};
}
}  // namespace

bool in_frontal_cone(const Pose2D& human, const Pose2D& robot, const RewardParams& p) {
  const Relative r = relative(human, robot);
  return r.distance >= p.band_min_m && r.distance <= p.band_max_m && std::abs(r.bearing) <= p.cone_half_angle_rad;
}

double follow_reward(const Pose2D& human, const Pose2D& robot, const RewardParams& p) {
  const Relative r = relative(human, robot);
  if (r.distance < p.band_min_m) return p.too_close;
  if (r.distance > p.band_max_m) return -p.far_slope * std::min(r.distance - p.band_max_m, 1.0);
  return std::abs(r.bearing) <= p.cone_half_angle_rad ? p.in_cone : p.outside_cone;
}

}  // namespace stpotr
