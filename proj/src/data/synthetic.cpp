// SPDX-License-Identifier: Apache-2.0
#include "stpotr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stpotr/error.hpp"
#include "stpotr/tensor.hpp"

namespace stpotr {

namespace {

constexpr double kPi = std::numbers::pi;

// Body geometry, meters, before body_scale.
constexpr double kPelvisHeight = 0.92;
constexpr double kHipHalfWidth = 0.12;
constexpr double kThigh = 0.44;
constexpr double kShin = 0.44;
constexpr double kShoulderHalfWidth = 0.18;
constexpr double kUpperArm = 0.28;
constexpr double kForearm = 0.25;
constexpr double kStrideLength = 1.1;  // distance per full gait cycle
constexpr double kSitDrop = 0.4;

// Path shapes.
constexpr double kSCurveAmplitude = 0.6;  // rad
constexpr double kSCurveWavelength = 8.0;
constexpr double kUTurnLeadIn = 3.0;
constexpr double kUTurnRadius = 1.0;

bool is_walk(MotionKind kind) {
  return kind == MotionKind::kStraightWalk || kind == MotionKind::kSCurveWalk || kind == MotionKind::kUTurnWalk;
}

double distance_walked(MotionKind kind, double t, const SyntheticParams& p) {
  if (!is_walk(kind)) return 0.0;
  if (t < 0.0) return p.speed_mps * t;
  return p.speed_mps * std::max(0.0, t - p.start_delay_s);
}

double s_curve_heading(double s, double h0) {
  return s <= 0.0 ? h0 : h0 + kSCurveAmplitude * std::sin(2.0 * kPi * s / kSCurveWavelength);
}

// Path position as a function of arc length s, relative to the start point.
GroundState path_at(MotionKind kind, double s, double h0) {
  const double c0 = std::cos(h0), s0 = std::sin(h0);
  GroundState g{0.0, 0.0, h0};
  if (kind == MotionKind::kSCurveWalk && s > 0.0) {
    // Composite Simpson over the heading profile.
    const std::size_t n = 2 * static_cast<std::size_t>(std::ceil(s / 0.1));
    const double h = s / static_cast<double>(n);
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      const double psi = s_curve_heading(h * static_cast<double>(i), h0);
      sx += w * std::cos(psi);
      sy += w * std::sin(psi);
    }
    g.x = sx * h / 3.0;
    g.y = sy * h / 3.0;
    g.heading = s_curve_heading(s, h0);
    return g;
  }
  if (kind == MotionKind::kUTurnWalk && s > kUTurnLeadIn) {
    const double arc_len = kPi * kUTurnRadius;
    const double u = std::min(s - kUTurnLeadIn, arc_len);
    const double turned = u / kUTurnRadius;
    // Left turn about a centre one radius to the left of the lead-in line.
    double lx = kUTurnLeadIn + kUTurnRadius * std::sin(turned);
    double ly = kUTurnRadius * (1.0 - std::cos(turned));
    double heading = turned;
    if (s - kUTurnLeadIn > arc_len) {
      const double back = s - kUTurnLeadIn - arc_len;
      lx -= back;
      heading = kPi;
    }
    g.x = c0 * lx - s0 * ly;
    g.y = s0 * lx + c0 * ly;
    g.heading = h0 + heading;
    return g;
  }
  g.x = c0 * s;
  g.y = s0 * s;
  return g;
}

double sit_depth(double t) {
  // 6 s cycle: stand 1 s, lower 2 s, sit 1 s, rise 2 s.
  if (t < 0.0) return 0.0;
  const double u = std::fmod(t, 6.0);
  auto ease = [](double x) { return 0.5 - 0.5 * std::cos(kPi * x); };
  if (u < 1.0) return 0.0;
  if (u < 3.0) return kSitDrop * ease((u - 1.0) / 2.0);
  if (u < 4.0) return kSitDrop;
  return kSitDrop * (1.0 - ease((u - 4.0) / 2.0));
}

struct Frame3 {
  Vec3 f, l, z;
};

Vec3 at(const Vec3& origin, const Frame3& b, double fwd, double left, double up) {
  return {origin[0] + fwd * b.f[0] + left * b.l[0] + up * b.z[0],
          origin[1] + fwd * b.f[1] + left * b.l[1] + up * b.z[1],
          origin[2] + fwd * b.f[2] + left * b.l[2] + up * b.z[2]};
}

}  // namespace

MotionKind parse_motion_kind(std::string_view name) {
  if (name == "straight_walk") return MotionKind::kStraightWalk;
  if (name == "s_curve_walk") return MotionKind::kSCurveWalk;
  if (name == "u_turn_walk") return MotionKind::kUTurnWalk;
  if (name == "sit_stand") return MotionKind::kSitStand;
  if (name == "stationary") return MotionKind::kStationary;
  throw UsageError("unknown motion kind '" + std::string(name) +
                   "' (expected straight_walk, s_curve_walk, u_turn_walk, sit_stand, stationary)");
}

std::string_view to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::kStraightWalk: return "straight_walk";
    case MotionKind::kSCurveWalk: return "s_curve_walk";
    case MotionKind::kUTurnWalk: return "u_turn_walk";
    case MotionKind::kSitStand: return "sit_stand";
    case MotionKind::kStationary: return "stationary";
  }
  return "?";
}

GroundState ground_state(MotionKind kind, double t, const SyntheticParams& p) {
  GroundState g = path_at(kind, distance_walked(kind, t, p), p.heading_rad);
  g.x += p.start[0];
  g.y += p.start[1];
  return g;
}

Skeleton synthesize_frame(MotionKind kind, double t, const SyntheticParams& p) {
  const double k = p.body_scale;
  const GroundState g = ground_state(kind, t, p);
  const double s = distance_walked(kind, t, p);
  const double phase = 2.0 * kPi * s / (kStrideLength * k) + p.gait_phase;
  const double amp = is_walk(kind) ? 1.0 : 0.0;
  const double depth = kind == MotionKind::kSitStand ? sit_depth(t) * k : 0.0;

  Frame3 b;
  b.f = {std::cos(g.heading), std::sin(g.heading), 0.0};
  b.l = {-std::sin(g.heading), std::cos(g.heading), 0.0};
  b.z = {0.0, 0.0, 1.0};

  Skeleton sk;
  const Vec3 pelvis{g.x, g.y, k * kPelvisHeight - depth + amp * 0.02 * k * std::cos(2.0 * phase)};
  sk[joint::kPelvis] = pelvis;

  auto leg = [&](double side, double swing_sign, std::size_t hip_j, std::size_t knee_j, std::size_t ankle_j) {
    const Vec3 hip = at(pelvis, b, 0.0, side * kHipHalfWidth * k, 0.0);
    sk[hip_j] = hip;
    if (depth > 0.0) {
      // Feet stay planted under the hips; the knee moves forward.
      const double reach = std::max(0.05, k * (kThigh + kShin) - depth);
      const double half = reach / 2.0;
      const double fwd = std::sqrt(std::max(0.0, k * kThigh * k * kThigh - half * half));
      sk[knee_j] = at(hip, b, fwd, 0.0, -half);
      sk[ankle_j] = at(hip, b, 0.0, 0.0, -reach);
      return;
    }
    const double theta = amp * 0.35 * swing_sign * std::sin(phase);
    const double flex = amp * 0.4 * std::max(0.0, swing_sign * std::cos(phase));
    sk[knee_j] = at(hip, b, k * kThigh * std::sin(theta), 0.0, -k * kThigh * std::cos(theta));
    sk[ankle_j] = at(sk[knee_j], b, k * kShin * std::sin(theta - flex), 0.0, -k * kShin * std::cos(theta - flex));
  };
  leg(-1.0, 1.0, joint::kRightHip, joint::kRightKnee, joint::kRightAnkle);
  leg(1.0, -1.0, joint::kLeftHip, joint::kLeftKnee, joint::kLeftAnkle);

  sk[joint::kSpine] = at(pelvis, b, 0.0, 0.0, 0.25 * k);
  sk[joint::kNeck] = at(pelvis, b, 0.0, 0.0, 0.50 * k);
  sk[joint::kHead] = at(pelvis, b, 0.03 * k, 0.0, 0.62 * k);
  sk[joint::kHeadTop] = at(pelvis, b, 0.03 * k, 0.0, 0.75 * k);

  // Arms swing against the leg on the same side.
  auto arm = [&](double side, double swing_sign, std::size_t sh_j, std::size_t el_j, std::size_t wr_j) {
    const Vec3 shoulder = at(sk[joint::kNeck], b, 0.0, side * kShoulderHalfWidth * k, -0.03 * k);
    sk[sh_j] = shoulder;
    const double beta = amp * 0.3 * swing_sign * std::sin(phase);
    sk[el_j] = at(shoulder, b, k * kUpperArm * std::sin(beta), 0.0, -k * kUpperArm * std::cos(beta));
    const double fore = beta + 0.2;
    sk[wr_j] = at(sk[el_j], b, k * kForearm * std::sin(fore), 0.0, -k * kForearm * std::cos(fore));
  };
  arm(1.0, 1.0, joint::kLeftShoulder, joint::kLeftElbow, joint::kLeftWrist);
  arm(-1.0, -1.0, joint::kRightShoulder, joint::kRightElbow, joint::kRightWrist);
  return sk;
}

MotionSequence synthesize(MotionKind kind, double duration_s, const SyntheticParams& params, double rate_hz) {
  if (!(duration_s >= 0.0) || !(rate_hz > 0.0)) throw UsageError("synthesize: invalid duration or rate");
  MotionSequence seq;
  seq.frame_rate_hz = rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * rate_hz));
  seq.frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    seq.frames.push_back(synthesize_frame(kind, static_cast<double>(i) / rate_hz, params));
  }
  return seq;
}

SyntheticParams draw_synthetic_params(std::uint64_t seed) {
  Rng rng(seed);
  SyntheticParams p;
  p.heading_rad = rng.uniform(-kPi, kPi);
  p.start = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
  p.speed_mps = 1.0 + rng.uniform(-0.03, 0.03);
  p.gait_phase = rng.uniform(0.0, 2.0 * kPi);
  p.body_scale = 1.0 + rng.uniform(-0.03, 0.03);
  return p;
}

MotionSequence generate_synthetic(MotionKind kind, double duration_s, std::uint64_t seed) {
  return synthesize(kind, duration_s, draw_synthetic_params(seed), kDefaultFrameRate);
}

}  // namespace stpotr
