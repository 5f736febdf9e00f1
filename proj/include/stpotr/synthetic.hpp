// SPDX-License-Identifier: Apache-2.0
//
// Procedural 17-joint human motion: a hip that follows a named ground path
// with limbs swinging in phase with the distance walked.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "stpotr/skeleton.hpp"

namespace stpotr {

enum class MotionKind { kStraightWalk, kSCurveWalk, kUTurnWalk, kSitStand, kStationary };

MotionKind parse_motion_kind(std::string_view name);
std::string_view to_string(MotionKind kind);

struct SyntheticParams {
  double heading_rad = 0.0;              // initial walking/facing direction
  std::array<double, 2> start{0.0, 0.0};  // ground position of the hip at t = 0
  double speed_mps = 1.0;
  double gait_phase = 0.0;
  double body_scale = 1.0;
  double start_delay_s = 0.0;  // standing still before walking starts
};

/// Hip ground position and facing heading at time t (t < 0 extends the
/// initial straight segment backwards).
struct GroundState {
  double x = 0.0, y = 0.0, heading = 0.0;
};
GroundState ground_state(MotionKind kind, double t, const SyntheticParams& params);

Skeleton synthesize_frame(MotionKind kind, double t, const SyntheticParams& params);

/// Frames at t = k / rate_hz for k in [0, round(duration_s * rate_hz)).
MotionSequence synthesize(MotionKind kind, double duration_s, const SyntheticParams& params,
                          double rate_hz = kDefaultFrameRate);

/// Draws heading, start point, speed (±3%), gait phase and body scale (±3%)
/// from `seed`, then synthesizes at 10 Hz.
SyntheticParams draw_synthetic_params(std::uint64_t seed);
MotionSequence generate_synthetic(MotionKind kind, double duration_s, std::uint64_t seed);

}  // namespace stpotr
