// SPDX-License-Identifier: Apache-2.0
//
// 17-joint skeletons and their split into hip trajectory plus hip-relative
// pose. Joint order:
//   0 pelvis/hip | 1-3 right hip, knee, ankle | 4-6 left hip, knee, ankle
//   7 spine | 8 neck | 9 head | 10 head-top
//   11-13 left shoulder, elbow, wrist | 14-16 right shoulder, elbow, wrist
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace stpotr {

inline constexpr std::size_t kJointCount = 17;
inline constexpr std::size_t kPoseJoints = 16;
inline constexpr std::size_t kPoseDim = 48;
inline constexpr std::size_t kTrajDim = 3;
inline constexpr std::size_t kFrameDim = 51;
inline constexpr std::size_t kInputFrames = 5;
inline constexpr std::size_t kTargetFrames = 20;
inline constexpr double kDefaultFrameRate = 10.0;

namespace joint {
enum Index : std::size_t {
  kPelvis = 0,
  kRightHip = 1,
  kRightKnee = 2,
  kRightAnkle = 3,
  kLeftHip = 4,
  kLeftKnee = 5,
  kLeftAnkle = 6,
  kSpine = 7,
  kNeck = 8,
  kHead = 9,
  kHeadTop = 10,
  kLeftShoulder = 11,
  kLeftElbow = 12,
  kLeftWrist = 13,
  kRightShoulder = 14,
  kRightElbow = 15,
  kRightWrist = 16,
};
}  // namespace joint

using Vec3 = std::array<double, 3>;
using PoseVec = std::array<double, kPoseDim>;
using TrajVec = std::array<double, kTrajDim>;

struct Skeleton {
  std::array<Vec3, kJointCount> joints{};

  const Vec3& operator[](std::size_t j) const { return joints[j]; }
  Vec3& operator[](std::size_t j) { return joints[j]; }
  bool operator==(const Skeleton&) const = default;

  bool all_finite() const;
  std::array<double, kFrameDim> flatten() const;
  static Skeleton from_flat(std::span<const double> values);
};

struct MotionSequence {
  std::vector<Skeleton> frames;
  double frame_rate_hz = kDefaultFrameRate;
};

/// One training sample: M observed frames and the N that follow, each split
/// into hip-relative pose (16 joints) and global hip trajectory.
struct MotionWindow {
  std::vector<PoseVec> input_pose;
  std::vector<TrajVec> input_traj;
  std::vector<PoseVec> target_pose;
  std::vector<TrajVec> target_traj;
};

/// Predicted continuation of a motion: N frames of pose and trajectory.
struct Forecast {
  std::vector<PoseVec> pose;
  std::vector<TrajVec> traj;
};

/// Hip trajectory point and the 16 remaining joints relative to the hip.
std::pair<PoseVec, TrajVec> decompose(const Skeleton& frame);
Skeleton compose(const PoseVec& pose, const TrajVec& traj);

}  // namespace stpotr
