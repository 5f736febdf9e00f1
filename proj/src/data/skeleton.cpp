// SPDX-License-Identifier: Apache-2.0
#include "stpotr/skeleton.hpp"

#include <cmath>

#include "stpotr/error.hpp"

namespace stpotr {

bool Skeleton::all_finite() const {
  for (const auto& j : joints) {
    for (double c : j) {
      if (!std::isfinite(c)) return false;
    }
  }
  return true;
}

std::array<double, kFrameDim> Skeleton::flatten() const {
  std::array<double, kFrameDim> flat{};
  for (std::size_t j = 0; j < kJointCount; ++j) {
    for (std::size_t c = 0; c < 3; ++c) flat[j * 3 + c] = joints[j][c];
  }
  return flat;
}

Skeleton Skeleton::from_flat(std::span<const double> values) {
  if (values.size() != kFrameDim) {
    throw ShapeError("skeleton needs " + std::to_string(kFrameDim) + " values, got " + std::to_string(values.size()));
  }
  Skeleton s;
  for (std::size_t j = 0; j < kJointCount; ++j) {
    for (std::size_t c = 0; c < 3; ++c) s.joints[j][c] = values[j * 3 + c];
  }
  return s;
}

std::pair<PoseVec, TrajVec> decompose(const Skeleton& frame) {
  const Vec3& hip = frame[joint::kPelvis];
  PoseVec pose{};
  for (std::size_t j = 1; j < kJointCount; ++j) {
    for (std::size_t c = 0; c < 3; ++c) pose[(j - 1) * 3 + c] = frame[j][c] - hip[c];
  }
  return {pose, TrajVec{hip[0], hip[1], hip[2]}};
}

Skeleton compose(const PoseVec& pose, const TrajVec& traj) {
  Skeleton s;
  s[joint::kPelvis] = {traj[0], traj[1], traj[2]};
  for (std::size_t j = 1; j < kJointCount; ++j) {
    for (std::size_t c = 0; c < 3; ++c) s[j][c] = pose[(j - 1) * 3 + c] + traj[c];
  }
  return s;
}

}  // namespace stpotr
