// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "stpotr/skeleton.hpp"
#include "stpotr/tensor.hpp"

namespace stpotr {

/// Integer decimation when the source rate is a multiple of the target,
/// linear interpolation otherwise. Throws UsageError for upsampling.
MotionSequence resample(const MotionSequence& seq, double target_hz);

/// Sliding windows of `input_frames` observed plus `target_frames` future
/// frames; floor((len - (M + N)) / stride) + 1 windows, none if too short.
std::vector<MotionWindow> make_windows(const MotionSequence& seq, std::size_t stride,
                                       std::size_t input_frames = kInputFrames,
                                       std::size_t target_frames = kTargetFrames);

/// i.i.d. N(0, sigma^2) noise on the observed pose and trajectory only.
MotionWindow add_noise(const MotionWindow& window, double sigma_m, std::uint64_t seed);
void add_noise_inplace(MotionWindow& window, double sigma_m, Rng& rng);

/// Loads every *.motion file in `dir` (sorted by name), resamples to
/// `rate_hz`, and windows each sequence separately.
std::vector<MotionWindow> load_windows(const std::filesystem::path& dir, std::size_t stride,
                                       double rate_hz = kDefaultFrameRate);

struct Batch {
  Tensor input_pose;   // [B, M, 48]
  Tensor input_traj;   // [B, M, 3]
  Tensor target_pose;  // [B, N, 48]
  Tensor target_traj;  // [B, N, 3]
};

Batch make_batch(std::span<const MotionWindow> windows, std::span<const std::size_t> indices);
Batch make_batch(std::span<const MotionWindow> windows);

}  // namespace stpotr
