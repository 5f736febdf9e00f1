// SPDX-License-Identifier: Apache-2.0
#include "stpotr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stpotr/error.hpp"
#include "stpotr/motion_io.hpp"

namespace stpotr {

MotionSequence resample(const MotionSequence& seq, double target_hz) {
  const double source_hz = seq.frame_rate_hz;
  if (!(target_hz > 0.0)) throw UsageError("resample: target rate must be positive");
  if (target_hz > source_hz) {
    throw UsageError("resample: upsampling from " + std::to_string(source_hz) + " Hz to " +
                     std::to_string(target_hz) + " Hz is not supported");
  }
  MotionSequence out;
  out.frame_rate_hz = target_hz;
  if (seq.frames.empty()) return out;
  const double ratio = source_hz / target_hz;
  const double factor = std::round(ratio);
  if (std::abs(ratio - factor) < 1e-9) {
    const auto step = static_cast<std::size_t>(factor);
    for (std::size_t i = 0; i < seq.frames.size(); i += step) out.frames.push_back(seq.frames[i]);
    return out;
  }
  const auto last = static_cast<std::size_t>(
      std::floor(static_cast<double>(seq.frames.size() - 1) / ratio + 1e-9));
  for (std::size_t i = 0; i <= last; ++i) {
    const double u = static_cast<double>(i) * ratio;
    const auto j = std::min(static_cast<std::size_t>(std::floor(u)), seq.frames.size() - 1);
    const double frac = u - static_cast<double>(j);
    if (j + 1 >= seq.frames.size() || frac == 0.0) {
      out.frames.push_back(seq.frames[j]);
      continue;
    }
    Skeleton s;
    for (std::size_t k = 0; k < kJointCount; ++k) {
      for (std::size_t c = 0; c < 3; ++c) {
        s[k][c] = (1.0 - frac) * seq.frames[j][k][c] + frac * seq.frames[j + 1][k][c];
      }
    }
    out.frames.push_back(s);
  }
  return out;
}

std::vector<MotionWindow> make_windows(const MotionSequence& seq, std::size_t stride, std::size_t input_frames,
                                       std::size_t target_frames) {
  if (stride == 0) throw UsageError("window stride must be positive");
  const std::size_t span = input_frames + target_frames;
  std::vector<MotionWindow> windows;
  if (seq.frames.size() < span) return windows;
  const std::size_t count = (seq.frames.size() - span) / stride + 1;
  windows.reserve(count);

  std::vector<PoseVec> pose(seq.frames.size());
  std::vector<TrajVec> traj(seq.frames.size());
  for (std::size_t i = 0; i < seq.frames.size(); ++i) std::tie(pose[i], traj[i]) = decompose(seq.frames[i]);

  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t s = w * stride;
    MotionWindow mw;
    mw.input_pose.assign(pose.begin() + s, pose.begin() + s + input_frames);
    mw.input_traj.assign(traj.begin() + s, traj.begin() + s + input_frames);
    mw.target_pose.assign(pose.begin() + s + input_frames, pose.begin() + s + span);
    mw.target_traj.assign(traj.begin() + s + input_frames, traj.begin() + s + span);
    windows.push_back(std::move(mw));
  }
  return windows;
}

void add_noise_inplace(MotionWindow& window, double sigma_m, Rng& rng) {
  if (sigma_m < 0.0) throw UsageError("noise sigma must be non-negative");
  if (sigma_m == 0.0) return;
  for (auto& frame : window.input_pose) {
    for (double& v : frame) v += rng.normal(0.0, sigma_m);
  }
  for (auto& frame : window.input_traj) {
    for (double& v : frame) v += rng.normal(0.0, sigma_m);
  }
}

MotionWindow add_noise(const MotionWindow& window, double sigma_m, std::uint64_t seed) {
  MotionWindow out = window;
  Rng rng(seed);
  add_noise_inplace(out, sigma_m, rng);
  return out;
}

std::vector<MotionWindow> load_windows(const std::filesystem::path& dir, std::size_t stride, double rate_hz) {
  if (!std::filesystem::is_directory(dir)) throw DataError("data directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".motion") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<MotionWindow> windows;
  for (const auto& f : files) {
    auto seq = resample(read_motion_file(f), rate_hz);
    auto w = make_windows(seq, stride);
    windows.insert(windows.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return windows;
}

namespace {

template <std::size_t D>
Tensor stack_frames(std::span<const MotionWindow> windows, std::span<const std::size_t> indices,
                    std::vector<std::array<double, D>> MotionWindow::*member) {
  const std::size_t frames = (windows[indices[0]].*member).size();
  std::vector<double> values;
  values.reserve(indices.size() * frames * D);
  for (std::size_t idx : indices) {
    const auto& seq = windows[idx].*member;
    if (seq.size() != frames) throw ShapeError("batch: windows have different lengths");
    for (const auto& f : seq) values.insert(values.end(), f.begin(), f.end());
  }
  return Tensor::from({indices.size(), frames, D}, std::move(values));
}

}  // namespace

Batch make_batch(std::span<const MotionWindow> windows, std::span<const std::size_t> indices) {
  if (indices.empty()) throw UsageError("batch: no windows selected");
  for (std::size_t idx : indices) {
    if (idx >= windows.size()) throw UsageError("batch: window index out of range");
  }
  return {stack_frames<kPoseDim>(windows, indices, &MotionWindow::input_pose),
          stack_frames<kTrajDim>(windows, indices, &MotionWindow::input_traj),
          stack_frames<kPoseDim>(windows, indices, &MotionWindow::target_pose),
          stack_frames<kTrajDim>(windows, indices, &MotionWindow::target_traj)};
}

Batch make_batch(std::span<const MotionWindow> windows) {
  std::vector<std::size_t> all(windows.size());
  std::iota(all.begin(), all.end(), 0);
  return make_batch(windows, all);
}

}  // namespace stpotr
