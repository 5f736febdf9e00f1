// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stpotr/model.hpp"
#include "stpotr/skeleton.hpp"

namespace stpotr {

/// Mean over frames and joints of the per-joint Euclidean error. Buffers are
/// frames x joints x 3, row-major.
double ade(std::span<const double> pred, std::span<const double> truth, std::size_t joints);
/// Mean over joints of the Euclidean error at the final frame only.
double fde(std::span<const double> pred, std::span<const double> truth, std::size_t joints);

double ade_pose(const std::vector<PoseVec>& pred, const std::vector<PoseVec>& truth);
double fde_pose(const std::vector<PoseVec>& pred, const std::vector<PoseVec>& truth);
double ade_traj(const std::vector<TrajVec>& pred, const std::vector<TrajVec>& truth);
double fde_traj(const std::vector<TrajVec>& pred, const std::vector<TrajVec>& truth);

struct EvalReport {
  double ade_pose = 0.0;
  double fde_pose = 0.0;
  double ade_traj = 0.0;
  double fde_traj = 0.0;
  double inference_ms_mean = 0.0;
  double inference_ms_p95 = 0.0;
  double inference_ms_min = 0.0;
  std::size_t n_windows = 0;

  bool operator==(const EvalReport&) const = default;
};

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

/// Column layout: ADE_Pose FDE_Pose ADE_Traj FDE_Traj ID (meters, ms).
std::string format_table(const EvalReport& report, const std::string& label = "STPOTR");

struct EvalOptions {
  std::size_t warmup_iterations = 3;
  bool measure_latency = true;
};

/// Averages metrics over windows at batch size 1; latency covers predict()
/// alone, after `warmup_iterations` untimed calls.
EvalReport evaluate(const MotionPredictor& predictor, const std::vector<MotionWindow>& windows,
                    const EvalOptions& options = {});

/// Repeats each window's last observed frame over the horizon.
class LastFrameRepeat : public MotionPredictor {
 public:
  explicit LastFrameRepeat(std::size_t horizon = kTargetFrames) : horizon_(horizon) {}
  Forecast predict(std::span<const PoseVec> input_pose, std::span<const TrajVec> input_traj) const override;

 private:
  std::size_t horizon_;
};

}  // namespace stpotr
