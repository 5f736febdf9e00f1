// SPDX-License-Identifier: Apache-2.0
#include "stpotr/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "stpotr/error.hpp"

namespace stpotr {

namespace {

void check_pair(std::span<const double> pred, std::span<const double> truth, std::size_t joints, const char* name) {
  if (joints == 0 || pred.size() != truth.size() || pred.size() % (joints * 3) != 0 || pred.empty()) {
    throw ShapeError(std::string(name) + ": prediction has " + std::to_string(pred.size()) + " values, truth " +
                     std::to_string(truth.size()) + ", joints " + std::to_string(joints));
  }
}

double joint_error(const double* a, const double* b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

template <std::size_t D>
std::vector<double> flatten(const std::vector<std::array<double, D>>& frames) {
  std::vector<double> flat;
  flat.reserve(frames.size() * D);
  for (const auto& f : frames) flat.insert(flat.end(), f.begin(), f.end());
  return flat;
}

}  // namespace

double ade(std::span<const double> pred, std::span<const double> truth, std::size_t joints) {
  check_pair(pred, truth, joints, "ade");
  const std::size_t points = pred.size() / 3;
  double total = 0.0;
  for (std::size_t p = 0; p < points; ++p) total += joint_error(pred.data() + 3 * p, truth.data() + 3 * p);
  return total / static_cast<double>(points);
}

double fde(std::span<const double> pred, std::span<const double> truth, std::size_t joints) {
  check_pair(pred, truth, joints, "fde");
  const std::size_t offset = pred.size() - joints * 3;
  return ade(pred.subspan(offset), truth.subspan(offset), joints);
}

double ade_pose(const std::vector<PoseVec>& pred, const std::vector<PoseVec>& truth) {
  return ade(flatten(pred), flatten(truth), kPoseJoints);
}
double fde_pose(const std::vector<PoseVec>& pred, const std::vector<PoseVec>& truth) {
  return fde(flatten(pred), flatten(truth), kPoseJoints);
}
double ade_traj(const std::vector<TrajVec>& pred, const std::vector<TrajVec>& truth) {
  return ade(flatten(pred), flatten(truth), 1);
}
double fde_traj(const std::vector<TrajVec>& pred, const std::vector<TrajVec>& truth) {
  return fde(flatten(pred), flatten(truth), 1);
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"ade_pose", r.ade_pose},
                     {"fde_pose", r.fde_pose},
                     {"ade_traj", r.ade_traj},
                     {"fde_traj", r.fde_traj},
                     {"inference_ms", {{"mean", r.inference_ms_mean}, {"p95", r.inference_ms_p95}, {"min", r.inference_ms_min}}},
                     {"n_windows", r.n_windows}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  j.at("ade_pose").get_to(r.ade_pose);
  j.at("fde_pose").get_to(r.fde_pose);
  j.at("ade_traj").get_to(r.ade_traj);
  j.at("fde_traj").get_to(r.fde_traj);
  const auto& ms = j.at("inference_ms");
  ms.at("mean").get_to(r.inference_ms_mean);
  ms.at("p95").get_to(r.inference_ms_p95);
  ms.at("min").get_to(r.inference_ms_min);
  j.at("n_windows").get_to(r.n_windows);
}

std::string format_table(const EvalReport& r, const std::string& label) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%-12s %10s %10s %10s %10s %10s\n"
                "%-12s %10s %10s %10s %10s %10s\n"
                "%-12s %10.4f %10.4f %10.4f %10.4f %10.3f\n",
                "Method", "ADE_Pose", "FDE_Pose", "ADE_Traj", "FDE_Traj", "ID", "", "(m)", "(m)", "(m)", "(m)",
                "(msec)", label.c_str(), r.ade_pose, r.fde_pose, r.ade_traj, r.fde_traj, r.inference_ms_mean);
  return buf;
}

EvalReport evaluate(const MotionPredictor& predictor, const std::vector<MotionWindow>& windows,
                    const EvalOptions& options) {
  if (windows.empty()) throw DataError("evaluation needs at least one window");
  for (std::size_t i = 0; i < options.warmup_iterations && options.measure_latency; ++i) {
    const auto& w = windows[i % windows.size()];
    (void)predictor.predict(w.input_pose, w.input_traj);
  }
  EvalReport report;
  std::vector<double> latencies;
  latencies.reserve(windows.size());
  for (const auto& w : windows) {
    const auto t0 = std::chrono::steady_clock::now();
    Forecast f = predictor.predict(w.input_pose, w.input_traj);
    const auto t1 = std::chrono::steady_clock::now();
    latencies.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    report.ade_pose += ade_pose(f.pose, w.target_pose);
    report.fde_pose += fde_pose(f.pose, w.target_pose);
    report.ade_traj += ade_traj(f.traj, w.target_traj);
    report.fde_traj += fde_traj(f.traj, w.target_traj);
  }
  const double n = static_cast<double>(windows.size());
  report.ade_pose /= n;
  report.fde_pose /= n;
  report.ade_traj /= n;
  report.fde_traj /= n;
  report.n_windows = windows.size();
  if (options.measure_latency) {
    std::sort(latencies.begin(), latencies.end());
    double total = 0.0;
    for (double l : latencies) total += l;
    report.inference_ms_mean = total / n;
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * n));
    report.inference_ms_p95 = latencies[std::min(latencies.size() - 1, rank == 0 ? 0 : rank - 1)];
    report.inference_ms_min = latencies.front();
  }
  return report;
}

Forecast LastFrameRepeat::predict(std::span<const PoseVec> input_pose, std::span<const TrajVec> input_traj) const {
  if (input_pose.empty() || input_traj.empty()) throw ShapeError("last-frame baseline needs at least one frame");
  Forecast f;
  f.pose.assign(horizon_, input_pose.back());
  f.traj.assign(horizon_, input_traj.back());
  return f;
}

}  // namespace stpotr
