// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stpotr/model.hpp"
#include "stpotr/skeleton.hpp"
#include "stpotr/tensor.hpp"

namespace stpotr {

enum class LossKind { kL1, kL2 };

struct LossWeights {
  double pose = 1.0;
  double traj = 1.0;
};

/// pose_weight * mean|pred_pose - target_pose| + traj_weight * mean|pred_traj - target_traj|
/// (squared errors for kL2).
Tensor motion_loss(const Tensor& pred_pose, const Tensor& pred_traj, const Tensor& target_pose,
                   const Tensor& target_traj, const LossWeights& weights = {}, LossKind kind = LossKind::kL1);

struct TrainConfig {
  double lr_peak = 1e-4;
  std::size_t batch_size = 16;
  std::size_t total_steps = 2000;
  std::size_t warmup_steps = 100;
  std::size_t epochs = 1000000;  // cap on passes; total_steps normally ends training
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  LossKind loss_kind = LossKind::kL1;
  double pose_loss_weight = 1.0;
  double traj_loss_weight = 1.0;
  std::uint64_t seed = 0;
  double noise_sigma_m = 0.0;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only

  /// Full-scale recipe: 50K steps, 10K warm-up, batch 16, lr 1e-4, 250 epochs.
  static TrainConfig full();
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
LossKind parse_loss_kind(const std::string& name);

/// Linear warm-up from 0 to lr_peak over warmup_steps, constant afterwards.
double learning_rate(const TrainConfig& config, std::size_t step);

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;
};

/// One AdamW update of `param` in place: decoupled decay
/// p <- p - lr*wd*p, then p <- p - lr * m_hat / (sqrt(v_hat) + eps).
void adamw_step(std::span<double> param, std::span<const double> grad, AdamWState& state, double lr,
                const AdamWHyper& hyper);

class AdamW {
 public:
  AdamW(nn::ParameterList params, const AdamWHyper& hyper);
  /// Applies one update to every parameter; missing gradients count as zero.
  void step(double lr);
  void zero_grad();
  std::size_t steps_taken() const { return steps_; }

 private:
  nn::ParameterList params_;
  std::vector<AdamWState> state_;
  AdamWHyper hyper_;
  std::size_t steps_ = 0;
};

struct LossPoint {
  std::size_t step;
  double loss;
  double lr;
};

struct TrainReport {
  std::vector<LossPoint> curve;       // one entry per optimizer step (train mode)
  double final_loss = 0.0;            // eval-mode loss over the whole dataset after training
  double wall_seconds = 0.0;
  std::size_t steps = 0;
  std::vector<std::filesystem::path> checkpoints;
};

struct TrainHooks {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints written
  std::function<void(const LossPoint&)> on_step;
};

/// Throws DivergenceError when a mini-batch loss is not finite.
TrainReport train(StpotrModel& model, const std::vector<MotionWindow>& dataset, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// Eval-mode loss over `windows`, without recording a graph.
double dataset_loss(const StpotrModel& model, const std::vector<MotionWindow>& windows, const TrainConfig& config);

/// `step,loss,lr` with a header row.
void write_loss_csv(const std::filesystem::path& path, const TrainReport& report);

}  // namespace stpotr
