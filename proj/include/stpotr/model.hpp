// SPDX-License-Identifier: Apache-2.0
//
// Dual non-autoregressive transformer predicting hip trajectory and
// hip-relative pose together. Pose and trajectory each run a graph-conv
// embedding, a transformer encoder and a decoder fed with the last observed
// frame copied N times. Shared Attention lets the trajectory memory attend
// to the (projected) pose memory; End Attention re-attends over memory plus
// decoder output. Output heads predict offsets from the last observed frame.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stpotr/nn.hpp"
#include "stpotr/skeleton.hpp"
#include "stpotr/tensor.hpp"

namespace stpotr {

struct ModelConfig {
  std::size_t d_pose = 128;
  std::size_t d_traj = 32;
  std::size_t d_ff = 256;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t input_frames = kInputFrames;
  std::size_t target_frames = kTargetFrames;
  std::size_t gcn_features = 16;  // per-joint width of the pose graph conv
  double dropout = 0.1;
  bool pre_normalized = true;
  bool use_shared_attention = true;
  bool shared_attention_pose_side = false;
  bool use_end_attention = true;
  std::uint64_t seed = 0;  // parameter initialisation

  static ModelConfig desk() { return {}; }
  static ModelConfig full();
  static ModelConfig tiny();

  /// Throws UsageError naming the offending field.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Normalised connectivity D^-1/2 (A + I) D^-1/2 of the 16 non-hip joints;
/// the removed hip links right hip, left hip and spine to each other.
Tensor skeleton_adjacency();

struct MotionPrediction {
  Tensor pose;  // [B, N, 48]
  Tensor traj;  // [B, N, 3]
};

class StpotrModel {
 public:
  explicit StpotrModel(const ModelConfig& config);
  // Parameters are shared handles; a copy would alias the weights.
  StpotrModel(const StpotrModel&) = delete;
  StpotrModel& operator=(const StpotrModel&) = delete;
  StpotrModel(StpotrModel&&) = default;
  StpotrModel& operator=(StpotrModel&&) = default;

  const ModelConfig& config() const { return config_; }

  /// Pose branch encoder: graph-conv embedding, positional encoding and the
  /// encoder stack. Accepts [M, 48] or [B, M, 48].
  Tensor encode_pose(const Tensor& input_pose, const nn::ForwardContext& ctx = {}) const;

  /// Trajectory branch encoder over hip positions relative to the last
  /// observed one. Accepts [M, 3] or [B, M, 3].
  Tensor encode_traj(const Tensor& input_traj, const nn::ForwardContext& ctx = {}) const;

  MotionPrediction forward(const Tensor& input_pose, const Tensor& input_traj,
                           const nn::ForwardContext& ctx = {}) const;

  /// Stable order; the handles alias the model's storage.
  nn::ParameterList parameters() const;
  std::size_t parameter_count() const;

  /// Runs the pose encoder stack alone on `x` ([B, T, d_pose]).
  Tensor run_pose_encoder_stack(const Tensor& x, const nn::ForwardContext& ctx = {}) const;

 private:
  struct Branch {
    nn::GraphConv embed;
    nn::Linear lift;  // pose only: flattened joint features -> d_pose
    std::vector<nn::EncoderLayer> encoder;
    std::vector<nn::DecoderLayer> decoder;
    nn::MultiHeadAttention end_attn;
    nn::LayerNorm end_norm;
  };
  struct SharedAttention {
    nn::Linear proj;
    nn::MultiHeadAttention attn;
  };

  Tensor embed_pose(const Tensor& pose) const;  // [B, T, 48] -> [B, T, d_pose]
  Tensor embed_traj(const Tensor& traj) const;  // [B, T, 3] -> [B, T, d_traj]
  Tensor end_attention(const Branch& branch, const Tensor& memory, const Tensor& decoded,
                       const nn::ForwardContext& ctx) const;

  ModelConfig config_;
  Branch pose_;
  Branch traj_;
  std::optional<SharedAttention> shared_;
  nn::Linear pose_head_hidden_;
  nn::Linear pose_head_out_;
  nn::Linear traj_head_out_;
  Tensor pe_pose_, pe_traj_;  // [M + N, d] per branch
};

/// Batch-1 inference adapter for evaluation and the follow-ahead loop.
class MotionPredictor {
 public:
  virtual ~MotionPredictor() = default;
  virtual Forecast predict(std::span<const PoseVec> input_pose, std::span<const TrajVec> input_traj) const = 0;
};

class ModelPredictor : public MotionPredictor {
 public:
  explicit ModelPredictor(const StpotrModel& model) : model_(model) {}
  Forecast predict(std::span<const PoseVec> input_pose, std::span<const TrajVec> input_traj) const override;

 private:
  const StpotrModel& model_;
};

/// Runs the model in eval mode without recording a graph.
std::vector<Forecast> predict_batch(const StpotrModel& model, std::span<const MotionWindow> windows);

}  // namespace stpotr
