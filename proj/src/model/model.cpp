// SPDX-License-Identifier: Apache-2.0
#include "stpotr/model.hpp"

#include <cmath>

#include "stpotr/dataset.hpp"
#include "stpotr/error.hpp"

namespace stpotr {

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.d_pose = 512;
  c.d_traj = 64;
  c.d_ff = 2048;
  c.n_layers = 4;
  c.n_heads = 8;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.d_pose = 32;
  c.d_traj = 16;
  c.d_ff = 32;
  c.n_layers = 1;
  c.n_heads = 2;
  c.gcn_features = 4;
  c.dropout = 0.0;
  return c;
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw UsageError("model config: " + msg);
  };
  require(d_pose > 0, "d_pose must be positive");
  require(d_traj > 0, "d_traj must be positive");
  require(d_ff > 0, "d_ff must be positive");
  require(n_layers > 0, "n_layers must be positive");
  require(n_heads > 0, "n_heads must be positive");
  require(input_frames > 0, "input_frames must be positive");
  require(target_frames > 0, "target_frames must be positive");
  require(gcn_features > 0, "gcn_features must be positive");
  require(d_pose % n_heads == 0, "d_pose (" + std::to_string(d_pose) + ") not divisible by n_heads");
  require(d_traj % n_heads == 0, "d_traj (" + std::to_string(d_traj) + ") not divisible by n_heads");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d_pose", c.d_pose},
                     {"d_traj", c.d_traj},
                     {"d_ff", c.d_ff},
                     {"n_layers", c.n_layers},
                     {"n_heads", c.n_heads},
                     {"input_frames", c.input_frames},
                     {"target_frames", c.target_frames},
                     {"gcn_features", c.gcn_features},
                     {"dropout", c.dropout},
                     {"pre_normalized", c.pre_normalized},
                     {"use_shared_attention", c.use_shared_attention},
                     {"shared_attention_pose_side", c.shared_attention_pose_side},
                     {"use_end_attention", c.use_end_attention},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("d_pose").get_to(c.d_pose);
  j.at("d_traj").get_to(c.d_traj);
  j.at("d_ff").get_to(c.d_ff);
  j.at("n_layers").get_to(c.n_layers);
  j.at("n_heads").get_to(c.n_heads);
  j.at("input_frames").get_to(c.input_frames);
  j.at("target_frames").get_to(c.target_frames);
  j.at("gcn_features").get_to(c.gcn_features);
  j.at("dropout").get_to(c.dropout);
  j.at("pre_normalized").get_to(c.pre_normalized);
  j.at("use_shared_attention").get_to(c.use_shared_attention);
  j.at("shared_attention_pose_side").get_to(c.shared_attention_pose_side);
  j.at("use_end_attention").get_to(c.use_end_attention);
  j.at("seed").get_to(c.seed);
}

Tensor skeleton_adjacency() {
  // Bones between non-hip joints, in 17-joint indices.
  static constexpr std::size_t kBones[][2] = {
      {1, 2}, {2, 3}, {4, 5}, {5, 6}, {7, 8}, {8, 9}, {9, 10}, {8, 11}, {11, 12},
      {12, 13}, {8, 14}, {14, 15}, {15, 16}, {1, 4}, {1, 7}, {4, 7},
  };
  constexpr std::size_t J = kPoseJoints;
  std::vector<double> a(J * J, 0.0);
  for (std::size_t i = 0; i < J; ++i) a[i * J + i] = 1.0;
  for (const auto& bone : kBones) {
    const std::size_t u = bone[0] - 1, v = bone[1] - 1;
    a[u * J + v] = 1.0;
    a[v * J + u] = 1.0;
  }
  std::vector<double> deg(J, 0.0);
  for (std::size_t i = 0; i < J; ++i) {
    for (std::size_t k = 0; k < J; ++k) deg[i] += a[i * J + k];
  }
  for (std::size_t i = 0; i < J; ++i) {
    for (std::size_t k = 0; k < J; ++k) a[i * J + k] /= std::sqrt(deg[i] * deg[k]);
  }
  return Tensor::from({J, J}, std::move(a), true);
}

StpotrModel::StpotrModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto& c = config_;
  Rng rng(c.seed);

  auto build_branch = [&](Branch& b, std::size_t d) {
    for (std::size_t l = 0; l < c.n_layers; ++l) b.encoder.emplace_back(d, c.n_heads, c.d_ff, c.pre_normalized, rng);
    for (std::size_t l = 0; l < c.n_layers; ++l) b.decoder.emplace_back(d, c.n_heads, c.d_ff, c.pre_normalized, rng);
    if (c.use_end_attention) {
      b.end_attn = nn::MultiHeadAttention(d, c.n_heads, rng);
      b.end_norm = nn::LayerNorm(d);
    }
  };

  pose_.embed = nn::GraphConv(skeleton_adjacency(), 3, c.gcn_features, true, rng);
  pose_.lift = nn::Linear(kPoseJoints * c.gcn_features, c.d_pose, rng);
  traj_.embed = nn::GraphConv(Tensor::full({1, 1}, 1.0, true), kTrajDim, c.d_traj, false, rng);
  build_branch(pose_, c.d_pose);
  build_branch(traj_, c.d_traj);

  if (c.use_shared_attention) {
    SharedAttention s;
    if (c.shared_attention_pose_side) {
      s.proj = nn::Linear(c.d_traj, c.d_pose, rng);
      s.attn = nn::MultiHeadAttention(c.d_pose, c.n_heads, rng);
    } else {
      s.proj = nn::Linear(c.d_pose, c.d_traj, rng);
      s.attn = nn::MultiHeadAttention(c.d_traj, c.n_heads, rng);
    }
    shared_ = std::move(s);
  }

  pose_head_hidden_ = nn::Linear(c.d_pose, c.d_ff, rng);
  pose_head_out_ = nn::Linear::zeros(c.d_ff, kPoseDim);
  traj_head_out_ = nn::Linear::zeros(c.d_traj, kTrajDim);

  const std::size_t steps = c.input_frames + c.target_frames;
  pe_pose_ = nn::positional_encoding(steps, c.d_pose);
  pe_traj_ = nn::positional_encoding(steps, c.d_traj);
}

Tensor StpotrModel::embed_pose(const Tensor& pose) const {
  const std::size_t b = pose.dim(0), t = pose.dim(1);
  Tensor joints = reshape(pose, {b, t, kPoseJoints, 3});
  Tensor features = pose_.embed(joints);  // [B, T, 16, F]
  return pose_.lift(reshape(features, {b, t, kPoseJoints * config_.gcn_features}));
}

Tensor StpotrModel::embed_traj(const Tensor& traj) const {
  const std::size_t b = traj.dim(0), t = traj.dim(1);
  Tensor out = traj_.embed(reshape(traj, {b, t, 1, kTrajDim}));
  return reshape(out, {b, t, config_.d_traj});
}

namespace {

Tensor as_batched(const Tensor& x, std::size_t features, const char* what) {
  if (x.ndim() == 2) return reshape(x, {1, x.dim(0), x.dim(1)});
  if (x.ndim() != 3 || x.dim(2) != features) {
    throw ShapeError(std::string(what) + ": expected [B, T, " + std::to_string(features) + "], got " +
                     shape_str(x.shape()));
  }
  return x;
}

Tensor last_frame(const Tensor& x) { return slice(x, 1, x.dim(1) - 1, x.dim(1)); }

}  // namespace

Tensor StpotrModel::run_pose_encoder_stack(const Tensor& x, const nn::ForwardContext& ctx) const {
  Tensor h = x;
  for (const auto& layer : pose_.encoder) h = layer(h, ctx);
  return h;
}

Tensor StpotrModel::encode_pose(const Tensor& input_pose, const nn::ForwardContext& ctx) const {
  const bool unbatched = input_pose.ndim() == 2;
  Tensor x = as_batched(input_pose, kPoseDim, "encode_pose");
  if (x.dim(2) != kPoseDim || x.dim(1) != config_.input_frames) {
    throw ShapeError("encode_pose: expected " + std::to_string(config_.input_frames) + " frames of " +
                     std::to_string(kPoseDim) + " values, got " + shape_str(input_pose.shape()));
  }
  Tensor h = ctx.drop(add(embed_pose(x), slice(pe_pose_, 0, 0, config_.input_frames)));
  h = run_pose_encoder_stack(h, ctx);
  return unbatched ? reshape(h, {h.dim(1), h.dim(2)}) : h;
}

Tensor StpotrModel::encode_traj(const Tensor& input_traj, const nn::ForwardContext& ctx) const {
  const bool unbatched = input_traj.ndim() == 2;
  Tensor x = as_batched(input_traj, kTrajDim, "encode_traj");
  if (x.dim(2) != kTrajDim || x.dim(1) != config_.input_frames) {
    throw ShapeError("encode_traj: expected " + std::to_string(config_.input_frames) + " frames of " +
                     std::to_string(kTrajDim) + " values, got " + shape_str(input_traj.shape()));
  }
  Tensor centred = sub(x, last_frame(x));
  Tensor h = ctx.drop(add(embed_traj(centred), slice(pe_traj_, 0, 0, config_.input_frames)));
  for (const auto& layer : traj_.encoder) h = layer(h, ctx);
  return unbatched ? reshape(h, {h.dim(1), h.dim(2)}) : h;
}

Tensor StpotrModel::end_attention(const Branch& branch, const Tensor& memory, const Tensor& decoded,
                                  const nn::ForwardContext& ctx) const {
  Tensor h = concat({memory, decoded}, 1);
  if (config_.pre_normalized) {
    Tensor n = branch.end_norm(h);
    h = add(h, ctx.drop(branch.end_attn(n, n, n)));
  } else {
    h = branch.end_norm(add(h, ctx.drop(branch.end_attn(h, h, h))));
  }
  return slice(h, 1, memory.dim(1), h.dim(1));
}

MotionPrediction StpotrModel::forward(const Tensor& input_pose, const Tensor& input_traj,
                                      const nn::ForwardContext& ctx) const {
  const auto& c = config_;
  Tensor pose_in = as_batched(input_pose, kPoseDim, "forward(pose)");
  Tensor traj_in = as_batched(input_traj, kTrajDim, "forward(traj)");
  if (pose_in.dim(0) != traj_in.dim(0) || pose_in.dim(1) != c.input_frames || traj_in.dim(1) != c.input_frames) {
    throw ShapeError("forward: inputs " + shape_str(input_pose.shape()) + " and " + shape_str(input_traj.shape()) +
                     " do not match batch x " + std::to_string(c.input_frames) + " frames");
  }
  const std::size_t batch = pose_in.dim(0);
  const std::size_t m = c.input_frames, n = c.target_frames;

  // 1. Encoders.
  Tensor z_pose = encode_pose(pose_in, ctx);
  Tensor z_traj = encode_traj(traj_in, ctx);

  // 2. Shared Attention.
  Tensor pose_memory = z_pose;
  Tensor traj_memory = z_traj;
  if (shared_) {
    if (c.shared_attention_pose_side) {
      Tensor projected = shared_->proj(z_traj);
      pose_memory = add(z_pose, ctx.drop(shared_->attn(z_pose, projected, projected)));
    } else {
      Tensor projected = shared_->proj(z_pose);
      traj_memory = add(z_traj, ctx.drop(shared_->attn(z_traj, projected, projected)));
    }
  }

  // 3. Decoders over the copied last frame.
  Tensor last_pose = last_frame(pose_in);  // [B, 1, 48]
  Tensor last_traj = last_frame(traj_in);  // [B, 1, 3]
  Tensor pose_query = broadcast_to(embed_pose(last_pose), {batch, n, c.d_pose});
  Tensor traj_query = broadcast_to(embed_traj(Tensor::zeros({batch, 1, kTrajDim})), {batch, n, c.d_traj});
  Tensor pose_h = ctx.drop(add(pose_query, slice(pe_pose_, 0, m, m + n)));
  Tensor traj_h = ctx.drop(add(traj_query, slice(pe_traj_, 0, m, m + n)));
  for (const auto& layer : pose_.decoder) pose_h = layer(pose_h, pose_memory, ctx);
  for (const auto& layer : traj_.decoder) traj_h = layer(traj_h, traj_memory, ctx);

  // 4. End Attention.
  if (c.use_end_attention) {
    pose_h = end_attention(pose_, pose_memory, pose_h, ctx);
    traj_h = end_attention(traj_, traj_memory, traj_h, ctx);
  }

  // 5. Offset heads plus the repeated last observed frame.
  Tensor pose_offset = pose_head_out_(relu(pose_head_hidden_(pose_h)));
  Tensor traj_offset = traj_head_out_(traj_h);
  return {add(pose_offset, last_pose), add(traj_offset, last_traj)};
}

nn::ParameterList StpotrModel::parameters() const {
  nn::ParameterList out;
  auto collect_branch = [&](const Branch& b, const std::string& name, bool has_lift) {
    b.embed.collect(name + "_embed.gcn", out);
    if (has_lift) b.lift.collect(name + "_embed.lift", out);
    for (std::size_t l = 0; l < b.encoder.size(); ++l) b.encoder[l].collect(name + "_encoder." + std::to_string(l), out);
    for (std::size_t l = 0; l < b.decoder.size(); ++l) b.decoder[l].collect(name + "_decoder." + std::to_string(l), out);
    if (config_.use_end_attention) {
      b.end_attn.collect(name + "_end_attention.attn", out);
      b.end_norm.collect(name + "_end_attention.norm", out);
    }
  };
  collect_branch(pose_, "pose", true);
  collect_branch(traj_, "traj", false);
  if (shared_) {
    shared_->proj.collect("shared_attention.proj", out);
    shared_->attn.collect("shared_attention.attn", out);
  }
  pose_head_hidden_.collect("pose_head.hidden", out);
  pose_head_out_.collect("pose_head.out", out);
  traj_head_out_.collect("traj_head.out", out);
  return out;
}

std::size_t StpotrModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

namespace {

std::vector<Forecast> unpack(const MotionPrediction& pred) {
  const std::size_t batch = pred.pose.dim(0), n = pred.pose.dim(1);
  auto pose = pred.pose.data();
  auto traj = pred.traj.data();
  std::vector<Forecast> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    out[b].pose.resize(n);
    out[b].traj.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      std::copy_n(pose.data() + (b * n + t) * kPoseDim, kPoseDim, out[b].pose[t].begin());
      std::copy_n(traj.data() + (b * n + t) * kTrajDim, kTrajDim, out[b].traj[t].begin());
    }
  }
  return out;
}

}  // namespace

Forecast ModelPredictor::predict(std::span<const PoseVec> input_pose, std::span<const TrajVec> input_traj) const {
  if (input_pose.size() != input_traj.size()) throw ShapeError("predict: pose and trajectory lengths differ");
  std::vector<double> pose, traj;
  for (const auto& f : input_pose) pose.insert(pose.end(), f.begin(), f.end());
  for (const auto& f : input_traj) traj.insert(traj.end(), f.begin(), f.end());
  NoGradGuard no_grad;
  auto pred = model_.forward(Tensor::from({1, input_pose.size(), kPoseDim}, std::move(pose)),
                             Tensor::from({1, input_traj.size(), kTrajDim}, std::move(traj)));
  return unpack(pred).front();
}

std::vector<Forecast> predict_batch(const StpotrModel& model, std::span<const MotionWindow> windows) {
  NoGradGuard no_grad;
  Batch batch = make_batch(windows);
  return unpack(model.forward(batch.input_pose, batch.input_traj));
}

}  // namespace stpotr
