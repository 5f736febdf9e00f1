// SPDX-License-Identifier: Apache-2.0
#include "stpotr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "stpotr/checkpoint.hpp"
#include "stpotr/dataset.hpp"
#include "stpotr/error.hpp"

namespace stpotr {

Tensor motion_loss(const Tensor& pred_pose, const Tensor& pred_traj, const Tensor& target_pose,
                   const Tensor& target_traj, const LossWeights& weights, LossKind kind) {
  if (pred_pose.shape() != target_pose.shape() || pred_traj.shape() != target_traj.shape()) {
    throw ShapeError("loss: prediction " + shape_str(pred_pose.shape()) + "/" + shape_str(pred_traj.shape()) +
                     " vs target " + shape_str(target_pose.shape()) + "/" + shape_str(target_traj.shape()));
  }
  auto term = [kind](const Tensor& p, const Tensor& t) {
    Tensor diff = sub(p, t);
    return mean(kind == LossKind::kL1 ? abs(diff) : mul(diff, diff));
  };
  return add(mul_scalar(term(pred_pose, target_pose), weights.pose),
             mul_scalar(term(pred_traj, target_traj), weights.traj));
}

TrainConfig TrainConfig::full() {
  TrainConfig c;
  c.total_steps = 50000;
  c.warmup_steps = 10000;
  c.epochs = 250;
  return c;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw UsageError("train config: " + msg);
  };
  require(lr_peak >= 0.0 && std::isfinite(lr_peak), "lr_peak must be finite and non-negative");
  require(batch_size > 0, "batch_size must be positive");
  require(warmup_steps <= total_steps, "warmup_steps must not exceed total_steps");
  require(epochs > 0, "epochs must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must be in [0, 1)");
  require(adam_eps > 0.0, "adam_eps must be positive");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(pose_loss_weight >= 0.0 && traj_loss_weight >= 0.0, "loss weights must be non-negative");
  require(noise_sigma_m >= 0.0, "noise_sigma_m must be non-negative");
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "l1") return LossKind::kL1;
  if (name == "l2") return LossKind::kL2;
  throw UsageError("unknown loss kind '" + name + "' (expected l1 or l2)");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr_peak", c.lr_peak},
                     {"batch_size", c.batch_size},
                     {"total_steps", c.total_steps},
                     {"warmup_steps", c.warmup_steps},
                     {"epochs", c.epochs},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps},
                     {"weight_decay", c.weight_decay},
                     {"loss_kind", c.loss_kind == LossKind::kL1 ? "l1" : "l2"},
                     {"pose_loss_weight", c.pose_loss_weight},
                     {"traj_loss_weight", c.traj_loss_weight},
                     {"seed", c.seed},
                     {"noise_sigma_m", c.noise_sigma_m},
                     {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("lr_peak").get_to(c.lr_peak);
  j.at("batch_size").get_to(c.batch_size);
  j.at("total_steps").get_to(c.total_steps);
  j.at("warmup_steps").get_to(c.warmup_steps);
  j.at("epochs").get_to(c.epochs);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("adam_eps").get_to(c.adam_eps);
  j.at("weight_decay").get_to(c.weight_decay);
  c.loss_kind = parse_loss_kind(j.at("loss_kind").get<std::string>());
  j.at("pose_loss_weight").get_to(c.pose_loss_weight);
  j.at("traj_loss_weight").get_to(c.traj_loss_weight);
  j.at("seed").get_to(c.seed);
  j.at("noise_sigma_m").get_to(c.noise_sigma_m);
  j.at("checkpoint_every").get_to(c.checkpoint_every);
}

double learning_rate(const TrainConfig& config, std::size_t step) {
  if (config.warmup_steps == 0 || step >= config.warmup_steps) return config.lr_peak;
  return config.lr_peak * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
}

void adamw_step(std::span<double> param, std::span<const double> grad, AdamWState& state, double lr,
                const AdamWHyper& h) {
  if (state.m.size() != param.size()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    param[i] = param[i] - lr * h.weight_decay * param[i];
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    param[i] = param[i] - lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

AdamW::AdamW(nn::ParameterList params, const AdamWHyper& hyper)
    : params_(std::move(params)), state_(params_.size()), hyper_(hyper) {}

void AdamW::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    adamw_step(p.mutable_data(), p.grad(), state_[i], lr, hyper_);
  }
  ++steps_;
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

double dataset_loss(const StpotrModel& model, const std::vector<MotionWindow>& windows, const TrainConfig& config) {
  if (windows.empty()) throw DataError("cannot compute loss over an empty dataset");
  NoGradGuard no_grad;
  const LossWeights weights{config.pose_loss_weight, config.traj_loss_weight};
  constexpr std::size_t kChunk = 64;
  double total = 0.0;
  for (std::size_t start = 0; start < windows.size(); start += kChunk) {
    const std::size_t end = std::min(windows.size(), start + kChunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Batch b = make_batch(windows, idx);
    auto pred = model.forward(b.input_pose, b.input_traj);
    const double loss =
        motion_loss(pred.pose, pred.traj, b.target_pose, b.target_traj, weights, config.loss_kind).item();
    total += loss * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(windows.size());
}

TrainReport train(StpotrModel& model, const std::vector<MotionWindow>& dataset, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate();
  if (dataset.empty()) throw DataError("training dataset is empty");
  const auto start_time = std::chrono::steady_clock::now();

  Rng shuffle_rng(config.seed);
  Rng dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  Rng noise_rng(config.seed ^ 0xc2b2ae3d27d4eb4fULL);
  AdamW optimizer(model.parameters(), {config.beta1, config.beta2, config.adam_eps, config.weight_decay});
  const LossWeights weights{config.pose_loss_weight, config.traj_loss_weight};
  const nn::ForwardContext ctx{true, &dropout_rng, model.config().dropout};

  TrainReport report;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  auto save = [&](const std::string& name) {
    if (hooks.checkpoint_dir.empty()) return;
    std::filesystem::create_directories(hooks.checkpoint_dir);
    const auto path = hooks.checkpoint_dir / name;
    save_checkpoint(path, model);
    report.checkpoints.push_back(path);
  };

  for (std::size_t epoch = 0; epoch < config.epochs && step < config.total_steps; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    for (std::size_t start = 0; start < order.size() && step < config.total_steps; start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      Batch batch;
      if (config.noise_sigma_m > 0.0) {
        std::vector<MotionWindow> noisy;
        noisy.reserve(idx.size());
        for (std::size_t i : idx) {
          noisy.push_back(dataset[i]);
          add_noise_inplace(noisy.back(), config.noise_sigma_m, noise_rng);
        }
        batch = make_batch(noisy);
      } else {
        batch = make_batch(dataset, idx);
      }

      auto pred = model.forward(batch.input_pose, batch.input_traj, ctx);
      Tensor loss = motion_loss(pred.pose, pred.traj, batch.target_pose, batch.target_traj, weights, config.loss_kind);
      const double value = loss.item();
      if (!std::isfinite(value)) throw DivergenceError(step, value);

      optimizer.zero_grad();
      loss.backward();
      const double lr = learning_rate(config, step);
      optimizer.step(lr);

      LossPoint point{step, value, lr};
      report.curve.push_back(point);
      if (hooks.on_step) hooks.on_step(point);
      ++step;
      if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && step < config.total_steps) {
        char name[64];
        std::snprintf(name, sizeof name, "step_%06zu.ckpt", step);
        save(name);
      }
    }
  }
  optimizer.zero_grad();
  report.steps = step;
  report.final_loss = dataset_loss(model, dataset, config);
  if (!std::isfinite(report.final_loss)) throw DivergenceError(step, report.final_loss);
  save("model.ckpt");
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return report;
}

void write_loss_csv(const std::filesystem::path& path, const TrainReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "step,loss,lr\n";
  char buf[128];
  for (const auto& p : report.curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", p.step, p.loss, p.lr);
    out << buf;
  }
}

}  // namespace stpotr
