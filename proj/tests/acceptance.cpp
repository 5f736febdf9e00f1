// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 5, 6 and 10 train desk-size models and take a
// few minutes on one core.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "gradient_cases.hpp"
#include "oracle.hpp"
#include "stpotr/dataset.hpp"
#include "stpotr/eval.hpp"
#include "stpotr/follow_ahead.hpp"
#include "stpotr/model.hpp"
#include "stpotr/simulator.hpp"
#include "stpotr/synthetic.hpp"
#include "stpotr/train.hpp"

using namespace stpotr;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<MotionWindow> windows_of(MotionKind kind, double duration, std::vector<std::uint64_t> seeds,
                                     std::size_t stride) {
  std::vector<MotionWindow> out;
  for (auto s : seeds) {
    auto w = make_windows(generate_synthetic(kind, duration, s), stride);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

void gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t n = 0;
  for (const auto& c : gradcases::all_cases()) {
    const double err = c.run();
    ++n;
    if (!(err <= worst)) worst = err, worst_name = c.name;
  }
  const double secs = seconds_since(t0);
  report(1, worst < 1e-4 && secs < 120.0,
         fmt("%zu cases, worst rel. error %.2e (%s), %.1f s", n, worst, worst_name.c_str(), secs));
}

void offset_identity() {
  StpotrModel model(ModelConfig::desk());
  Rng rng(42);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor pose = oracle::random_tensor({1, kInputFrames, kPoseDim}, rng, -1.0, 1.0, false);
    Tensor traj = oracle::random_tensor({1, kInputFrames, kTrajDim}, rng, -10.0, 10.0, false);
    auto pred = model.forward(pose, traj);
    for (std::size_t t = 0; t < kTargetFrames; ++t) {
      for (std::size_t c = 0; c < kPoseDim; ++c)
        mismatches += pred.pose.at({0, t, c}) != pose.at({0, kInputFrames - 1, c});
      for (std::size_t c = 0; c < kTrajDim; ++c)
        mismatches += pred.traj.at({0, t, c}) != traj.at({0, kInputFrames - 1, c});
    }
  }
  report(2, mismatches == 0, fmt("100 random inputs, %zu non-identical values", mismatches));
}

void attention_oracle() {
  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t heads = 1 + rng.next() % 4;
    const std::size_t d = heads * (1 + rng.next() % 8);
    const std::size_t tq = 1 + rng.next() % 8, tk = 1 + rng.next() % 8, b = 1 + rng.next() % 3;
    nn::MultiHeadAttention mha(d, heads, rng);
    for (auto* lin : {&mha.weights.query, &mha.weights.key, &mha.weights.value, &mha.weights.output})
      for (double& v : lin->bias.mutable_data()) v = rng.uniform(-0.5, 0.5);
    Tensor q = oracle::random_tensor({b, tq, d}, rng, -2, 2, false);
    Tensor k = oracle::random_tensor({b, tk, d}, rng, -2, 2, false);
    Tensor v = oracle::random_tensor({b, tk, d}, rng, -2, 2, false);
    Tensor out = mha(q, k, v);
    for (std::size_t i = 0; i < b; ++i) {
      auto ref = oracle::naive_attention(oracle::rows_of(q, i), oracle::rows_of(k, i), oracle::rows_of(v, i),
                                         mha.weights, heads);
      for (std::size_t r = 0; r < tq; ++r)
        for (std::size_t c = 0; c < d; ++c)
          worst = std::max(worst, std::abs(out.data()[(i * tq + r) * d + c] - ref[r][c]));
    }
  }
  report(3, worst < 1e-10, fmt("50 cases, max abs difference %.2e", worst));
}

void metric_oracle() {
  Rng rng(9);
  double worst = 0.0;
  bool invariant = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t frames = 1 + rng.next() % 25, joints = trial % 2 ? kPoseJoints : 1;
    std::vector<double> p(frames * joints * 3), t(p.size());
    for (double& x : p) x = rng.uniform(-3, 3);
    for (double& x : t) x = rng.uniform(-3, 3);
    worst = std::max(worst, std::abs(ade(p, t, joints) - oracle::naive_ade(p, t, frames, joints)));
    worst = std::max(worst, std::abs(fde(p, t, joints) - oracle::naive_fde(p, t, frames, joints)));

    // Dyadic grid values and shifts keep every shifted coordinate exact.
    for (double& x : p) x = std::ldexp(std::round(x * 1024.0), -10);
    for (double& x : t) x = std::ldexp(std::round(x * 1024.0), -10);
    const double shift[3] = {std::ldexp(double(rng.next() % 64), 0), -16.0, 0.5};
    auto ps = p, ts = t;
    for (std::size_t i = 0; i < p.size(); ++i) ps[i] += shift[i % 3], ts[i] += shift[i % 3];
    invariant = invariant && ade(ps, ts, joints) == ade(p, t, joints) && fde(ps, ts, joints) == fde(p, t, joints);
  }
  report(4, worst < 1e-12 && invariant,
         fmt("max deviation from loop recomputation %.2e, translation invariance %s", worst,
             invariant ? "exact" : "broken"));
}

void overfit() {
  const auto data = windows_of(MotionKind::kStraightWalk, 4.0, {1, 2}, 1);
  StpotrModel model(ModelConfig::desk());
  TrainConfig cfg;
  cfg.total_steps = 2000;
  cfg.lr_peak = 1e-3;
  const auto t0 = Clock::now();
  const TrainReport r = train(model, data, cfg);
  const EvalReport ev = evaluate(ModelPredictor(model), data, {0, false});
  const double secs = seconds_since(t0);
  report(5, data.size() == 32 && r.final_loss < 0.02 && ev.ade_pose < 0.05 && secs < 900.0,
         fmt("%zu windows, %zu steps, loss %.4f m, ADE_pose %.4f m, %.0f s", data.size(), r.steps, r.final_loss,
             ev.ade_pose, secs));
}

StpotrModel generalization() {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 10; s < 34; ++s) seeds.push_back(s);
  // Same order as a data directory of sc<seed>.motion and st<seed>.motion files.
  auto data = windows_of(MotionKind::kSCurveWalk, 6.0, seeds, 2);
  auto straight = windows_of(MotionKind::kStraightWalk, 6.0, seeds, 2);
  data.insert(data.end(), straight.begin(), straight.end());
  const auto held_out = windows_of(MotionKind::kStraightWalk, 6.0, {100, 101}, 2);
  ModelConfig mc = ModelConfig::desk();
  mc.seed = 1;
  StpotrModel model(mc);
  TrainConfig cfg;
  cfg.total_steps = 1500;
  cfg.lr_peak = 1e-3;
  cfg.seed = 1;
  train(model, data, cfg);
  const EvalReport m = evaluate(ModelPredictor(model), held_out, {0, false});
  const EvalReport b = evaluate(LastFrameRepeat(), held_out, {0, false});
  const double gain = 1.0 - m.ade_traj / b.ade_traj;
  report(6, gain >= 0.30,
         fmt("held-out ADE_traj %.4f m vs last-frame repeat %.4f m (%.0f%% lower)", m.ade_traj, b.ade_traj,
             100.0 * gain));
  return model;
}

void ablation_structure() {
  const ModelConfig base = ModelConfig::desk();
  const long full = static_cast<long>(StpotrModel(base).parameter_count());
  bool ok = full == static_cast<long>(oracle::expected_parameter_count(base));
  std::string detail = fmt("full %ld", full);
  for (int v = 0; v < 3; ++v) {
    ModelConfig c = base;
    const char* name = v == 0 ? "no-shared-attention" : v == 1 ? "no-end-attention" : "post-normalized";
    if (v == 0) c.use_shared_attention = false;
    if (v == 1) c.use_end_attention = false;
    if (v == 2) c.pre_normalized = false;
    const long delta = static_cast<long>(StpotrModel(c).parameter_count()) - full;
    const long expected = static_cast<long>(oracle::expected_parameter_count(c)) -
                          static_cast<long>(oracle::expected_parameter_count(base));
    ok = ok && delta == expected;
    detail += fmt(", %s %+ld (expected %+ld)", name, delta, expected);
  }
  report(7, ok, detail);
}

void warmup_schedule() {
  TrainConfig cfg;
  cfg.lr_peak = 3e-4;
  cfg.warmup_steps = 250;
  double worst = std::abs(learning_rate(cfg, 0));
  worst = std::max(worst, std::abs(learning_rate(cfg, cfg.warmup_steps) - cfg.lr_peak));
  for (std::size_t s = 0; s <= 2 * cfg.warmup_steps; ++s) {
    const double expected = cfg.lr_peak * std::min(1.0, double(s) / double(cfg.warmup_steps));
    worst = std::max(worst, std::abs(learning_rate(cfg, s) - expected));
  }
  report(8, worst < 1e-12 && learning_rate(cfg, 0) == 0.0,
         fmt("lr(0) = %g, lr(warmup) = %g, max deviation %.1e", learning_rate(cfg, 0),
             learning_rate(cfg, cfg.warmup_steps), worst));
}

Forecast forecast_from(const std::vector<Skeleton>& frames) {
  Forecast f;
  for (const auto& s : frames) {
    auto [p, t] = decompose(s);
    f.pose.push_back(p);
    f.traj.push_back(t);
  }
  return f;
}

void goal_geometry() {
  using std::numbers::pi;
  Rng rng(13);
  double pos_err = 0.0, ang_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto kind = static_cast<MotionKind>(trial % 4);
    const auto seq = generate_synthetic(kind, 3.0, 1000 + trial);
    std::vector<Skeleton> frames(seq.frames.end() - kTargetFrames, seq.frames.end());
    const double a = rng.uniform(-pi, pi), tx = rng.uniform(-10, 10), ty = rng.uniform(-10, 10);
    const double c = std::cos(a), s = std::sin(a);
    std::vector<Skeleton> moved = frames;
    for (auto& f : moved)
      for (auto& j : f.joints) {
        const double x = j[0], y = j[1];
        j[0] = c * x - s * y + tx;
        j[1] = s * x + c * y + ty;
      }
    const Pose2D g = goal_from_prediction(forecast_from(frames), 1.5).goal;
    const Pose2D h = goal_from_prediction(forecast_from(moved), 1.5).goal;
    pos_err = std::max(pos_err, std::hypot(c * g.x - s * g.y + tx - h.x, s * g.x + c * g.y + ty - h.y));
    ang_err = std::max(ang_err, std::abs(normalize_angle(g.theta + a - h.theta)));
  }

  // Hip joints collapsed onto the pelvis, person standing still, then walking again.
  auto still = generate_synthetic(MotionKind::kStationary, 2.0, 5);
  std::vector<Skeleton> degenerate(still.frames.begin(), still.frames.begin() + kTargetFrames);
  for (auto& f : degenerate) f[joint::kLeftHip] = f[joint::kRightHip] = f[joint::kPelvis];
  auto walk = generate_synthetic(MotionKind::kStraightWalk, 3.0, 5);
  std::vector<Skeleton> walking(walk.frames.end() - kTargetFrames, walk.frames.end());
  GoalTracker tracker(1.5);
  const GoalResult first = tracker.update(forecast_from(walking));
  const GoalResult fallback = tracker.update(forecast_from(degenerate));
  const GoalResult recovered = tracker.update(forecast_from(walking));
  const bool fallback_ok = first.source == GoalSource::kHipLine && fallback.source == GoalSource::kPrevious &&
                           fallback.goal == first.goal && recovered.source == GoalSource::kHipLine &&
                           recovered.goal == first.goal;
  report(9, pos_err < 1e-9 && ang_err < 1e-9 && fallback_ok,
         fmt("max position error %.1e m, heading error %.1e rad, fallback %s", pos_err, ang_err,
             fallback_ok ? "triggers and recovers" : "wrong"));
}

void closed_loop(const StpotrModel& model) {
  int positive = 0;
  double min_sep = 1e9;
  const double bound = ScenarioConfig{}.safety_radius_m - 0.2;
  for (auto path : {HumanPath::kStraight, HumanPath::kSShaped, HumanPath::kUShaped})
    for (auto start : {RobotStart::kFront, RobotStart::kBehind, RobotStart::kLeft, RobotStart::kRight}) {
      ScenarioConfig cfg;
      cfg.human_path = path;
      cfg.robot_start = start;
      const ScenarioResult r = simulate(cfg, oracle_forecaster(cfg));
      positive += r.total_reward > 0.0;
      min_sep = std::min(min_sep, r.min_separation);
    }
  ScenarioConfig cfg;
  const ModelPredictor predictor(model);
  const ScenarioResult r = simulate(cfg, model_forecaster(predictor));
  min_sep = std::min(min_sep, r.min_separation);
  const double steady = r.cone_fraction(10.0);
  report(10, positive >= 11 && steady >= 0.6 && min_sep >= bound,
         fmt("oracle: %d/12 positive; trained model, straight: %.0f%% of steady-state steps in cone; "
             "min separation %.2f m (bound %.2f m)",
             positive, 100.0 * steady, min_sep, bound));
}

void latency() {
  StpotrModel model(ModelConfig::desk());
  const ModelPredictor predictor(model);
  const auto seq = generate_synthetic(MotionKind::kStraightWalk, 15.0, 3);
  std::vector<double> ms;
  GoalTracker tracker(1.5);
  for (std::size_t cycle = 0; cycle < 100; ++cycle) {
    std::vector<PoseVec> pose;
    std::vector<TrajVec> traj;
    for (std::size_t i = cycle; i < cycle + kInputFrames; ++i) {
      auto [p, t] = decompose(seq.frames[i]);
      pose.push_back(p);
      traj.push_back(t);
    }
    const auto t0 = Clock::now();
    const Forecast f = predictor.predict(pose, traj);
    tracker.update(f);
    ms.push_back(1000.0 * seconds_since(t0));
  }
  const double worst = *std::max_element(ms.begin(), ms.end());
  double mean = 0.0;
  for (double m : ms) mean += m / ms.size();
  report(11, worst < 100.0, fmt("100 cycles, mean %.2f ms, max %.2f ms", mean, worst));
}

}  // namespace

int main() {
  gradient_suite();
  offset_identity();
  attention_oracle();
  metric_oracle();
  overfit();
  const StpotrModel trained = generalization();
  ablation_structure();
  warmup_schedule();
  goal_geometry();
  closed_loop(trained);
  latency();
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
