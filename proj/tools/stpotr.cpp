// SPDX-License-Identifier: Apache-2.0
//
// stpotr: generate | train | eval | predict | simulate
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric divergence.
// Relative output directories are resolved against $STPOTR_RUN_ROOT when set.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stpotr/checkpoint.hpp"
#include "stpotr/dataset.hpp"
#include "stpotr/error.hpp"
#include "stpotr/eval.hpp"
#include "stpotr/key_value.hpp"
#include "stpotr/model.hpp"
#include "stpotr/motion_io.hpp"
#include "stpotr/simulator.hpp"
#include "stpotr/synthetic.hpp"
#include "stpotr/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace stpotr;

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path resolve_out(const fs::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("STPOTR_RUN_ROOT"); root != nullptr && *root != '\0') return fs::path(root) / p;
  return p;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create directory " + dir.string());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

struct Manifest {
  json doc;

  Manifest(const std::string& command, const std::vector<std::string>& argv) {
    doc["tool"] = "stpotr";
    doc["version"] = STPOTR_VERSION;
    doc["command"] = command;
    doc["argv"] = argv;
    doc["started_utc"] = utc_now();
  }
  void write(const fs::path& dir) {
    doc["finished_utc"] = utc_now();
    write_text(dir / "manifest.json", doc.dump(2) + "\n");
  }
};

// --- config files -------------------------------------------------------

void apply_model_kv(ModelConfig& c, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "d_pose") c.d_pose = kv_size(key, value);
    else if (key == "d_traj") c.d_traj = kv_size(key, value);
    else if (key == "d_ff") c.d_ff = kv_size(key, value);
    else if (key == "n_layers") c.n_layers = kv_size(key, value);
    else if (key == "n_heads") c.n_heads = kv_size(key, value);
    else if (key == "gcn_features") c.gcn_features = kv_size(key, value);
    else if (key == "dropout") c.dropout = kv_double(key, value);
    else if (key == "pre_normalized") c.pre_normalized = kv_bool(key, value);
    else if (key == "use_shared_attention") c.use_shared_attention = kv_bool(key, value);
    else if (key == "shared_attention_pose_side") c.shared_attention_pose_side = kv_bool(key, value);
    else if (key == "use_end_attention") c.use_end_attention = kv_bool(key, value);
    else if (key == "seed") c.seed = kv_size(key, value);
    else throw UsageError("model config: unknown key '" + key + "'");
  }
}

void apply_train_kv(TrainConfig& c, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "lr_peak") c.lr_peak = kv_double(key, value);
    else if (key == "batch_size") c.batch_size = kv_size(key, value);
    else if (key == "total_steps") c.total_steps = kv_size(key, value);
    else if (key == "warmup_steps") c.warmup_steps = kv_size(key, value);
    else if (key == "epochs") c.epochs = kv_size(key, value);
    else if (key == "beta1") c.beta1 = kv_double(key, value);
    else if (key == "beta2") c.beta2 = kv_double(key, value);
    else if (key == "adam_eps") c.adam_eps = kv_double(key, value);
    else if (key == "weight_decay") c.weight_decay = kv_double(key, value);
    else if (key == "loss") c.loss_kind = parse_loss_kind(value);
    else if (key == "pose_loss_weight") c.pose_loss_weight = kv_double(key, value);
    else if (key == "traj_loss_weight") c.traj_loss_weight = kv_double(key, value);
    else if (key == "noise_sigma_m") c.noise_sigma_m = kv_double(key, value);
    else if (key == "checkpoint_every") c.checkpoint_every = kv_size(key, value);
    else if (key == "seed") c.seed = kv_size(key, value);
    else throw UsageError("train config: unknown key '" + key + "'");
  }
}

std::vector<std::string> config_differences(const ModelConfig& a, const ModelConfig& b) {
  nlohmann::json ja = a, jb = b;
  std::vector<std::string> diff;
  for (const auto& [key, value] : ja.items())
    if (!jb.contains(key) || jb[key] != value) diff.push_back(key);
  return diff;
}

std::vector<MotionWindow> load_dataset(const fs::path& dir, std::size_t stride) {
  if (!fs::is_directory(dir)) throw DataError("data directory " + dir.string() + " does not exist");
  auto windows = load_windows(dir, stride);
  if (windows.empty()) throw DataError("empty dataset: no 25-frame windows in " + dir.string());
  return windows;
}

// --- subcommands --------------------------------------------------------

struct GenerateArgs {
  std::string kind = "straight_walk";
  double duration = 10.0;
  std::uint64_t seed = 0;
  fs::path out;
};

int run_generate(const GenerateArgs& a) {
  const MotionKind kind = parse_motion_kind(a.kind);
  if (!(a.duration >= 0.0)) throw UsageError("--duration must be >= 0");
  const MotionSequence seq = generate_synthetic(kind, a.duration, a.seed);
  const fs::path out = resolve_out(a.out);
  ensure_parent(out);
  write_motion_file(out, seq);
  std::printf("wrote %zu frames to %s\n", seq.frames.size(), out.string().c_str());
  return 0;
}

struct TrainArgs {
  fs::path data, out;
  std::string model_config, train_config;
  std::string scale = "desk";
  std::optional<double> lr, dropout;
  std::optional<std::size_t> steps, warmup, batch, checkpoint_every;
  std::optional<std::uint64_t> seed;
  std::size_t stride = 1;
  bool no_shared = false, no_end = false, post_norm = false, pose_side = false, full_scale = false;
};

int run_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  ModelConfig model_cfg = a.full_scale || a.scale == "full" ? ModelConfig::full()
                          : a.scale == "tiny"                 ? ModelConfig::tiny()
                                                              : ModelConfig::desk();
  TrainConfig train_cfg;
  if (!a.model_config.empty()) apply_model_kv(model_cfg, read_key_values(a.model_config));
  if (!a.train_config.empty()) apply_train_kv(train_cfg, read_key_values(a.train_config));
  if (a.no_shared) model_cfg.use_shared_attention = false;
  if (a.no_end) model_cfg.use_end_attention = false;
  if (a.post_norm) model_cfg.pre_normalized = false;
  if (a.pose_side) model_cfg.shared_attention_pose_side = true;
  if (a.dropout) model_cfg.dropout = *a.dropout;
  if (a.lr) train_cfg.lr_peak = *a.lr;
  if (a.steps) train_cfg.total_steps = *a.steps;
  if (a.warmup) train_cfg.warmup_steps = *a.warmup;
  if (a.batch) train_cfg.batch_size = *a.batch;
  if (a.checkpoint_every) train_cfg.checkpoint_every = *a.checkpoint_every;
  if (a.seed) model_cfg.seed = train_cfg.seed = *a.seed;
  if (a.stride == 0) throw UsageError("--stride must be >= 1");
  model_cfg.validate();
  train_cfg.validate();

  const auto windows = load_dataset(a.data, a.stride);
  const fs::path out = resolve_out(a.out);
  ensure_dir(out);
  Manifest manifest("train", argv);
  manifest.doc["seed"] = train_cfg.seed;
  manifest.doc["config"] = {{"data_dir", fs::absolute(a.data).string()},
                            {"stride", a.stride},
                            {"model", nlohmann::json(model_cfg)},
                            {"train", nlohmann::json(train_cfg)}};

  StpotrModel model(model_cfg);
  std::fprintf(stderr, "training on %zu windows, %zu parameters, %zu steps\n", windows.size(),
               model.parameter_count(), train_cfg.total_steps);
  TrainHooks hooks;
  hooks.checkpoint_dir = out;
  hooks.on_step = [&](const LossPoint& p) {
    if ((p.step + 1) % 100 == 0 || p.step + 1 == train_cfg.total_steps)
      std::fprintf(stderr, "step %6zu  loss %.6f  lr %.3g\n", p.step + 1, p.loss, p.lr);
  };
  const TrainReport report = train(model, windows, train_cfg, hooks);
  write_loss_csv(out / "loss.csv", report);

  json artifacts;
  artifacts["checkpoint"] = (out / "model.ckpt").string();
  artifacts["loss_csv"] = (out / "loss.csv").string();
  json intermediate = json::array();
  for (const auto& c : report.checkpoints) intermediate.push_back(c.string());
  artifacts["checkpoints"] = intermediate;
  manifest.doc["artifacts"] = artifacts;
  manifest.doc["result"] = {{"final_loss", report.final_loss},
                            {"steps", report.steps},
                            {"wall_seconds", report.wall_seconds},
                            {"parameters", model.parameter_count()}};
  manifest.write(out);
  std::printf("final loss %.6f after %zu steps (%.1f s)\n", report.final_loss, report.steps, report.wall_seconds);
  return 0;
}

struct EvalArgs {
  fs::path checkpoint, data, out;
  std::string model_config;
  std::size_t stride = 1;
  bool measure_latency = false;
  bool baseline = false;
};

int run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  if (a.stride == 0) throw UsageError("--stride must be >= 1");
  std::optional<ModelConfig> expected;
  if (!a.model_config.empty()) {
    expected = ModelConfig::desk();
    apply_model_kv(*expected, read_key_values(a.model_config));
    expected->validate();
  }
  const Checkpoint ckpt = read_checkpoint(a.checkpoint);
  if (expected) {
    const auto diff = config_differences(*expected, ckpt.config);
    if (!diff.empty()) {
      std::string names;
      for (const auto& d : diff) names += (names.empty() ? "" : ", ") + d;
      throw DataError("checkpoint config does not match --model-config in: " + names);
    }
  }
  StpotrModel model(ckpt.config);
  restore_parameters(model, ckpt);
  const auto windows = load_dataset(a.data, a.stride);

  EvalOptions opts;
  opts.measure_latency = a.measure_latency;
  const EvalReport report = evaluate(ModelPredictor(model), windows, opts);
  std::string table = format_table(report);
  json doc;
  doc["model"] = nlohmann::json(report);
  if (a.baseline) {
    const EvalReport base = evaluate(LastFrameRepeat(), windows, opts);
    doc["last_frame_repeat"] = nlohmann::json(base);
    const std::string base_table = format_table(base, "LastFrameRepeat");
    table += base_table.substr(base_table.find('\n', base_table.find('\n') + 1) + 1);
  }

  const fs::path out = resolve_out(a.out);
  ensure_dir(out);
  write_text(out / "report.json", doc.dump(2) + "\n");
  write_text(out / "report.txt", table);
  Manifest manifest("eval", argv);
  manifest.doc["seed"] = ckpt.config.seed;
  manifest.doc["config"] = {{"checkpoint", fs::absolute(a.checkpoint).string()},
                            {"data_dir", fs::absolute(a.data).string()},
                            {"stride", a.stride},
                            {"measure_latency", a.measure_latency},
                            {"model", nlohmann::json(ckpt.config)}};
  manifest.doc["artifacts"] = {{"report_json", (out / "report.json").string()},
                               {"report_txt", (out / "report.txt").string()}};
  manifest.write(out);
  std::fputs(table.c_str(), stdout);
  return 0;
}

struct PredictArgs {
  fs::path checkpoint, motion, out;
  std::size_t t_index = 0;
};

int run_predict(const PredictArgs& a) {
  const StpotrModel model = load_checkpoint(a.checkpoint);
  const MotionSequence seq = resample(read_motion_file(a.motion), kDefaultFrameRate);
  const std::size_t m = model.config().input_frames;
  if (a.t_index >= seq.frames.size()) {
    throw DataError("--t-index " + std::to_string(a.t_index) + " is past the last frame (" +
                    std::to_string(seq.frames.size()) + " frames)");
  }
  if (a.t_index + 1 < m) {
    throw DataError("insufficient history: --t-index " + std::to_string(a.t_index) + " has " +
                    std::to_string(a.t_index + 1) + " frames at or before it, need " + std::to_string(m));
  }
  std::vector<PoseVec> pose;
  std::vector<TrajVec> traj;
  for (std::size_t i = a.t_index + 1 - m; i <= a.t_index; ++i) {
    auto [p, t] = decompose(seq.frames[i]);
    pose.push_back(p);
    traj.push_back(t);
  }
  const Forecast f = ModelPredictor(model).predict(pose, traj);
  MotionSequence out_seq;
  out_seq.frame_rate_hz = kDefaultFrameRate;
  for (std::size_t k = 0; k < f.pose.size(); ++k) out_seq.frames.push_back(compose(f.pose[k], f.traj[k]));
  const fs::path out = resolve_out(a.out);
  ensure_parent(out);
  write_motion_file(out, out_seq);
  std::printf("wrote %zu predicted frames to %s\n", out_seq.frames.size(), out.string().c_str());
  return 0;
}

struct SimulateArgs {
  fs::path checkpoint, out;
  std::string scenario;
  bool oracle = false;
  std::optional<std::string> human_path, robot_start;
  std::optional<double> duration;
  std::optional<std::uint64_t> seed;
};

int run_simulate(const SimulateArgs& a, const std::vector<std::string>& argv) {
  KeyValues kv;
  if (!a.scenario.empty()) kv = read_key_values(a.scenario);
  if (a.human_path) kv["human_path"] = *a.human_path;
  if (a.robot_start) kv["robot_start"] = *a.robot_start;
  if (a.duration) kv["duration_s"] = std::to_string(*a.duration);
  if (a.seed) kv["seed"] = std::to_string(*a.seed);
  const ScenarioConfig cfg = scenario_from_key_values(kv);
  if (a.oracle == !a.checkpoint.empty()) throw UsageError("give exactly one of --checkpoint or --oracle");

  std::optional<StpotrModel> model;
  std::optional<ModelPredictor> predictor;
  Forecaster forecaster;
  if (a.oracle) {
    forecaster = oracle_forecaster(cfg);
  } else {
    model.emplace(load_checkpoint(a.checkpoint));
    predictor.emplace(*model);
    forecaster = model_forecaster(*predictor);
  }
  const ScenarioResult result = simulate(cfg, forecaster);

  const fs::path out = resolve_out(a.out);
  ensure_dir(out);
  {
    std::ofstream csv(out / "log.csv", std::ios::binary);
    write_scenario_csv(csv, result);
    if (!csv) throw DataError("cannot write " + (out / "log.csv").string());
  }
  write_text(out / "summary.json", scenario_summary_json(cfg, result));
  Manifest manifest("simulate", argv);
  manifest.doc["seed"] = cfg.seed;
  json scenario;
  for (const auto& [k, v] : scenario_to_key_values(cfg)) scenario[k] = v;
  manifest.doc["config"] = {{"predictor", a.oracle ? "oracle" : fs::absolute(a.checkpoint).string()},
                            {"scenario", scenario}};
  manifest.doc["artifacts"] = {{"log_csv", (out / "log.csv").string()},
                               {"summary_json", (out / "summary.json").string()}};
  manifest.doc["result"] = {{"total_reward", result.total_reward},
                            {"min_separation_m", result.min_separation},
                            {"forecast_ms_mean", result.forecast_ms_mean}};
  manifest.write(out);
  std::printf("%zu steps, total reward %.3f, cone fraction %.2f, min separation %.2f m\n", result.log.size(),
              result.total_reward, result.cone_fraction(), result.min_separation);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Human pose and trajectory forecasting with robot follow-ahead"};
  app.require_subcommand(1);
  app.set_version_flag("--version", STPOTR_VERSION);

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic motion file");
  gen_cmd->add_option("--kind", gen.kind, "straight_walk | s_curve_walk | u_turn_walk | sit_stand | stationary")
      ->capture_default_str();
  gen_cmd->add_option("--duration", gen.duration, "Seconds of motion")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output motion file")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a directory of motion files");
  train_cmd->add_option("--data", tr.data, "Directory of *.motion files")->required();
  train_cmd->add_option("--out", tr.out, "Run directory")->required();
  train_cmd->add_option("--model-config", tr.model_config, "key=value model config file");
  train_cmd->add_option("--train-config", tr.train_config, "key=value training config file");
  train_cmd->add_option("--scale", tr.scale, "desk | tiny | full")
      ->check(CLI::IsMember({"desk", "tiny", "full"}))
      ->capture_default_str();
  train_cmd->add_flag("--full-scale", tr.full_scale, "Same as --scale full");
  train_cmd->add_option("--lr", tr.lr, "Peak learning rate");
  train_cmd->add_option("--steps", tr.steps, "Optimizer steps");
  train_cmd->add_option("--warmup", tr.warmup, "Warm-up steps");
  train_cmd->add_option("--batch", tr.batch, "Batch size");
  train_cmd->add_option("--dropout", tr.dropout, "Dropout probability");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Intermediate checkpoint cadence in steps");
  train_cmd->add_option("--seed", tr.seed, "Seed for initialisation, shuffling, dropout and noise");
  train_cmd->add_option("--stride", tr.stride, "Window stride in frames")->capture_default_str();
  train_cmd->add_flag("--no-shared-attention", tr.no_shared, "Drop the Shared Attention block");
  train_cmd->add_flag("--no-end-attention", tr.no_end, "Drop the End Attention blocks");
  train_cmd->add_flag("--post-normalized", tr.post_norm, "Post-norm instead of pre-norm layers");
  train_cmd->add_flag("--shared-attention-pose-side", tr.pose_side, "Shared Attention feeds the pose branch");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a directory of motion files");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("--data", ev.data, "Directory of *.motion files")->required();
  eval_cmd->add_option("--out", ev.out, "Report directory")->required();
  eval_cmd->add_option("--model-config", ev.model_config, "Expected model config; mismatches are errors");
  eval_cmd->add_option("--stride", ev.stride, "Window stride in frames")->capture_default_str();
  eval_cmd->add_flag("--measure-latency", ev.measure_latency, "Time each prediction (reports are then not reproducible)");
  eval_cmd->add_flag("--baseline", ev.baseline, "Also report the last-frame-repeat baseline");

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Predict the 20 frames after a given frame");
  predict_cmd->add_option("--checkpoint", pr.checkpoint, "Model checkpoint")->required();
  predict_cmd->add_option("--motion", pr.motion, "Input motion file")->required();
  predict_cmd->add_option("--t-index", pr.t_index, "Last observed frame")->required();
  predict_cmd->add_option("--out", pr.out, "Output motion file")->required();

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a follow-ahead scenario");
  sim_cmd->add_option("--checkpoint", sim.checkpoint, "Model checkpoint used as predictor");
  sim_cmd->add_flag("--oracle", sim.oracle, "Use the scripted human's true future");
  sim_cmd->add_option("--scenario", sim.scenario, "key=value scenario file");
  sim_cmd->add_option("--human-path", sim.human_path, "straight | s_shaped | u_shaped | sit_stand | stationary");
  sim_cmd->add_option("--robot-start", sim.robot_start, "front | behind | left | right");
  sim_cmd->add_option("--duration", sim.duration, "Seconds");
  sim_cmd->add_option("--seed", sim.seed, "Observation noise seed");
  sim_cmd->add_option("--out", sim.out, "Result directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*gen_cmd) return run_generate(gen);
    if (*train_cmd) return run_train(tr, args);
    if (*eval_cmd) return run_eval(ev, args);
    if (*predict_cmd) return run_predict(pr);
    if (*sim_cmd) return run_simulate(sim, args);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: training diverged: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
