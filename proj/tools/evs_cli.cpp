// Command-line front end: odometry runs, synthetic data generation and
// trajectory/depth evaluation.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <random>

#include "evs/evaluation.hpp"
#include "evs/io.hpp"
#include "evs/pipeline.hpp"
#include "evs/synth.hpp"

namespace {

evs::PipelineConfig make_config(const std::string& config_path,
                                const std::vector<std::string>& overrides,
                                uint64_t seed, bool seed_set) {
  evs::PipelineConfig cfg;
  if (!config_path.empty()) cfg = evs::load_config(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("override must be key=value: " + kv);
    }
    evs::apply_config_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed_set) cfg.seed = seed;
  return cfg;
}

int cmd_run(const std::string& config_path,
            const std::vector<std::string>& overrides, uint64_t seed,
            bool seed_set, const std::string& calib_path,
            const std::string& left_path, const std::string& right_path,
            const std::string& gyro_path, const std::string& out_traj,
            const std::string& out_depth, const std::string& out_ply,
            const std::string& out_timing, bool single_thread) {
  evs::PipelineConfig cfg = make_config(config_path, overrides, seed, seed_set);
  if (single_thread) cfg.single_thread = true;

  const evs::StereoRig rig = evs::load_calibration(calib_path);
  const auto left = evs::load_events(left_path);
  const auto right = evs::load_events(right_path);
  std::vector<evs::GyroSample> gyro;
  if (!gyro_path.empty()) gyro = evs::load_gyro(gyro_path);

  const evs::OdometryResult result =
      evs::run_odometry(cfg, left, right, gyro, rig);

  evs::save_trajectory_tum(out_traj, result.trajectory);
  if (!out_depth.empty()) {
    const auto grid = evs::rasterize_inv_depth(result.final_map,
                                               rig.left.width,
                                               rig.left.height);
    evs::save_float_grid(out_depth, grid);
    evs::save_pgm(out_depth + ".pgm", grid);
  }
  if (!out_ply.empty()) {
    evs::save_ply(out_ply, result.final_map, rig.left);
  }
  if (!out_timing.empty()) {
    std::ofstream f(out_timing);
    f << result.timing.to_csv();
  }
  std::cout << "cycles " << result.cycles << " lost " << result.lost_cycles
            << " map " << result.final_map.size()
            << (result.halted_early ? " (halted early)" : "") << "\n";
  return result.halted_early ? 2 : 0;
}

int cmd_synth(const std::string& scene_path, const std::string& traj_path,
              const std::string& calib_path, const std::string& out_dir,
              double contrast, double sample_rate, double gyro_rate,
              double gyro_noise_sd, double bias_x, double bias_y,
              double bias_z, uint64_t seed, bool binary_events) {
  const evs::SceneSpec scene = evs::load_scene_spec(scene_path);
  const evs::TrajectorySpec traj = evs::load_trajectory_spec(traj_path);
  const evs::StereoRig rig = evs::load_calibration(calib_path);

  evs::RenderOptions opt;
  opt.contrast_threshold = contrast;
  opt.sample_rate = sample_rate;
  opt.seed = seed;
  const auto streams = evs::render_events(scene, traj, rig, opt);

  evs::GyroBias bias;
  bias.b = Eigen::Vector3d(bias_x, bias_y, bias_z);
  const auto gyro =
      evs::render_gyro(traj, bias, gyro_noise_sd, gyro_rate, seed + 7);

  auto save = binary_events ? evs::save_events_binary : evs::save_events_ascii;
  save(out_dir + "/events_left.evs", streams.left, rig.left.width,
       rig.left.height);
  save(out_dir + "/events_right.evs", streams.right, rig.right.width,
       rig.right.height);
  evs::save_gyro(out_dir + "/gyro.txt", gyro);

  // Ground-truth left-camera trajectory at 100 Hz, TUM format.
  evs::TrajectoryRecord gt;
  const evs::RigidTransform T_body_left = rig.T_imu_left.inverse();
  for (double t = 0.0; t <= traj.duration() + 1e-9; t += 0.01) {
    gt.poses.push_back({t, traj.pose(t).compose(T_body_left)});
  }
  evs::save_trajectory_tum(out_dir + "/gt_trajectory.txt", gt);

  const auto depth =
      evs::true_depth_map(scene, traj.pose(0.0).compose(T_body_left),
                          rig.left);
  evs::save_float_grid(out_dir + "/gt_inv_depth_t0.grid", depth.inv_depth);

  std::cout << "left events " << streams.left.size() << ", right events "
            << streams.right.size() << ", gyro samples " << gyro.size()
            << "\n";
  return 0;
}

int cmd_eval_ate(const std::string& est_path, const std::string& gt_path) {
  const auto est = evs::load_trajectory_tum(est_path);
  const auto gt = evs::load_trajectory_tum(gt_path);
  const double rmse_m = evs::evaluate_ate(est, gt);
  std::cout << "ATE RMSE: " << rmse_m * 100.0 << " cm\n";
  return 0;
}

int cmd_eval_rpe(const std::string& est_path, const std::string& gt_path,
                 double delta) {
  const auto est = evs::load_trajectory_tum(est_path);
  const auto gt = evs::load_trajectory_tum(gt_path);
  const auto rpe = evs::evaluate_rpe(est, gt, delta);
  std::cout << "RPE rotation: " << rpe.rotation_deg_per_m
            << " deg/m, translation: " << rpe.translation_percent << " % ("
            << rpe.segments << " segments)\n";
  return 0;
}

int cmd_eval_depth(const std::string& est_path, const std::string& gt_path) {
  const auto est = evs::load_float_grid(est_path);
  const auto gt_grid = evs::load_float_grid(gt_path);
  evs::InverseDepthImage gt;
  gt.inv_depth = gt_grid;
  gt.valid = (gt_grid > 0.0f).cast<uint8_t>();
  evs::LocalMap map(0);
  for (Eigen::Index y = 0; y < est.rows(); ++y) {
    for (Eigen::Index x = 0; x < est.cols(); ++x) {
      if (est(y, x) <= 0.0f) continue;
      evs::DepthEstimate e;
      e.pixel = Eigen::Vector2d(x, y);
      e.inv_depth = est(y, x);
      e.variance = 1.0;
      map.insert_raw(e);
    }
  }
  const auto r = evs::evaluate_depth(map, gt);
  std::cout << "mean error: " << r.mean_m << " m, median error: "
            << r.median_m << " m, relative error: " << r.relative * 100.0
            << " % (" << r.evaluated << " points)\n";
  return 0;
}

int cmd_bench_repr(int width, int height, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ux(0, width - 1), uy(0, height - 1);
  std::cout << "events,aa_ms,ts_ms\n";
  for (size_t n : {10'000, 30'000, 100'000, 300'000, 1'000'000}) {
    std::vector<evs::Event> events(n);
    for (size_t i = 0; i < n; ++i) {
      events[i] = {static_cast<int64_t>(i * 100 / (n / 10'000)),
                   static_cast<uint16_t>(ux(rng)),
                   static_cast<uint16_t>(uy(rng)), 1};
    }
    evs::BlockGrid grid{width, height, 30};
    const auto t0 = std::chrono::steady_clock::now();
    const auto aa =
        evs::build_adaptive_accumulation(events, grid, 0.5, 2000);
    const auto t1 = std::chrono::steady_clock::now();
    const auto ts = evs::build_time_surface(events, events.back().t, 0.03,
                                            width, height);
    const auto t2 = std::chrono::steady_clock::now();
    (void)aa;
    (void)ts;
    std::cout << n << ","
              << std::chrono::duration<double, std::milli>(t1 - t0).count()
              << ","
              << std::chrono::duration<double, std::milli>(t2 - t1).count()
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo event-camera visual-inertial odometry toolkit"};
  app.require_subcommand(1);

  std::string config_path, calib_path, left_path, right_path, gyro_path;
  std::string out_traj = "trajectory.txt", out_depth, out_ply, out_timing;
  std::vector<std::string> overrides;
  uint64_t seed = 42;
  bool single_thread = false;

  auto* run = app.add_subcommand("run", "run odometry over recorded data");
  run->add_option("--config", config_path, "config file");
  run->add_option("--calib", calib_path, "calibration file")->required();
  run->add_option("--left", left_path, "left event file")->required();
  run->add_option("--right", right_path, "right event file")->required();
  run->add_option("--gyro", gyro_path, "gyro file");
  run->add_option("--out-traj", out_traj, "output trajectory (TUM)");
  run->add_option("--out-depth", out_depth, "output inverse depth grid");
  run->add_option("--out-ply", out_ply, "output point cloud (PLY)");
  run->add_option("--out-timing", out_timing, "output timing CSV");
  run->add_option("--set", overrides, "config override key=value");
  auto* run_seed = run->add_option("--seed", seed, "seed override");
  run->add_flag("--single-thread", single_thread,
        "deterministic round-robin stage execution");

  std::string scene_path, traj_path, out_dir = ".";
  double contrast = 0.15, sample_rate = 2000.0, gyro_rate = 1000.0;
  double gyro_noise_sd = 0.0, bias_x = 0.0, bias_y = 0.0, bias_z = 0.0;
  bool binary_events = false;
  auto* synth = app.add_subcommand("synth", "generate synthetic data");
  synth->add_option("--scene", scene_path, "scene spec file")->required();
  synth->add_option("--traj", traj_path, "trajectory spec file")->required();
  synth->add_option("--calib", calib_path, "calibration file")->required();
  synth->add_option("--out-dir", out_dir, "output directory");
  synth->add_option("--contrast", contrast, "event contrast threshold");
  synth->add_option("--sample-rate", sample_rate, "render sample rate (Hz)");
  synth->add_option("--gyro-rate", gyro_rate, "gyro rate (Hz)");
  synth->add_option("--gyro-noise-sd", gyro_noise_sd, "gyro noise sd (rad/s)");
  synth->add_option("--bias-x", bias_x, "gyro bias x");
  synth->add_option("--bias-y", bias_y, "gyro bias y");
  synth->add_option("--bias-z", bias_z, "gyro bias z");
  synth->add_option("--seed", seed, "render seed");
  synth->add_flag("--binary", binary_events, "binary event files");

  std::string est_path, gt_path;
  double delta = 0.5;
  auto* eval_ate = app.add_subcommand("eval-ate", "absolute trajectory RMSE");
  eval_ate->add_option("--est", est_path, "estimated trajectory")->required();
  eval_ate->add_option("--gt", gt_path, "ground-truth trajectory")->required();

  auto* eval_rpe = app.add_subcommand("eval-rpe", "relative pose RMSE");
  eval_rpe->add_option("--est", est_path, "estimated trajectory")->required();
  eval_rpe->add_option("--gt", gt_path, "ground-truth trajectory")->required();
  eval_rpe->add_option("--delta", delta, "segment length (m)");

  auto* eval_depth = app.add_subcommand("eval-depth", "depth errors vs gt");
  eval_depth->add_option("--est", est_path, "estimated inverse depth grid")
      ->required();
  eval_depth->add_option("--gt", gt_path, "ground-truth inverse depth grid")
      ->required();

  int width = 640, height = 480;
  auto* bench = app.add_subcommand("bench-repr",
                                   "AA/TS construction benchmark");
  bench->add_option("--width", width, "sensor width");
  bench->add_option("--height", height, "sensor height");
  bench->add_option("--seed", seed, "event seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return cmd_run(config_path, overrides, seed, !run_seed->empty(),
                     calib_path, left_path, right_path, gyro_path, out_traj,
                     out_depth, out_ply, out_timing, single_thread);
    }
    if (synth->parsed()) {
      return cmd_synth(scene_path, traj_path, calib_path, out_dir, contrast,
                       sample_rate, gyro_rate, gyro_noise_sd, bias_x, bias_y,
                       bias_z, seed, binary_events);
    }
    if (eval_ate->parsed()) return cmd_eval_ate(est_path, gt_path);
    if (eval_rpe->parsed()) return cmd_eval_rpe(est_path, gt_path, delta);
    if (eval_depth->parsed()) return cmd_eval_depth(est_path, gt_path);
    if (bench->parsed()) return cmd_bench_repr(width, height, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
