#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "evs/evaluation.hpp"
#include "evs/io.hpp"
#include "evs/mapping.hpp"
#include "evs/sampling.hpp"
#include "evs/tracking.hpp"

namespace evs {

/// Hyperparameters of the full pipeline; defaults follow the hand-held
/// configuration.
struct PipelineConfig {
  int w = 30;                 // block size (px); 80 for driving-scale rigs
  double delta_t_ms = 2.0;    // contrast recheck interval
  double beta = 0.5;          // contrast threshold
  double eta = 0.2;           // gradient ratio threshold
  double tau_ms = 30.0;       // TS decay
  int budget = 2500;          // sampled points per cycle
  double rate_hz = 100.0;     // representation generation rate
  double min_temporal_baseline_m = 0.01;
  // Re-anchor the local map only after the pose has moved this far from the
  // anchor. Per-cycle motion is usually below the event quantum (edges cross
  // at most one pixel centre per cycle), so aligning against a per-cycle
  // anchor would snap each solve to the nearest whole-pixel shift and
  // integrate the rounding into the pose. A persistent anchor keeps the
  // rounding bounded instead.
  double reanchor_translation_m = 0.02;
  double reanchor_rotation_rad = 0.1;
  int reanchor_max_cycles = 25;
  MatchingOptions matching;
  SolveOptions solver;
  GyroBias gyro_bias;
  uint64_t seed = 42;
  bool single_thread = false;
  int threads_preprocess = 1;
  int threads_tracking = 2;
  int threads_mapping = 4;
  int max_lost_cycles = 5;

  bool valid() const;
};

/// Key-value config file with the standard parameter names (w, delta_t_ms,
/// beta, eta, ...). Unknown keys are an error; any key can be overridden.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);
void apply_config_override(PipelineConfig& cfg, const std::string& key,
                           const std::string& value);

struct TimingReport {
  struct Row {
    std::string function;  // Table-style function names
    double mean_ms = 0.0;
    int64_t calls = 0;
  };
  std::vector<Row> rows;
  std::string to_csv() const;
};

struct OdometryResult {
  TrajectoryRecord trajectory;
  LocalMap final_map;
  RigidTransform final_anchor_pose;  // T_world_anchor of final_map
  TimingReport timing;
  int cycles = 0;
  int lost_cycles = 0;
  int64_t dropped_representations = 0;
  bool halted_early = false;
};

/// Full odometry loop over in-memory streams: representation generation at
/// the configured rate, gyro-prior-aided tracking, and combined
/// static/temporal mapping. Deterministic under a fixed config.
OdometryResult run_odometry(const PipelineConfig& cfg,
                            const std::vector<Event>& left_events,
                            const std::vector<Event>& right_events,
                            const std::vector<GyroSample>& gyro,
                            const StereoRig& rig);

}  // namespace evs
