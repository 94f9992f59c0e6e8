#pragma once

#include <string>
#include <vector>

#include "evs/geometry.hpp"
#include "evs/mapping.hpp"
#include "evs/representations.hpp"
#include "evs/sampling.hpp"
#include "evs/tracking.hpp"

namespace evs {

/// Timestamped poses, TUM convention.
struct TrajectoryRecord {
  struct Entry {
    double t = 0.0;  // seconds
    RigidTransform T_world_cam;
  };
  std::vector<Entry> poses;
};

// Event files carry a one-line header identifying the variant:
//   "evs-events ascii <width> <height>"  then "t_us x y p" per line, or
//   "evs-events binary <width> <height>" then u64 count followed by
//   little-endian records (u64 t, u16 x, u16 y, i8 p).
void save_events_ascii(const std::string& path,
                       const std::vector<Event>& events, int width,
                       int height);
void save_events_binary(const std::string& path,
                        const std::vector<Event>& events, int width,
                        int height);
/// Loads either variant; throws std::runtime_error naming the first
/// offending line on malformed or unsorted input.
std::vector<Event> load_events(const std::string& path, int* width = nullptr,
                               int* height = nullptr);

// Gyro file: "t_us wx wy wz" per line (rad/s).
void save_gyro(const std::string& path,
               const std::vector<GyroSample>& samples);
std::vector<GyroSample> load_gyro(const std::string& path);

// TUM trajectory: "t_s tx ty tz qx qy qz qw" per line.
void save_trajectory_tum(const std::string& path,
                         const TrajectoryRecord& traj);
std::string format_trajectory_tum(const TrajectoryRecord& traj);
TrajectoryRecord load_trajectory_tum(const std::string& path);

/// Max-normalized portable graymap for visual inspection.
void save_pgm(const std::string& path, const Eigen::ArrayXXf& img);

/// 32-bit float binary grid: header "evs-grid <w> <h>\n" + row-major floats.
void save_float_grid(const std::string& path, const Eigen::ArrayXXf& grid);
Eigen::ArrayXXf load_float_grid(const std::string& path);

/// ASCII PLY point cloud of the map in anchor-frame coordinates.
void save_ply(const std::string& path, const LocalMap& map,
              const CameraIntrinsics& K);

/// Sampled-pixel debug dump: "x,y,count,gx,gy,group" CSV.
void save_sample_csv(const std::string& path, const SampledPixelSet& temporal,
                     const SampledPixelSet& staticgrp);

}  // namespace evs
