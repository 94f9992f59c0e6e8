#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <vector>

#include "evs/geometry.hpp"
#include "evs/representations.hpp"
#include "evs/tracking.hpp"

namespace evs {

/// Textured rectangular plane. The texture is a square wave of the in-plane
/// coordinate perpendicular to the edge direction, so every stripe boundary
/// is a step edge with the given orientation.
struct TexturedPlane {
  RigidTransform T_world_plane;  // plane frame: z = plane normal
  double half_width = 1.0;       // meters, along plane x
  double half_height = 1.0;      // meters, along plane y
  double edge_angle_deg = 90.0;  // stripe/edge orientation in plane (0 = horizontal image edges when fronto-parallel)
  double stripe_period = 0.25;   // meters
  double bright = 1.0;
  double dark = 0.1;
};

struct SceneSpec {
  std::vector<TexturedPlane> planes;
  double background = 0.5;  // intensity where no primitive is hit
};

/// Piecewise constant body twist segment.
struct TwistSegment {
  double duration = 1.0;                        // seconds
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();  // rad/s, body frame
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // m/s, body frame
};

struct TrajectorySpec {
  RigidTransform start;  // T_world_body at t = 0
  std::vector<TwistSegment> segments;

  double duration() const;
  /// Closed-form pose at time t (seconds): T_world_body(t).
  RigidTransform pose(double t) const;
  /// Body angular rate at time t.
  Eigen::Vector3d body_rate(double t) const;
};

struct RenderOptions {
  double contrast_threshold = 0.15;  // log-intensity step per event
  double sample_rate = 2000.0;       // Hz, >= 1 kHz
  uint64_t seed = 1;
  double timestamp_jitter_us = 0.0;  // optional noise knobs
  double noise_event_rate = 0.0;     // salt-and-pepper events per pixel per s
};

struct StereoEventStreams {
  std::vector<Event> left;
  std::vector<Event> right;
};

/// Per-pixel inverse depth with validity mask.
struct InverseDepthImage {
  Eigen::ArrayXXf inv_depth;
  Eigen::Array<uint8_t, Eigen::Dynamic, Eigen::Dynamic> valid;
};

/// Threshold-crossing event generation: per-pixel log intensity is sampled
/// along the trajectory and an event is emitted each time the accumulated
/// change crosses the contrast threshold, with linearly interpolated
/// timestamps. Deterministic under a fixed seed.
StereoEventStreams render_events(const SceneSpec& scene,
                                 const TrajectorySpec& traj,
                                 const StereoRig& rig,
                                 const RenderOptions& opt);

/// Gyro measurements per the additive bias + white noise model.
std::vector<GyroSample> render_gyro(const TrajectorySpec& traj,
                                    const GyroBias& bias, double noise_sd,
                                    double rate_hz, uint64_t seed);

/// Ray-primitive intersection depth per pixel at the given camera pose.
InverseDepthImage true_depth_map(const SceneSpec& scene,
                                 const RigidTransform& T_world_cam,
                                 const CameraIntrinsics& K);

/// Scene intensity seen by camera pixel (x, y); background when no hit.
double scene_intensity(const SceneSpec& scene,
                       const RigidTransform& T_world_cam,
                       const CameraIntrinsics& K, double x, double y);

/// Constant-twist exponential: pose increment of twist (omega, v) over dt.
RigidTransform twist_exp(const Eigen::Vector3d& omega,
                         const Eigen::Vector3d& v, double dt);

// Plain-text key-value specs:
//   scene:      "background <v>" and per line
//               "plane qw qx qy qz tx ty tz half_w half_h edge_deg period
//                bright dark"
//   trajectory: "start qw qx qy qz tx ty tz" and per line
//               "segment duration wx wy wz vx vy vz"
SceneSpec parse_scene_spec(const std::string& text);
TrajectorySpec parse_trajectory_spec(const std::string& text);
SceneSpec load_scene_spec(const std::string& path);
TrajectorySpec load_trajectory_spec(const std::string& path);

}  // namespace evs
