#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <span>
#include <vector>

#include "evs/geometry.hpp"
#include "evs/mapping.hpp"
#include "evs/representations.hpp"

namespace evs {

struct GyroSample {
  int64_t t = 0;                              // microseconds
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();  // rad/s, body frame
};

struct GyroBias {
  Eigen::Vector3d b = Eigen::Vector3d::Zero();  // rad/s
};

/// Relative body rotation accumulated from gyro samples over an interval.
/// The quaternion maps coordinates of the end frame into the start frame
/// (the standard preintegrated delta-rotation).
struct PreintegratedRotation {
  Eigen::Quaterniond gamma = Eigen::Quaterniond::Identity();
  int64_t t_start = 0;
  int64_t t_end = 0;
  bool empty_interval = false;
};

struct SolveOptions {
  int max_iterations = 50;
  double step_tolerance = 1e-6;
  int min_points = 50;
  bool use_huber = false;    // Eq-style objective is unweighted by default
  double huber_delta = 0.5;  // in negative-TS units
  // Quadratic pull of the rotation towards its initial value, scaled by the
  // number of usable points. Lateral translation and rotation are nearly
  // interchangeable against shallow scenes; when the initializer carries
  // gyro information this term resolves that ambiguity.
  double rotation_prior_weight = 0.0;
};

struct TrackingResult {
  MotionParams motion;
  double objective = 0.0;
  int iterations = 0;
  double inlier_fraction = 0.0;
  bool lost = false;
};

/// Midpoint-rule quaternion integration of the gyro rate equation with
/// per-step renormalization. Samples outside [t_start, t_end] are clipped.
PreintegratedRotation preintegrate_gyro(std::span<const GyroSample> samples,
                                        const GyroBias& bias, int64_t t_start,
                                        int64_t t_end);

/// Compose two adjacent preintegrated rotations.
PreintegratedRotation compose_preintegrated(const PreintegratedRotation& ab,
                                            const PreintegratedRotation& bc);

/// Conjugate the body-frame delta rotation into the left-camera frame and
/// convert to Cayley parameters.
CayleyParams rotation_prior_to_camera(const PreintegratedRotation& gamma,
                                      const StereoRig& rig);

/// Cayley initializer for the current-from-reference warp: the inverse of
/// the camera-frame delta rotation.
CayleyParams warp_rotation_prior(const PreintegratedRotation& gamma,
                                 const StereoRig& rig);

/// Sum over map points of the bilinearly interpolated negative TS at warped
/// locations; off-image or behind-camera points contribute the penalty 1.
/// Throws std::invalid_argument on an empty map.
double objective(const MotionParams& theta, const LocalMap& map,
                 const TimeSurfaceMap& ts_neg, const CameraIntrinsics& K_ref,
                 const CameraIntrinsics& K_cur,
                 std::vector<double>* residuals = nullptr);

/// Gauss-Newton with backtracking line search on the registration objective.
/// Accepted iterates never increase the objective; the result is never worse
/// than the initializer.
TrackingResult solve_pose(const LocalMap& map, const TimeSurfaceMap& ts_neg,
                          const MotionParams& theta_init,
                          const CameraIntrinsics& K_ref,
                          const CameraIntrinsics& K_cur,
                          const SolveOptions& opt = {});

}  // namespace evs
