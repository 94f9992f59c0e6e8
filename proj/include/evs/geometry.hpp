#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <optional>
#include <string>

namespace evs {

/// Pinhole intrinsics of a rectified, distortion-free camera.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && cx >= 0.0 && cx < width && cy >= 0.0 &&
           cy < height && width > 0 && height > 0;
  }
  bool contains(const Eigen::Vector2d& px, double margin = 0.0) const {
    return px.x() >= margin && px.x() <= width - 1 - margin &&
           px.y() >= margin && px.y() <= height - 1 - margin;
  }
};

/// Rigid-body transform: p_out = q * p_in + t.
struct RigidTransform {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }
  RigidTransform compose(const RigidTransform& rhs) const {
    return {(rotation * rhs.rotation).normalized(),
            rotation * rhs.translation + translation};
  }
  RigidTransform inverse() const {
    const Eigen::Quaterniond qi = rotation.conjugate();
    return {qi, qi * (-translation)};
  }
};

/// Calibrated stereo rig. T_right_left maps left-camera coordinates into the
/// right-camera frame; T_imu_left maps left-camera coordinates into the IMU
/// body frame.
struct StereoRig {
  CameraIntrinsics left;
  CameraIntrinsics right;
  RigidTransform T_right_left;
  RigidTransform T_imu_left;

  double baseline() const { return T_right_left.translation.norm(); }
  /// True when the rig is the rectified horizontal configuration: identity
  /// relative rotation and translation along -x.
  bool rectified_horizontal(double tol = 1e-6) const;
};

/// Minimal 3-parameter rotation, |c| = tan(angle/2).
struct CayleyParams {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
};

/// Unknown of the tracking objective: rotation as Cayley parameters plus
/// translation, encoding the current-from-reference transform.
struct MotionParams {
  CayleyParams cayley;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  RigidTransform to_transform() const;
  static MotionParams from_transform(const RigidTransform& T);
  bool finite() const {
    return cayley.c.allFinite() && translation.allFinite();
  }
};

/// Pinhole projection. Requires p.z > 0; throws std::domain_error otherwise.
/// The result may lie outside the sensor bounds.
Eigen::Vector2d project(const Eigen::Vector3d& p, const CameraIntrinsics& K);

/// Ray through pixel x at depth 1/inv_depth. Requires inv_depth > 0.
Eigen::Vector3d backproject(const Eigen::Vector2d& x, double inv_depth,
                            const CameraIntrinsics& K);

/// R = (I + [c]x)(I - [c]x)^-1. Always well defined for finite c.
Eigen::Matrix3d cayley_to_rotation(const CayleyParams& c);

/// Inverse of cayley_to_rotation; c = v/w for quaternion (w, v). Throws for
/// rotations at or near angle pi.
CayleyParams rotation_to_cayley(const Eigen::Matrix3d& R);
CayleyParams rotation_to_cayley(const Eigen::Quaterniond& q);

/// Warp a reference pixel with inverse depth rho into the current frame
/// under the current-from-reference motion. Empty when the transformed point
/// lands behind the camera.
std::optional<Eigen::Vector2d> warp(const Eigen::Vector2d& x, double rho,
                                    const MotionParams& theta,
                                    const CameraIntrinsics& K_ref,
                                    const CameraIntrinsics& K_cur);

struct WarpResult {
  Eigen::Vector2d pixel;
  Eigen::Matrix<double, 2, 6> jacobian;  // d pixel / d (c1 c2 c3 tx ty tz)
  Eigen::Vector3d point_cur;             // transformed 3D point
};

/// Warp plus the analytic Jacobian of the warped pixel w.r.t. the motion
/// parameters. Empty when the point lands behind the camera.
std::optional<WarpResult> warp_with_jacobian(const Eigen::Vector2d& x,
                                             double rho,
                                             const MotionParams& theta,
                                             const CameraIntrinsics& K_ref,
                                             const CameraIntrinsics& K_cur);

/// Parse the plain-text calibration format with [left], [right] and
/// [extrinsics] sections. Throws std::runtime_error naming the offending
/// line on malformed input.
StereoRig parse_calibration(const std::string& text);
StereoRig load_calibration(const std::string& path);
std::string format_calibration(const StereoRig& rig);

}  // namespace evs
