#include "evs/geometry.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace evs {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d S;
  S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return S;
}

}  // namespace

bool StereoRig::rectified_horizontal(double tol) const {
  const double angle =
      Eigen::AngleAxisd(T_right_left.rotation.normalized()).angle();
  const Eigen::Vector3d& t = T_right_left.translation;
  return std::abs(angle) < tol && t.norm() > 0.0 &&
         std::abs(t.x() + t.norm()) < tol * std::max(1.0, t.norm());
}

RigidTransform MotionParams::to_transform() const {
  const Eigen::Matrix3d R = cayley_to_rotation(cayley);
  return {Eigen::Quaterniond(R).normalized(), translation};
}

MotionParams MotionParams::from_transform(const RigidTransform& T) {
  MotionParams m;
  m.cayley = rotation_to_cayley(T.rotation);
  m.translation = T.translation;
  return m;
}

Eigen::Vector2d project(const Eigen::Vector3d& p, const CameraIntrinsics& K) {
  if (!(p.z() > 0.0)) {
    throw std::domain_error("project: point behind camera (z <= 0)");
  }
  return {K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy};
}

Eigen::Vector3d backproject(const Eigen::Vector2d& x, double inv_depth,
                            const CameraIntrinsics& K) {
  if (!(inv_depth > 0.0)) {
    throw std::domain_error("backproject: inverse depth must be positive");
  }
  const double z = 1.0 / inv_depth;
  return {z * (x.x() - K.cx) / K.fx, z * (x.y() - K.cy) / K.fy, z};
}

Eigen::Matrix3d cayley_to_rotation(const CayleyParams& c) {
  const Eigen::Matrix3d S = skew(c.c);
  const Eigen::Matrix3d A = Eigen::Matrix3d::Identity() - S;
  // A = I - [c]x is always invertible: det(A) = 1 + |c|^2.
  return (Eigen::Matrix3d::Identity() + S) * A.inverse();
}

CayleyParams rotation_to_cayley(const Eigen::Quaterniond& q) {
  Eigen::Quaterniond qn = q.normalized();
  if (qn.w() < 0.0) {
    qn.coeffs() = -qn.coeffs();
  }
  if (qn.w() < 1e-7) {
    throw std::domain_error(
        "rotation_to_cayley: rotation angle at or near pi is not "
        "representable");
  }
  CayleyParams c;
  c.c = qn.vec() / qn.w();
  return c;
}

CayleyParams rotation_to_cayley(const Eigen::Matrix3d& R) {
  return rotation_to_cayley(Eigen::Quaterniond(R));
}

std::optional<Eigen::Vector2d> warp(const Eigen::Vector2d& x, double rho,
                                    const MotionParams& theta,
                                    const CameraIntrinsics& K_ref,
                                    const CameraIntrinsics& K_cur) {
  const Eigen::Vector3d p_ref = backproject(x, rho, K_ref);
  const Eigen::Vector3d p_cur =
      cayley_to_rotation(theta.cayley) * p_ref + theta.translation;
  if (!(p_cur.z() > 0.0)) {
    return std::nullopt;
  }
  return project(p_cur, K_cur);
}

std::optional<WarpResult> warp_with_jacobian(const Eigen::Vector2d& x,
                                             double rho,
                                             const MotionParams& theta,
                                             const CameraIntrinsics& K_ref,
                                             const CameraIntrinsics& K_cur) {
  const Eigen::Vector3d p_ref = backproject(x, rho, K_ref);
  const Eigen::Matrix3d S = skew(theta.cayley.c);
  const Eigen::Matrix3d A_inv =
      (Eigen::Matrix3d::Identity() - S).inverse();
  const Eigen::Matrix3d R = (Eigen::Matrix3d::Identity() + S) * A_inv;
  const Eigen::Vector3d p_cur = R * p_ref + theta.translation;
  if (!(p_cur.z() > 0.0)) {
    return std::nullopt;
  }

  WarpResult out;
  out.point_cur = p_cur;
  out.pixel = project(p_cur, K_cur);

  const double z_inv = 1.0 / p_cur.z();
  Eigen::Matrix<double, 2, 3> J_proj;
  J_proj << K_cur.fx * z_inv, 0.0, -K_cur.fx * p_cur.x() * z_inv * z_inv,
      0.0, K_cur.fy * z_inv, -K_cur.fy * p_cur.y() * z_inv * z_inv;

  // d(R p)/dc = (I + R) d[c]x/dc_i (A^-1 p) = -(I + R) [A^-1 p]x.
  const Eigen::Vector3d y = A_inv * p_ref;
  const Eigen::Matrix3d dRp_dc =
      -(Eigen::Matrix3d::Identity() + R) * skew(y);

  out.jacobian.leftCols<3>() = J_proj * dRp_dc;
  out.jacobian.rightCols<3>() = J_proj;
  return out;
}

namespace {

[[noreturn]] void calib_error(int line_no, const std::string& msg) {
  throw std::runtime_error("calibration parse error at line " +
                           std::to_string(line_no) + ": " + msg);
}

}  // namespace

StereoRig parse_calibration(const std::string& text) {
  StereoRig rig;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  bool have_left = false, have_right = false, have_extr = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    if (tok.front() == '[') {
      if (tok.back() != ']') calib_error(line_no, "malformed section header");
      section = tok.substr(1, tok.size() - 2);
      continue;
    }
    auto read_vals = [&](double* dst, int n) {
      std::istringstream vs(line);
      std::string key;
      vs >> key;
      for (int i = 0; i < n; ++i) {
        if (!(vs >> dst[i])) calib_error(line_no, "expected numeric values");
      }
    };
    if (section == "left" || section == "right") {
      CameraIntrinsics& K = section == "left" ? rig.left : rig.right;
      if (tok == "intrinsics") {
        double v[6];
        read_vals(v, 6);
        K.fx = v[0];
        K.fy = v[1];
        K.cx = v[2];
        K.cy = v[3];
        K.width = static_cast<int>(v[4]);
        K.height = static_cast<int>(v[5]);
        if (!K.valid()) calib_error(line_no, "invalid intrinsics");
        (section == "left" ? have_left : have_right) = true;
      } else {
        calib_error(line_no, "unknown key '" + tok + "'");
      }
    } else if (section == "extrinsics") {
      auto read_transform = [&](RigidTransform& T) {
        double v[7];
        read_vals(v, 7);
        T.rotation = Eigen::Quaterniond(v[0], v[1], v[2], v[3]);
        if (std::abs(T.rotation.norm() - 1.0) > 1e-6) {
          calib_error(line_no, "quaternion not unit norm");
        }
        T.rotation.normalize();
        T.translation = Eigen::Vector3d(v[4], v[5], v[6]);
      };
      if (tok == "T_right_left") {
        read_transform(rig.T_right_left);
        have_extr = true;
      } else if (tok == "T_imu_left") {
        read_transform(rig.T_imu_left);
      } else if (tok == "gyro_bias") {
        // consumed by the tracking side via load helpers; validated here
        double v[3];
        read_vals(v, 3);
      } else {
        calib_error(line_no, "unknown key '" + tok + "'");
      }
    } else {
      calib_error(line_no, "key outside of any section");
    }
  }
  if (!have_left || !have_right || !have_extr) {
    throw std::runtime_error(
        "calibration parse error: missing [left], [right] or [extrinsics] "
        "section");
  }
  return rig;
}

StereoRig load_calibration(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open calibration file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_calibration(ss.str());
}

std::string format_calibration(const StereoRig& rig) {
  std::ostringstream os;
  os.precision(12);
  auto emit_cam = [&](const char* name, const CameraIntrinsics& K) {
    os << "[" << name << "]\n";
    os << "intrinsics " << K.fx << " " << K.fy << " " << K.cx << " " << K.cy
       << " " << K.width << " " << K.height << "\n";
  };
  auto emit_tf = [&](const char* key, const RigidTransform& T) {
    const auto& q = T.rotation;
    const auto& t = T.translation;
    os << key << " " << q.w() << " " << q.x() << " " << q.y() << " " << q.z()
       << " " << t.x() << " " << t.y() << " " << t.z() << "\n";
  };
  emit_cam("left", rig.left);
  emit_cam("right", rig.right);
  os << "[extrinsics]\n";
  emit_tf("T_right_left", rig.T_right_left);
  emit_tf("T_imu_left", rig.T_imu_left);
  return os.str();
}

}  // namespace evs
