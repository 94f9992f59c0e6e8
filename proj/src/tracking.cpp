#include "evs/tracking.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace evs {

namespace {

Eigen::Quaterniond small_rotation(const Eigen::Vector3d& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * rotvec.x(), 0.5 * rotvec.y(),
                         0.5 * rotvec.z());
    q.normalize();
    return q;
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, rotvec / angle));
}

}  // namespace

PreintegratedRotation preintegrate_gyro(std::span<const GyroSample> samples,
                                        const GyroBias& bias, int64_t t_start,
                                        int64_t t_end) {
  PreintegratedRotation out;
  out.t_start = t_start;
  out.t_end = t_end;
  if (samples.empty() || t_end <= t_start ||
      samples.back().t < t_start || samples.front().t > t_end) {
    // No data inside the window: nothing to integrate.
    out.empty_interval = true;
    return out;
  }

  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  // Integrate between consecutive samples with the midpoint rate, clipping
  // each step to [t_start, t_end]. A single sample extends over the whole
  // interval at its own rate.
  auto step = [&](const Eigen::Vector3d& omega, int64_t ta, int64_t tb) {
    const int64_t a = std::max(ta, t_start);
    const int64_t b = std::min(tb, t_end);
    if (b <= a) return;
    const double dt = static_cast<double>(b - a) * 1e-6;
    q = q * small_rotation((omega - bias.b) * dt);
    q.normalize();
  };

  if (samples.size() == 1) {
    step(samples[0].omega, t_start, t_end);
  } else {
    // Leading segment before the first midpoint pair.
    step(samples[0].omega, t_start, samples[0].t);
    for (size_t i = 0; i + 1 < samples.size(); ++i) {
      const Eigen::Vector3d mid =
          0.5 * (samples[i].omega + samples[i + 1].omega);
      step(mid, samples[i].t, samples[i + 1].t);
    }
    step(samples.back().omega, samples.back().t, t_end);
  }
  out.gamma = q;
  return out;
}

PreintegratedRotation compose_preintegrated(const PreintegratedRotation& ab,
                                            const PreintegratedRotation& bc) {
  PreintegratedRotation out;
  out.t_start = ab.t_start;
  out.t_end = bc.t_end;
  out.gamma = (ab.gamma * bc.gamma).normalized();
  return out;
}

CayleyParams rotation_prior_to_camera(const PreintegratedRotation& gamma,
                                      const StereoRig& rig) {
  const Eigen::Quaterniond q_il = rig.T_imu_left.rotation;
  const Eigen::Quaterniond q_cam =
      (q_il.conjugate() * gamma.gamma * q_il).normalized();
  return rotation_to_cayley(q_cam);
}

CayleyParams warp_rotation_prior(const PreintegratedRotation& gamma,
                                 const StereoRig& rig) {
  CayleyParams c = rotation_prior_to_camera(gamma, rig);
  c.c = -c.c;  // Cayley of the inverse rotation
  return c;
}

double objective(const MotionParams& theta, const LocalMap& map,
                 const TimeSurfaceMap& ts_neg, const CameraIntrinsics& K_ref,
                 const CameraIntrinsics& K_cur,
                 std::vector<double>* residuals) {
  if (map.empty()) {
    throw std::invalid_argument("objective: empty local map");
  }
  if (residuals) {
    residuals->clear();
    residuals->reserve(map.size());
  }
  double total = 0.0;
  for (const auto& [k, e] : map.estimates()) {
    double value = 1.0;  // off-image / behind-camera penalty
    const auto w = warp(e.pixel, e.inv_depth, theta, K_ref, K_cur);
    if (w && w->x() >= 0.0 && w->y() >= 0.0 &&
        w->x() <= ts_neg.width() - 1.0 && w->y() <= ts_neg.height() - 1.0) {
      value = bilinear(ts_neg.values, w->x(), w->y());
    }
    total += value;
    if (residuals) residuals->push_back(value);
  }
  return total;
}

TrackingResult solve_pose(const LocalMap& map, const TimeSurfaceMap& ts_neg,
                          const MotionParams& theta_init,
                          const CameraIntrinsics& K_ref,
                          const CameraIntrinsics& K_cur,
                          const SolveOptions& opt) {
  if (map.empty()) {
    throw std::invalid_argument("solve_pose: empty local map");
  }
  if (!theta_init.finite()) {
    throw std::invalid_argument("solve_pose: non-finite initializer");
  }

  TrackingResult result;
  result.motion = theta_init;
  result.objective = objective(theta_init, map, ts_neg, K_ref, K_cur);

  using Vec6 = Eigen::Matrix<double, 6, 1>;
  using Mat6 = Eigen::Matrix<double, 6, 6>;

  MotionParams theta = theta_init;

  const auto prior_cost = [&](const MotionParams& th, int usable) {
    if (opt.rotation_prior_weight <= 0.0) return 0.0;
    const Eigen::Vector3d d = th.cayley.c - theta_init.cayley.c;
    return 0.5 * opt.rotation_prior_weight * usable * d.squaredNorm();
  };

  double current = result.objective;

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    Mat6 H = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    int usable = 0;
    for (const auto& [k, e] : map.estimates()) {
      const auto w =
          warp_with_jacobian(e.pixel, e.inv_depth, theta, K_ref, K_cur);
      if (!w) continue;
      const double px = w->pixel.x(), py = w->pixel.y();
      if (px < 0.0 || py < 0.0 || px > ts_neg.width() - 1.0 ||
          py > ts_neg.height() - 1.0) {
        continue;
      }
      ++usable;
      const double r = bilinear(ts_neg.values, px, py);
      const Eigen::Vector2f gimg = bilinear_gradient(ts_neg.values, px, py);
      const Vec6 J = w->jacobian.transpose() *
                     Eigen::Vector2d(gimg.x(), gimg.y());
      double weight = 1.0;
      if (opt.use_huber && r > opt.huber_delta) {
        weight = opt.huber_delta / r;
      }
      H += weight * J * J.transpose();
      g += weight * J * r;
    }

    if (opt.rotation_prior_weight > 0.0 && usable > 0) {
      const double w = opt.rotation_prior_weight * usable;
      H.topLeftCorner<3, 3>().diagonal().array() += w;
      g.head<3>() += w * (theta.cayley.c - theta_init.cayley.c);
    }

    result.inlier_fraction =
        static_cast<double>(usable) / static_cast<double>(map.size());
    if (usable < opt.min_points) {
      result.lost = true;
      result.motion = theta_init;
      result.objective =
          objective(theta_init, map, ts_neg, K_ref, K_cur);
      return result;
    }

    // Light Levenberg damping keeps H well conditioned on sparse support.
    H.diagonal().array() += 1e-8 * (1.0 + H.diagonal().maxCoeff());
    const Vec6 delta = H.ldlt().solve(-g);
    if (!delta.allFinite()) {
      result.lost = true;
      return result;
    }

    // Backtracking on the true objective enforces monotonicity.
    double alpha = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < 8; ++bt, alpha *= 0.5) {
      MotionParams trial = theta;
      trial.cayley.c += alpha * delta.head<3>();
      trial.translation += alpha * delta.tail<3>();
      const double value = objective(trial, map, ts_neg, K_ref, K_cur) +
                           prior_cost(trial, usable);
      if (value < current) {
        theta = trial;
        current = value;
        accepted = true;
        break;
      }
    }
    result.iterations = iter + 1;
    if (!accepted) break;
    if ((alpha * delta).norm() < opt.step_tolerance) break;
  }

  result.motion = theta;
  // Reported objective stays the pure data term.
  result.objective = objective(theta, map, ts_neg, K_ref, K_cur);
  return result;
}

}  // namespace evs
