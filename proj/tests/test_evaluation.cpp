#include <doctest.h>

#include <cmath>
#include <random>

#include "evs/evaluation.hpp"

using namespace evs;

namespace {

TrajectoryRecord circle_traj(int n, double radius, double duration,
                             double t0 = 0.0) {
  TrajectoryRecord out;
  for (int i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) / (n - 1);
    TrajectoryRecord::Entry e;
    e.t = t0 + s * duration;
    const double a = 2.0 * M_PI * s;
    e.T_world_cam.translation =
        Eigen::Vector3d(radius * std::cos(a), radius * std::sin(a), 0.0);
    e.T_world_cam.rotation =
        Eigen::Quaterniond(Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()));
    out.poses.push_back(e);
  }
  return out;
}

TrajectoryRecord transformed(const TrajectoryRecord& traj,
                             const RigidTransform& T) {
  TrajectoryRecord out = traj;
  for (auto& e : out.poses) {
    e.T_world_cam = T.compose(e.T_world_cam);
  }
  return out;
}

}  // namespace

TEST_CASE("ate: identical trajectories score zero") {
  const auto gt = circle_traj(200, 1.0, 10.0);
  CHECK(evaluate_ate(gt, gt) < 1e-12);
}

TEST_CASE("ate: rigidly displaced trajectory aligns to zero") {
  const auto gt = circle_traj(200, 1.0, 10.0);
  RigidTransform T;
  T.rotation = Eigen::Quaterniond(
      Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 1, 0).normalized()));
  T.translation = Eigen::Vector3d(5, -2, 3);
  CHECK(evaluate_ate(transformed(gt, T), gt) < 1e-9);
}

TEST_CASE("ate: constant residual oracle") {
  // Push every position off by alternating +/- 3 cm along z. Alignment
  // cannot remove a zero-mean alternating offset, leaving RMSE = 3 cm.
  const auto gt = circle_traj(200, 1.0, 10.0);
  auto est = gt;
  for (size_t i = 0; i < est.poses.size(); ++i) {
    est.poses[i].T_world_cam.translation.z() += (i % 2 == 0) ? 0.03 : -0.03;
  }
  const double ate = evaluate_ate(est, gt);
  CHECK(ate == doctest::Approx(0.03).epsilon(1e-3));
}

TEST_CASE("ate: association drops unmatched stamps and needs 2 pairs") {
  const auto gt = circle_traj(100, 1.0, 10.0);
  // Estimate shifted by 50 ms: gt stamps are ~101 ms apart, so every
  // estimate stamp falls mid-gap, outside the 5 ms window.
  const auto est = circle_traj(100, 1.0, 10.0, 0.05);
  CHECK_THROWS(evaluate_ate(est, gt));
  // Nearest-neighbor association within the window still works: stamps
  // offset by 2 ms.
  const auto close = circle_traj(100, 1.0, 10.0, 0.002);
  CHECK(evaluate_ate(close, gt) < 0.15);
}

TEST_CASE("rpe: perfect trajectory scores zero") {
  const auto gt = circle_traj(400, 1.0, 10.0);
  const auto r = evaluate_rpe(gt, gt, 1.0);
  CHECK(r.segments > 0);
  CHECK(r.rotation_deg_per_m < 1e-9);
  CHECK(r.translation_percent < 1e-9);
}

TEST_CASE("rpe: constant rotation bias oracle") {
  // Inject a yaw drift of 0.1 degrees per meter of arc length into the
  // estimate; RPE over 1 m segments must report it.
  const auto gt = circle_traj(2000, 1.0, 20.0);
  auto est = gt;
  double arc = 0.0;
  for (size_t i = 1; i < est.poses.size(); ++i) {
    arc += (gt.poses[i].T_world_cam.translation -
            gt.poses[i - 1].T_world_cam.translation)
               .norm();
    const double bias = 0.1 * M_PI / 180.0 * arc;
    est.poses[i].T_world_cam.rotation =
        Eigen::Quaterniond(
            Eigen::AngleAxisd(bias, Eigen::Vector3d::UnitZ())) *
        gt.poses[i].T_world_cam.rotation;
  }
  const auto r = evaluate_rpe(est, gt, 1.0);
  CHECK(r.rotation_deg_per_m == doctest::Approx(0.1).epsilon(0.05));
}

TEST_CASE("rpe: constant translation drift oracle") {
  // Stretch the estimate by 2% along the path.
  const auto gt = circle_traj(2000, 1.0, 20.0);
  auto est = gt;
  for (auto& e : est.poses) e.T_world_cam.translation *= 1.02;
  const auto r = evaluate_rpe(est, gt, 1.0);
  CHECK(r.translation_percent == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("rpe: trajectory shorter than delta throws") {
  const auto gt = circle_traj(10, 0.01, 1.0);  // ~6 cm total arc
  CHECK_THROWS(evaluate_rpe(gt, gt, 1.0));
}

TEST_CASE("evaluate_depth: exact errors against a known grid") {
  InverseDepthImage gt;
  gt.inv_depth = Eigen::ArrayXXf::Constant(40, 40, 0.5f);  // 2 m everywhere
  gt.valid.setConstant(40, 40, 1);
  gt.valid(5, 5) = 0;

  LocalMap map(0);
  DepthEstimate a;
  a.pixel = Eigen::Vector2d(10, 10);
  a.inv_depth = 0.5;  // exact
  a.variance = 1e-4;
  map.insert_raw(a);
  DepthEstimate b = a;
  b.pixel = Eigen::Vector2d(20, 20);
  b.inv_depth = 1.0 / 1.8;  // 20 cm short
  map.insert_raw(b);
  DepthEstimate c = a;
  c.pixel = Eigen::Vector2d(30, 30);
  c.inv_depth = 1.0 / 2.2;  // 20 cm long
  map.insert_raw(c);
  DepthEstimate skipped = a;
  skipped.pixel = Eigen::Vector2d(5, 5);  // invalid gt pixel
  map.insert_raw(skipped);

  const auto r = evaluate_depth(map, gt);
  CHECK(r.evaluated == 3);
  CHECK(r.mean_m == doctest::Approx(0.4 / 3.0).epsilon(1e-9));
  CHECK(r.median_m == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(r.relative == doctest::Approx((0.2 / 2.0) * 2.0 / 3.0).epsilon(1e-9));

  LocalMap empty(0);
  CHECK_THROWS(evaluate_depth(empty, gt));
}
