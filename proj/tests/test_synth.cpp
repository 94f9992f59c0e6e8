#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "evs/synth.hpp"

using namespace evs;

namespace {

CameraIntrinsics simple_camera() {
  CameraIntrinsics K;
  K.fx = K.fy = 100.0;
  K.cx = 80.0;
  K.cy = 60.0;
  K.width = 160;
  K.height = 120;
  return K;
}

StereoRig simple_rig() {
  StereoRig rig;
  rig.left = rig.right = simple_camera();
  rig.T_right_left.translation = Eigen::Vector3d(-0.1, 0, 0);
  return rig;
}

// Fronto-parallel vertically striped plane 2 m in front of the camera at
// the world origin looking down +z.
SceneSpec stripe_scene(double edge_angle_deg = 90.0) {
  SceneSpec scene;
  TexturedPlane plane;
  plane.T_world_plane.translation = Eigen::Vector3d(0, 0, 2.0);
  plane.half_width = 4.0;
  plane.half_height = 4.0;
  plane.edge_angle_deg = edge_angle_deg;
  plane.stripe_period = 0.25;
  scene.planes.push_back(plane);
  return scene;
}

}  // namespace

TEST_CASE("twist_exp: pure translation and pure rotation") {
  const auto t = twist_exp({0, 0, 0}, {1, 2, 3}, 0.5);
  CHECK(t.translation.isApprox(Eigen::Vector3d(0.5, 1.0, 1.5), 1e-12));
  CHECK(t.rotation.isApprox(Eigen::Quaterniond::Identity(), 1e-12));

  const auto r = twist_exp({0, 0, M_PI}, {0, 0, 0}, 0.5);
  CHECK(Eigen::AngleAxisd(r.rotation).angle() ==
        doctest::Approx(M_PI / 2).epsilon(1e-12));
  CHECK(r.translation.norm() < 1e-12);
}

TEST_CASE("twist_exp: screw motion matches numerical integration") {
  const Eigen::Vector3d omega(0.3, -0.2, 0.5), v(0.1, 0.2, -0.1);
  const auto closed = twist_exp(omega, v, 1.0);
  // Integrate the frame forward with tiny steps.
  RigidTransform T;
  const int n = 200000;
  const double dt = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    T = T.compose(twist_exp(omega, v, dt));
  }
  CHECK(T.rotation.angularDistance(closed.rotation) < 1e-8);
  CHECK((T.translation - closed.translation).norm() < 1e-6);
}

TEST_CASE("trajectory: piecewise segments compose") {
  TrajectorySpec traj;
  traj.segments.push_back({1.0, {0, 0, 0.5}, {0.1, 0, 0}});
  traj.segments.push_back({0.5, {0, 0, 0}, {0, 0, 0.2}});
  CHECK(traj.duration() == doctest::Approx(1.5));

  const auto end1 = traj.pose(1.0);
  const auto expect1 = twist_exp({0, 0, 0.5}, {0.1, 0, 0}, 1.0);
  CHECK(end1.rotation.angularDistance(expect1.rotation) < 1e-12);
  CHECK((end1.translation - expect1.translation).norm() < 1e-12);

  const auto mid2 = traj.pose(1.25);
  const auto expect2 = expect1.compose(twist_exp({0, 0, 0}, {0, 0, 0.2}, 0.25));
  CHECK((mid2.translation - expect2.translation).norm() < 1e-12);

  CHECK(traj.body_rate(0.5).isApprox(Eigen::Vector3d(0, 0, 0.5)));
  CHECK(traj.body_rate(1.2).norm() == doctest::Approx(0.0));
  // Clamped past the end.
  CHECK((traj.pose(99.0).translation - traj.pose(1.5).translation).norm() <
        1e-12);
}

TEST_CASE("true_depth_map: fronto-parallel plane depth oracle") {
  const auto scene = stripe_scene();
  const auto K = simple_camera();
  const auto depth = true_depth_map(scene, RigidTransform::identity(), K);
  REQUIRE(depth.inv_depth.rows() == 120);
  REQUIRE(depth.inv_depth.cols() == 160);
  CHECK(depth.valid(60, 80) == 1);
  CHECK(depth.inv_depth(60, 80) == doctest::Approx(0.5).epsilon(1e-9));
  // Off-axis pixel on a fronto-parallel plane keeps z = 2.
  CHECK(depth.inv_depth(30, 40) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("true_depth_map: miss yields invalid") {
  SceneSpec scene;
  TexturedPlane small;
  small.T_world_plane.translation = Eigen::Vector3d(0, 0, 2.0);
  small.half_width = 0.1;
  small.half_height = 0.1;
  scene.planes.push_back(small);
  const auto K = simple_camera();
  const auto depth = true_depth_map(scene, RigidTransform::identity(), K);
  CHECK(depth.valid(60, 80) == 1);
  CHECK(depth.valid(0, 0) == 0);
}

TEST_CASE("scene_intensity: stripes alternate across the edge direction") {
  const auto scene = stripe_scene(90.0);
  const auto K = simple_camera();
  const RigidTransform id;
  // Vertical stripes: intensity varies along x, constant along y. Probe
  // away from x = 80, which sits exactly on a stripe boundary.
  const double v0 = scene_intensity(scene, id, K, 83.0, 60.0);
  const double v_same_col = scene_intensity(scene, id, K, 83.0, 30.0);
  CHECK(v0 == doctest::Approx(v_same_col));
  // Half a stripe period away (0.125 m at 2 m -> 6.25 px) flips the value.
  const double v_flip = scene_intensity(scene, id, K, 83.0 + 6.25, 60.0);
  CHECK(std::abs(v0 - v_flip) > 0.5);
  // Background outside every plane.
  SceneSpec empty;
  CHECK(scene_intensity(empty, id, K, 80, 60) == doctest::Approx(0.5));
}

TEST_CASE("render_events: static camera emits nothing") {
  const auto scene = stripe_scene();
  TrajectorySpec still;
  still.segments.push_back({0.2, {0, 0, 0}, {0, 0, 0}});
  RenderOptions opt;
  const auto streams = render_events(scene, still, simple_rig(), opt);
  CHECK(streams.left.empty());
  CHECK(streams.right.empty());
}

TEST_CASE("render_events: moving camera produces sorted in-bounds events") {
  const auto scene = stripe_scene();
  TrajectorySpec traj;
  traj.segments.push_back({0.2, {0, 0, 0}, {0.3, 0, 0}});
  RenderOptions opt;
  const auto streams = render_events(scene, traj, simple_rig(), opt);
  REQUIRE(!streams.left.empty());
  REQUIRE(!streams.right.empty());
  const int64_t horizon = 200000;
  for (const auto* stream : {&streams.left, &streams.right}) {
    CHECK(std::is_sorted(
        stream->begin(), stream->end(),
        [](const Event& a, const Event& b) { return a.t < b.t; }));
    for (const auto& e : *stream) {
      CHECK(e.t >= 0);
      CHECK(e.t <= horizon);
      CHECK(e.x < 160);
      CHECK(e.y < 120);
      CHECK((e.p == 1 || e.p == -1));
    }
  }
}

TEST_CASE("render_events: deterministic for a fixed seed") {
  const auto scene = stripe_scene();
  TrajectorySpec traj;
  traj.segments.push_back({0.1, {0, 0, 1.0}, {0.2, 0, 0}});
  RenderOptions opt;
  opt.timestamp_jitter_us = 20.0;
  opt.noise_event_rate = 5.0;
  const auto a = render_events(scene, traj, simple_rig(), opt);
  const auto b = render_events(scene, traj, simple_rig(), opt);
  REQUIRE(a.left.size() == b.left.size());
  for (size_t i = 0; i < a.left.size(); ++i) {
    CHECK(a.left[i].t == b.left[i].t);
    CHECK(a.left[i].x == b.left[i].x);
    CHECK(a.left[i].y == b.left[i].y);
    CHECK(a.left[i].p == b.left[i].p);
  }
  RenderOptions other = opt;
  other.seed = 2;
  const auto c = render_events(scene, traj, simple_rig(), other);
  bool differs = c.left.size() != a.left.size();
  for (size_t i = 0; !differs && i < a.left.size(); ++i)
    differs = a.left[i].t != c.left[i].t || a.left[i].x != c.left[i].x;
  CHECK(differs);
}

TEST_CASE("render_events: event count scales with contrast threshold") {
  const auto scene = stripe_scene();
  TrajectorySpec traj;
  traj.segments.push_back({0.2, {0, 0, 0}, {0.3, 0, 0}});
  RenderOptions coarse, fine;
  coarse.contrast_threshold = 0.3;
  fine.contrast_threshold = 0.15;
  const auto few = render_events(scene, traj, simple_rig(), coarse);
  const auto many = render_events(scene, traj, simple_rig(), fine);
  CHECK(many.left.size() > few.left.size());
  // Halving the threshold about doubles the count.
  const double ratio = static_cast<double>(many.left.size()) /
                       static_cast<double>(few.left.size());
  CHECK(ratio > 1.5);
  CHECK(ratio < 2.6);
}

TEST_CASE("render_events: rejects sub-kilohertz sampling") {
  const auto scene = stripe_scene();
  TrajectorySpec traj;
  traj.segments.push_back({0.1, {0, 0, 0}, {0.1, 0, 0}});
  RenderOptions opt;
  opt.sample_rate = 500.0;
  CHECK_THROWS(render_events(scene, traj, simple_rig(), opt));
}

TEST_CASE("render_gyro: noiseless output is the analytic body rate") {
  TrajectorySpec traj;
  traj.segments.push_back({0.5, {0.1, -0.2, 0.3}, {0, 0, 0}});
  traj.segments.push_back({0.5, {0, 0, -0.4}, {0, 0, 0}});
  GyroBias bias;
  bias.b = Eigen::Vector3d(0.01, 0.02, -0.01);
  const auto samples = render_gyro(traj, bias, 0.0, 200.0, 1);
  REQUIRE(samples.size() >= 200);
  CHECK(std::is_sorted(
      samples.begin(), samples.end(),
      [](const GyroSample& a, const GyroSample& b) { return a.t < b.t; }));
  for (const auto& s : samples) {
    const Eigen::Vector3d expected =
        traj.body_rate(static_cast<double>(s.t) * 1e-6) + bias.b;
    CHECK((s.omega - expected).norm() < 1e-12);
  }
}

TEST_CASE("render_gyro: noise has roughly the requested scale") {
  TrajectorySpec traj;
  traj.segments.push_back({2.0, {0, 0, 0}, {0, 0, 0}});
  const auto samples = render_gyro(traj, {}, 0.1, 500.0, 7);
  double ss = 0.0;
  for (const auto& s : samples) ss += s.omega.squaredNorm();
  const double sd = std::sqrt(ss / (3.0 * samples.size()));
  CHECK(sd > 0.08);
  CHECK(sd < 0.12);
}

TEST_CASE("scene and trajectory spec parsing round trip") {
  const std::string scene_text =
      "background 0.4\n"
      "plane 1 0 0 0 0 0 2 4 3 90 0.25 1.0 0.1\n";
  const auto scene = parse_scene_spec(scene_text);
  CHECK(scene.background == doctest::Approx(0.4));
  REQUIRE(scene.planes.size() == 1);
  CHECK(scene.planes[0].half_width == doctest::Approx(4.0));
  CHECK(scene.planes[0].half_height == doctest::Approx(3.0));
  CHECK(scene.planes[0].stripe_period == doctest::Approx(0.25));
  CHECK(scene.planes[0].T_world_plane.translation.z() == doctest::Approx(2.0));

  const std::string traj_text =
      "start 1 0 0 0 0 0 0\n"
      "segment 1.0 0 0 0.5 0.1 0 0\n"
      "segment 0.5 0 0 0 0 0 0.2\n";
  const auto traj = parse_trajectory_spec(traj_text);
  REQUIRE(traj.segments.size() == 2);
  CHECK(traj.duration() == doctest::Approx(1.5));
  CHECK(traj.segments[0].omega.z() == doctest::Approx(0.5));
  CHECK(traj.segments[1].velocity.z() == doctest::Approx(0.2));

  CHECK_THROWS(parse_scene_spec("plane 1 0 0\n"));
  CHECK_THROWS(parse_trajectory_spec("segment nope\n"));
}
