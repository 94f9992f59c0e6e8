#include "evs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace evs {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d S;
  S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return S;
}

struct PlaneHit {
  double depth = 0.0;  // camera-frame z
  double u = 0.0;      // in-plane coordinates
  double v = 0.0;
  bool hit = false;
};

// Ray through the camera center with direction dir_p (plane frame), origin
// o_p (plane frame). The plane is z = 0 with rectangular extent.
PlaneHit intersect_plane(const Eigen::Vector3d& o_p,
                         const Eigen::Vector3d& dir_p,
                         const TexturedPlane& plane) {
  PlaneHit h;
  if (std::abs(dir_p.z()) < 1e-12) return h;
  const double s = -o_p.z() / dir_p.z();
  if (s <= 1e-9) return h;
  const double u = o_p.x() + s * dir_p.x();
  const double v = o_p.y() + s * dir_p.y();
  if (std::abs(u) > plane.half_width || std::abs(v) > plane.half_height) {
    return h;
  }
  h.depth = s;  // dir has unit camera-z component
  h.u = u;
  h.v = v;
  h.hit = true;
  return h;
}

double plane_intensity(const TexturedPlane& plane, double u, double v) {
  const double a = plane.edge_angle_deg * M_PI / 180.0;
  const double q = -u * std::sin(a) + v * std::cos(a);
  const double phase = q / plane.stripe_period;
  const double frac = phase - std::floor(phase);
  return frac < 0.5 ? plane.bright : plane.dark;
}

}  // namespace

RigidTransform twist_exp(const Eigen::Vector3d& omega,
                         const Eigen::Vector3d& v, double dt) {
  const Eigen::Vector3d phi = omega * dt;
  const Eigen::Vector3d rho = v * dt;
  const double theta = phi.norm();
  RigidTransform T;
  if (theta < 1e-12) {
    T.rotation = Eigen::Quaterniond(1.0, 0.5 * phi.x(), 0.5 * phi.y(),
                                    0.5 * phi.z())
                     .normalized();
    T.translation = rho + 0.5 * phi.cross(rho);
    return T;
  }
  T.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(theta, phi / theta));
  const Eigen::Matrix3d S = skew(phi);
  const Eigen::Matrix3d V = Eigen::Matrix3d::Identity() +
                            (1.0 - std::cos(theta)) / (theta * theta) * S +
                            (theta - std::sin(theta)) /
                                (theta * theta * theta) * (S * S);
  T.translation = V * rho;
  return T;
}

double TrajectorySpec::duration() const {
  double d = 0.0;
  for (const auto& s : segments) d += s.duration;
  return d;
}

RigidTransform TrajectorySpec::pose(double t) const {
  RigidTransform T = start;
  double elapsed = 0.0;
  for (const auto& s : segments) {
    if (t <= elapsed) break;
    const double dt = std::min(t - elapsed, s.duration);
    T = T.compose(twist_exp(s.omega, s.velocity, dt));
    elapsed += s.duration;
  }
  return T;
}

Eigen::Vector3d TrajectorySpec::body_rate(double t) const {
  double elapsed = 0.0;
  for (const auto& s : segments) {
    if (t < elapsed + s.duration) return s.omega;
    elapsed += s.duration;
  }
  return segments.empty() ? Eigen::Vector3d::Zero() : segments.back().omega;
}

double scene_intensity(const SceneSpec& scene,
                       const RigidTransform& T_world_cam,
                       const CameraIntrinsics& K, double x, double y) {
  const Eigen::Vector3d dir_c((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
  double best_depth = std::numeric_limits<double>::infinity();
  double intensity = scene.background;
  for (const auto& plane : scene.planes) {
    const RigidTransform T_plane_cam =
        plane.T_world_plane.inverse().compose(T_world_cam);
    const Eigen::Vector3d o_p = T_plane_cam.translation;
    const Eigen::Vector3d d_p = T_plane_cam.rotation * dir_c;
    const PlaneHit h = intersect_plane(o_p, d_p, plane);
    if (h.hit && h.depth < best_depth) {
      best_depth = h.depth;
      intensity = plane_intensity(plane, h.u, h.v);
    }
  }
  return intensity;
}

InverseDepthImage true_depth_map(const SceneSpec& scene,
                                 const RigidTransform& T_world_cam,
                                 const CameraIntrinsics& K) {
  InverseDepthImage out;
  out.inv_depth = Eigen::ArrayXXf::Zero(K.height, K.width);
  out.valid.setZero(K.height, K.width);
  std::vector<RigidTransform> T_plane_cam;
  T_plane_cam.reserve(scene.planes.size());
  for (const auto& plane : scene.planes) {
    T_plane_cam.push_back(plane.T_world_plane.inverse().compose(T_world_cam));
  }
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const Eigen::Vector3d dir_c((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      double best = std::numeric_limits<double>::infinity();
      for (size_t i = 0; i < scene.planes.size(); ++i) {
        const Eigen::Vector3d o_p = T_plane_cam[i].translation;
        const Eigen::Vector3d d_p = T_plane_cam[i].rotation * dir_c;
        const PlaneHit h = intersect_plane(o_p, d_p, scene.planes[i]);
        if (h.hit && h.depth < best) best = h.depth;
      }
      if (std::isfinite(best)) {
        out.inv_depth(y, x) = static_cast<float>(1.0 / best);
        out.valid(y, x) = 1;
      }
    }
  }
  return out;
}

namespace {

std::vector<Event> render_camera_events(const SceneSpec& scene,
                                        const TrajectorySpec& traj,
                                        const RigidTransform& T_body_cam,
                                        const CameraIntrinsics& K,
                                        const RenderOptions& opt,
                                        uint64_t seed) {
  if (!(opt.contrast_threshold > 0.0)) {
    throw std::invalid_argument("render_events: threshold must be positive");
  }
  if (opt.sample_rate < 1000.0) {
    throw std::invalid_argument("render_events: sample rate below 1 kHz");
  }
  const double T = traj.duration();
  const int n_samples = static_cast<int>(std::ceil(T * opt.sample_rate)) + 1;
  const double dt = 1.0 / opt.sample_rate;
  const double C = opt.contrast_threshold;

  const int W = K.width, H = K.height;
  std::vector<double> log_prev(W * H, 0.0);
  std::vector<double> ref(W * H, 0.0);
  std::vector<Event> events;

  std::vector<RigidTransform> T_plane_cam(scene.planes.size());
  auto log_intensity_row = [&](const RigidTransform& /*unused*/, int y,
                               std::vector<double>& row) {
    for (int x = 0; x < W; ++x) {
      const Eigen::Vector3d dir_c((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      double best = std::numeric_limits<double>::infinity();
      double intensity = scene.background;
      for (size_t i = 0; i < scene.planes.size(); ++i) {
        const Eigen::Vector3d o_p = T_plane_cam[i].translation;
        const Eigen::Vector3d d_p = T_plane_cam[i].rotation * dir_c;
        const PlaneHit h = intersect_plane(o_p, d_p, scene.planes[i]);
        if (h.hit && h.depth < best) {
          best = h.depth;
          intensity = plane_intensity(scene.planes[i], h.u, h.v);
        }
      }
      row[x] = std::log(std::max(intensity, 1e-3));
    }
  };

  std::vector<double> row(W);
  for (int k = 0; k < n_samples; ++k) {
    const double t = std::min(k * dt, T);
    const RigidTransform T_world_cam = traj.pose(t).compose(T_body_cam);
    for (size_t i = 0; i < scene.planes.size(); ++i) {
      T_plane_cam[i] =
          scene.planes[i].T_world_plane.inverse().compose(T_world_cam);
    }
    for (int y = 0; y < H; ++y) {
      log_intensity_row(T_world_cam, y, row);
      for (int x = 0; x < W; ++x) {
        const int idx = y * W + x;
        const double L = row[x];
        if (k == 0) {
          log_prev[idx] = L;
          ref[idx] = L;
          continue;
        }
        const double delta = L - ref[idx];
        const int n = static_cast<int>(std::floor(std::abs(delta) / C));
        if (n > 0) {
          const double sign = delta > 0.0 ? 1.0 : -1.0;
          const double t_prev = (k - 1) * dt;
          const double dL = L - log_prev[idx];
          for (int j = 1; j <= n; ++j) {
            const double level = ref[idx] + sign * j * C;
            double frac = 0.5;
            if (std::abs(dL) > 1e-12) {
              frac = std::clamp((level - log_prev[idx]) / dL, 0.0, 1.0);
            }
            Event e;
            e.t = static_cast<int64_t>(
                std::llround((t_prev + frac * dt) * 1e6));
            e.x = static_cast<uint16_t>(x);
            e.y = static_cast<uint16_t>(y);
            e.p = sign > 0.0 ? 1 : -1;
            events.push_back(e);
          }
          ref[idx] += sign * n * C;
        }
        log_prev[idx] = L;
      }
    }
  }

  std::mt19937_64 rng(seed);
  if (opt.timestamp_jitter_us > 0.0) {
    std::uniform_real_distribution<double> jitter(-opt.timestamp_jitter_us,
                                                  opt.timestamp_jitter_us);
    for (Event& e : events) {
      e.t = std::max<int64_t>(0, e.t + static_cast<int64_t>(jitter(rng)));
    }
  }
  if (opt.noise_event_rate > 0.0) {
    const double expected = opt.noise_event_rate * W * H * T;
    std::poisson_distribution<int> count(expected);
    std::uniform_int_distribution<int> ux(0, W - 1), uy(0, H - 1);
    std::uniform_real_distribution<double> ut(0.0, T);
    std::uniform_int_distribution<int> up(0, 1);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      Event e;
      e.t = static_cast<int64_t>(ut(rng) * 1e6);
      e.x = static_cast<uint16_t>(ux(rng));
      e.y = static_cast<uint16_t>(uy(rng));
      e.p = up(rng) ? 1 : -1;
      events.push_back(e);
    }
  }

  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) {
                     if (a.t != b.t) return a.t < b.t;
                     if (a.y != b.y) return a.y < b.y;
                     return a.x < b.x;
                   });
  return events;
}

}  // namespace

StereoEventStreams render_events(const SceneSpec& scene,
                                 const TrajectorySpec& traj,
                                 const StereoRig& rig,
                                 const RenderOptions& opt) {
  StereoEventStreams out;
  const RigidTransform T_body_left = rig.T_imu_left.inverse();
  const RigidTransform T_body_right =
      T_body_left.compose(rig.T_right_left.inverse());
  out.left = render_camera_events(scene, traj, T_body_left, rig.left, opt,
                                  opt.seed);
  out.right = render_camera_events(scene, traj, T_body_right, rig.right, opt,
                                   opt.seed + 1);
  return out;
}

std::vector<GyroSample> render_gyro(const TrajectorySpec& traj,
                                    const GyroBias& bias, double noise_sd,
                                    double rate_hz, uint64_t seed) {
  if (!(rate_hz > 0.0)) {
    throw std::invalid_argument("render_gyro: rate must be positive");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sd);
  std::vector<GyroSample> samples;
  const double T = traj.duration();
  const int n = static_cast<int>(std::floor(T * rate_hz)) + 1;
  samples.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double t = std::min(k / rate_hz, T);
    GyroSample s;
    s.t = static_cast<int64_t>(std::llround(t * 1e6));
    s.omega = traj.body_rate(t) + bias.b;
    if (noise_sd > 0.0) {
      s.omega += Eigen::Vector3d(noise(rng), noise(rng), noise(rng));
    }
    samples.push_back(s);
  }
  return samples;
}

namespace {

[[noreturn]] void spec_error(int line, const std::string& msg) {
  throw std::runtime_error("spec parse error at line " +
                           std::to_string(line) + ": " + msg);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open spec file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

SceneSpec parse_scene_spec(const std::string& text) {
  SceneSpec scene;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "background") {
      if (!(ls >> scene.background)) spec_error(line_no, "bad background");
    } else if (key == "plane") {
      double v[13];
      for (double& x : v) {
        if (!(ls >> x)) spec_error(line_no, "plane needs 13 values");
      }
      TexturedPlane p;
      p.T_world_plane.rotation =
          Eigen::Quaterniond(v[0], v[1], v[2], v[3]).normalized();
      p.T_world_plane.translation = Eigen::Vector3d(v[4], v[5], v[6]);
      p.half_width = v[7];
      p.half_height = v[8];
      p.edge_angle_deg = v[9];
      p.stripe_period = v[10];
      p.bright = v[11];
      p.dark = v[12];
      scene.planes.push_back(p);
    } else {
      spec_error(line_no, "unknown key '" + key + "'");
    }
  }
  return scene;
}

TrajectorySpec parse_trajectory_spec(const std::string& text) {
  TrajectorySpec traj;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "start") {
      double v[7];
      for (double& x : v) {
        if (!(ls >> x)) spec_error(line_no, "start needs 7 values");
      }
      traj.start.rotation =
          Eigen::Quaterniond(v[0], v[1], v[2], v[3]).normalized();
      traj.start.translation = Eigen::Vector3d(v[4], v[5], v[6]);
    } else if (key == "segment") {
      double v[7];
      for (double& x : v) {
        if (!(ls >> x)) spec_error(line_no, "segment needs 7 values");
      }
      TwistSegment s;
      s.duration = v[0];
      s.omega = Eigen::Vector3d(v[1], v[2], v[3]);
      s.velocity = Eigen::Vector3d(v[4], v[5], v[6]);
      traj.segments.push_back(s);
    } else {
      spec_error(line_no, "unknown key '" + key + "'");
    }
  }
  return traj;
}

SceneSpec load_scene_spec(const std::string& path) {
  return parse_scene_spec(read_file(path));
}

TrajectorySpec load_trajectory_spec(const std::string& path) {
  return parse_trajectory_spec(read_file(path));
}

}  // namespace evs
