#include "evs/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace evs {

namespace {

[[noreturn]] void parse_error(const std::string& path, int line,
                              const std::string& msg) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  return f;
}

}  // namespace

void save_events_ascii(const std::string& path,
                       const std::vector<Event>& events, int width,
                       int height) {
  auto f = open_out(path);
  f << "evs-events ascii " << width << " " << height << "\n";
  for (const Event& e : events) {
    f << e.t << " " << e.x << " " << e.y << " " << int(e.p) << "\n";
  }
}

void save_events_binary(const std::string& path,
                        const std::vector<Event>& events, int width,
                        int height) {
  auto f = open_out(path, true);
  f << "evs-events binary " << width << " " << height << "\n";
  const uint64_t n = events.size();
  f.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (const Event& e : events) {
    const uint64_t t = static_cast<uint64_t>(e.t);
    f.write(reinterpret_cast<const char*>(&t), sizeof(t));
    f.write(reinterpret_cast<const char*>(&e.x), sizeof(e.x));
    f.write(reinterpret_cast<const char*>(&e.y), sizeof(e.y));
    f.write(reinterpret_cast<const char*>(&e.p), sizeof(e.p));
  }
}

std::vector<Event> load_events(const std::string& path, int* width,
                               int* height) {
  auto f = open_in(path, true);
  std::string header;
  std::getline(f, header);
  std::istringstream hs(header);
  std::string magic, variant;
  int w = 0, h = 0;
  if (!(hs >> magic >> variant >> w >> h) || magic != "evs-events") {
    parse_error(path, 1, "missing or malformed event file header");
  }
  if (width) *width = w;
  if (height) *height = h;

  std::vector<Event> events;
  if (variant == "ascii") {
    std::string line;
    int line_no = 1;
    int64_t prev_t = std::numeric_limits<int64_t>::min();
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream ls(line);
      int64_t t;
      int x, y, p;
      if (!(ls >> t >> x >> y >> p)) {
        parse_error(path, line_no, "expected 't_us x y p'");
      }
      if (t < prev_t) {
        parse_error(path, line_no, "timestamps not sorted");
      }
      if (x < 0 || y < 0 || x >= w || y >= h) {
        parse_error(path, line_no, "pixel out of sensor bounds");
      }
      prev_t = t;
      events.push_back({t, static_cast<uint16_t>(x),
                        static_cast<uint16_t>(y), static_cast<int8_t>(p)});
    }
  } else if (variant == "binary") {
    uint64_t n = 0;
    f.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!f) parse_error(path, 2, "truncated binary event count");
    events.reserve(n);
    int64_t prev_t = std::numeric_limits<int64_t>::min();
    for (uint64_t i = 0; i < n; ++i) {
      uint64_t t;
      uint16_t x, y;
      int8_t p;
      f.read(reinterpret_cast<char*>(&t), sizeof(t));
      f.read(reinterpret_cast<char*>(&x), sizeof(x));
      f.read(reinterpret_cast<char*>(&y), sizeof(y));
      f.read(reinterpret_cast<char*>(&p), sizeof(p));
      if (!f) parse_error(path, 2, "truncated binary event record");
      const int64_t ts = static_cast<int64_t>(t);
      if (ts < prev_t) parse_error(path, 2, "timestamps not sorted");
      if (x >= w || y >= h) parse_error(path, 2, "pixel out of bounds");
      prev_t = ts;
      events.push_back({ts, x, y, p});
    }
  } else {
    parse_error(path, 1, "unknown event file variant '" + variant + "'");
  }
  return events;
}

void save_gyro(const std::string& path,
               const std::vector<GyroSample>& samples) {
  auto f = open_out(path);
  f.precision(12);
  for (const auto& s : samples) {
    f << s.t << " " << s.omega.x() << " " << s.omega.y() << " "
      << s.omega.z() << "\n";
  }
}

std::vector<GyroSample> load_gyro(const std::string& path) {
  auto f = open_in(path);
  std::vector<GyroSample> samples;
  std::string line;
  int line_no = 0;
  int64_t prev_t = std::numeric_limits<int64_t>::min();
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    GyroSample s;
    if (!(ls >> s.t >> s.omega.x() >> s.omega.y() >> s.omega.z())) {
      parse_error(path, line_no, "expected 't_us wx wy wz'");
    }
    if (s.t < prev_t) parse_error(path, line_no, "timestamps not sorted");
    prev_t = s.t;
    samples.push_back(s);
  }
  return samples;
}

std::string format_trajectory_tum(const TrajectoryRecord& traj) {
  std::ostringstream os;
  os.precision(9);
  os << std::fixed;
  for (const auto& e : traj.poses) {
    const auto& q = e.T_world_cam.rotation;
    const auto& t = e.T_world_cam.translation;
    os << e.t << " " << t.x() << " " << t.y() << " " << t.z() << " " << q.x()
       << " " << q.y() << " " << q.z() << " " << q.w() << "\n";
  }
  return os.str();
}

void save_trajectory_tum(const std::string& path,
                         const TrajectoryRecord& traj) {
  auto f = open_out(path);
  f << format_trajectory_tum(traj);
}

TrajectoryRecord load_trajectory_tum(const std::string& path) {
  auto f = open_in(path);
  TrajectoryRecord traj;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    TrajectoryRecord::Entry e;
    double qx, qy, qz, qw;
    if (!(ls >> e.t >> e.T_world_cam.translation.x() >>
          e.T_world_cam.translation.y() >> e.T_world_cam.translation.z() >>
          qx >> qy >> qz >> qw)) {
      parse_error(path, line_no, "expected 't tx ty tz qx qy qz qw'");
    }
    e.T_world_cam.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized();
    if (!traj.poses.empty() && e.t <= traj.poses.back().t) {
      parse_error(path, line_no, "timestamps not strictly increasing");
    }
    traj.poses.push_back(e);
  }
  return traj;
}

void save_pgm(const std::string& path, const Eigen::ArrayXXf& img) {
  auto f = open_out(path, true);
  const float mx = img.maxCoeff();
  const float scale = mx > 0.0f ? 255.0f / mx : 0.0f;
  f << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < img.rows(); ++r) {
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      const unsigned char v = static_cast<unsigned char>(
          std::min(255.0f, std::max(0.0f, img(r, c) * scale)));
      f.write(reinterpret_cast<const char*>(&v), 1);
    }
  }
}

void save_float_grid(const std::string& path, const Eigen::ArrayXXf& grid) {
  auto f = open_out(path, true);
  f << "evs-grid " << grid.cols() << " " << grid.rows() << "\n";
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      const float v = grid(r, c);
      f.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

Eigen::ArrayXXf load_float_grid(const std::string& path) {
  auto f = open_in(path, true);
  std::string header;
  std::getline(f, header);
  std::istringstream hs(header);
  std::string magic;
  int w = 0, h = 0;
  if (!(hs >> magic >> w >> h) || magic != "evs-grid") {
    parse_error(path, 1, "malformed grid header");
  }
  Eigen::ArrayXXf grid(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      float v;
      f.read(reinterpret_cast<char*>(&v), sizeof(v));
      if (!f) parse_error(path, 2, "truncated grid data");
      grid(r, c) = v;
    }
  }
  return grid;
}

void save_ply(const std::string& path, const LocalMap& map,
              const CameraIntrinsics& K) {
  auto f = open_out(path);
  f << "ply\nformat ascii 1.0\nelement vertex " << map.size()
    << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  f.precision(8);
  for (const auto& [k, e] : map.estimates()) {
    const Eigen::Vector3d p = backproject(e.pixel, e.inv_depth, K);
    f << p.x() << " " << p.y() << " " << p.z() << "\n";
  }
}

void save_sample_csv(const std::string& path, const SampledPixelSet& temporal,
                     const SampledPixelSet& staticgrp) {
  auto f = open_out(path);
  f << "x,y,count,gx,gy,group\n";
  auto emit = [&](const SampledPixelSet& set, const char* name) {
    for (const auto& p : set.pixels) {
      f << p.x << "," << p.y << "," << p.count << "," << p.gradient.x() << ","
        << p.gradient.y() << "," << name << "\n";
    }
  };
  emit(temporal, "temporal");
  emit(staticgrp, "static");
}

}  // namespace evs
