#include "evs/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "evs/queue.hpp"

namespace evs {

bool PipelineConfig::valid() const {
  return w > 0 && delta_t_ms > 0 && beta > 0 && eta > 0 && tau_ms > 0 &&
         budget > 0 && rate_hz > 0 && reanchor_translation_m > 0 &&
         reanchor_rotation_rad > 0 && reanchor_max_cycles > 0 &&
         threads_preprocess > 0 &&
         threads_tracking > 0 && threads_mapping > 0;
}

namespace {

using Clock = std::chrono::steady_clock;

struct StageTimer {
  double total_ms = 0.0;
  int64_t calls = 0;
  void add(Clock::time_point t0) {
    total_ms += std::chrono::duration<double, std::milli>(Clock::now() - t0)
                    .count();
    ++calls;
  }
  double mean() const { return calls ? total_ms / calls : 0.0; }
};

struct Timers {
  StageTimer ts, aa, solver, matching, depth_opt, depth_fusion;
};

/// Per-cycle representation bundle produced by the pre-processing stage.
struct Frame {
  int index = 0;
  int64_t stamp = 0;
  TimeSurfaceMap ts_left;
  TimeSurfaceMap ts_right;
  AAMap aa_left;
  Eigen::ArrayXXf aa_float;  // max-normalized counts
  size_t events_in_window = 0;
};

Eigen::ArrayXXf normalize_counts(const AAMap& aa) {
  const int mx = aa.counts.maxCoeff();
  if (mx <= 0) return Eigen::ArrayXXf::Zero(aa.counts.rows(), aa.counts.cols());
  return aa.counts.cast<float>() / static_cast<float>(mx);
}

struct StoredFrame {
  AAMap aa;
  Eigen::ArrayXXf aa_float;
  RigidTransform T_world_cam;
  int64_t stamp = 0;
};

class Preprocessor {
 public:
  Preprocessor(const PipelineConfig& cfg, const StereoRig& rig,
               const std::vector<Event>& left,
               const std::vector<Event>& right, Timers& timers)
      : cfg_(cfg),
        rig_(rig),
        left_(left),
        right_(right),
        timers_(timers),
        ts_left_(rig.left.width, rig.left.height),
        ts_right_(rig.right.width, rig.right.height) {
    const int64_t t_first =
        std::min(left.empty() ? INT64_MAX : left.front().t,
                 right.empty() ? INT64_MAX : right.front().t);
    const int64_t t_last =
        std::max(left.empty() ? INT64_MIN : left.back().t,
                 right.empty() ? INT64_MIN : right.back().t);
    t0_ = t_first;
    period_us_ = static_cast<int64_t>(std::llround(1e6 / cfg.rate_hz));
    n_cycles_ = t_last > t_first
                    ? static_cast<int>((t_last - t_first) / period_us_)
                    : 0;
  }

  int n_cycles() const { return n_cycles_; }

  Frame make_frame(int k) {
    Frame f;
    f.index = k;
    f.stamp = t0_ + static_cast<int64_t>(k + 1) * period_us_;
    const int64_t w_start = t0_ + static_cast<int64_t>(k) * period_us_;

    auto slice = [&](const std::vector<Event>& ev, size_t& cursor)
        -> std::span<const Event> {
      const size_t begin = cursor;
      while (cursor < ev.size() && ev[cursor].t < f.stamp) ++cursor;
      return {ev.data() + begin, cursor - begin};
    };
    const auto left_slice = slice(left_, left_cursor_);
    const auto right_slice = slice(right_, right_cursor_);
    f.events_in_window = left_slice.size();

    auto t_ts = Clock::now();
    ts_left_.add(left_slice);
    ts_right_.add(right_slice);
    f.ts_left = ts_left_.evaluate(f.stamp, cfg_.tau_ms * 1e-3);
    f.ts_right = ts_right_.evaluate(f.stamp, cfg_.tau_ms * 1e-3);
    timers_.ts.add(t_ts);

    auto t_aa = Clock::now();
    BlockGrid grid{rig_.left.width, rig_.left.height, cfg_.w};
    f.aa_left = build_adaptive_accumulation(
        left_slice, grid, cfg_.beta,
        static_cast<int64_t>(std::llround(cfg_.delta_t_ms * 1e3)), f.stamp);
    f.aa_float = normalize_counts(f.aa_left);
    timers_.aa.add(t_aa);
    (void)w_start;
    return f;
  }

 private:
  const PipelineConfig& cfg_;
  const StereoRig& rig_;
  const std::vector<Event>& left_;
  const std::vector<Event>& right_;
  Timers& timers_;
  TimeSurfaceBuilder ts_left_;
  TimeSurfaceBuilder ts_right_;
  size_t left_cursor_ = 0;
  size_t right_cursor_ = 0;
  int64_t t0_ = 0;
  int64_t period_us_ = 0;
  int n_cycles_ = 0;
};

/// Tracking + mapping consumer. Owns all odometry state; consumes frames in
/// order, so its output is independent of how frames were produced.
class OdometryCore {
 public:
  OdometryCore(const PipelineConfig& cfg, const StereoRig& rig,
               const std::vector<GyroSample>& gyro, Timers& timers,
               OdometryResult& result)
      : cfg_(cfg), rig_(rig), gyro_(gyro), timers_(timers), result_(result) {}

  /// Returns false once the pipeline halts.
  bool consume(const Frame& f) {
    if (!bootstrapped_) {
      bootstrap(f);
      return true;
    }
    return track_and_map(f);
  }

  void finalize() {
    result_.final_map = map_;
    result_.final_anchor_pose = anchor_pose_;
  }

 private:
  void record_pose(int64_t stamp, const RigidTransform& T) {
    result_.trajectory.poses.push_back({static_cast<double>(stamp) * 1e-6, T});
    poses_.push_back(T);
    stamps_.push_back(stamp);
  }

  std::mt19937_64 cycle_rng(int k) const {
    return std::mt19937_64(cfg_.seed ^ (0x9e3779b97f4a7c15ULL *
                                        static_cast<uint64_t>(k + 1)));
  }

  void map_static(const Frame& f, const SampledPixelSet& group) {
    auto t0 = Clock::now();
    const double fxb = rig_.left.fx * rig_.baseline();
    const double sigma_d = 0.3;  // px, post-parabola disparity uncertainty
    for (const auto& p : group.pixels) {
      const Eigen::Vector2d x(p.x, p.y);
      std::optional<StereoMatch> m;
      try {
        m = static_stereo_match(x, f.ts_left, f.ts_right, rig_,
                                cfg_.matching);
      } catch (const std::out_of_range&) {
        continue;  // too close to the border
      }
      if (!m || m->disparity <= 0.0) continue;
      DepthEstimate e;
      e.pixel = x;
      e.inv_depth = m->disparity / fxb;
      e.variance = (sigma_d / fxb) * (sigma_d / fxb);
      e.dof = 2.0;
      e.source = DepthSource::Static;
      e.anchor = f.index;
      pending_.push_back(e);
    }
    timers_.matching.add(t0);
  }

  void map_temporal(const Frame& f, const SampledPixelSet& group,
                    const RigidTransform& T_world_cur) {
    // Pick the most recent stored frame with enough baseline.
    const StoredFrame* partner = nullptr;
    RigidTransform T_old_new;
    for (auto it = stored_.rbegin(); it != stored_.rend(); ++it) {
      const RigidTransform rel =
          it->T_world_cam.inverse().compose(T_world_cur);
      if (rel.translation.norm() >= cfg_.min_temporal_baseline_m) {
        partner = &*it;
        T_old_new = rel;
        break;
      }
    }
    if (!partner) return;

    for (const auto& p : group.pixels) {
      const Eigen::Vector2d x(p.x, p.y);
      auto t0 = Clock::now();
      std::optional<TemporalMatch> m;
      try {
        m = temporal_stereo_match(x, f.aa_left, partner->aa, T_old_new,
                                  rig_.left, cfg_.matching);
      } catch (const std::domain_error&) {
        timers_.matching.add(t0);
        return;  // degenerate baseline for this pairing
      }
      timers_.matching.add(t0);
      if (!m) continue;

      auto t1 = Clock::now();
      const RefineResult r =
          refine_inverse_depth(x, m->inv_depth, f.aa_float,
                               partner->aa_float, T_old_new, rig_.left,
                               cfg_.matching);
      timers_.depth_opt.add(t1);
      DepthEstimate e;
      e.pixel = x;
      e.inv_depth = r.inv_depth;
      e.variance = r.variance;
      e.dof = 2.0;
      e.source = DepthSource::Temporal;
      e.anchor = f.index;
      pending_.push_back(e);
    }
  }

  void flush_pending(const Frame& f) {
    auto t0 = Clock::now();
    // Pending estimates live in the camera that captured them; express them
    // in the anchor frame before fusing them into the map.
    for (const auto& batch : pending_batches_) {
      const RigidTransform T_anchor_cap =
          anchor_pose_.inverse().compose(batch.T_world_capture);
      LocalMap fresh(f.index);
      for (const auto& e : batch.estimates) fresh.insert_raw(e);
      const LocalMap moved =
          reanchor_map(fresh, T_anchor_cap, rig_.left, map_.anchor());
      for (const auto& [k, e] : moved.estimates()) map_.insert(e);
    }
    pending_batches_.clear();
    // Bound the map: drop the highest-variance estimates beyond capacity.
    const size_t cap = static_cast<size_t>(6 * cfg_.budget);
    if (map_.size() > cap) {
      std::vector<std::pair<double, LocalMap::Key>> by_var;
      by_var.reserve(map_.size());
      for (const auto& [k, e] : map_.estimates()) {
        by_var.emplace_back(e.variance, k);
      }
      std::nth_element(
          by_var.begin(), by_var.begin() + cap, by_var.end(),
          [](const auto& a, const auto& b) { return a.first < b.first; });
      for (size_t i = cap; i < by_var.size(); ++i) {
        map_.estimates().erase(by_var[i].second);
      }
    }
    timers_.depth_fusion.add(t0);
  }

  void run_mapping(const Frame& f, const RigidTransform& T_world_cur) {
    auto rng = cycle_rng(f.index);
    auto sampled = sample_edge_pixels(f.aa_left, cfg_.budget, rng);
    auto [temporal, staticg] =
        classify_by_gradient(std::move(sampled), f.ts_left, cfg_.eta);
    map_static(f, staticg);
    map_temporal(f, temporal, T_world_cur);
    // Batch this cycle's estimates; they join the map at the next re-anchor.
    // Fusing them immediately would recentre the alignment objective on the
    // still-converging pose estimate and cancel the next solve's correction.
    if (!pending_.empty()) {
      pending_batches_.push_back({T_world_cur, std::move(pending_)});
      pending_.clear();
    }
    stored_.push_back({f.aa_left, f.aa_float, T_world_cur, f.stamp});
    if (stored_.size() > 30) stored_.pop_front();
  }

  void bootstrap(const Frame& f) {
    if (f.aa_left.counts.maxCoeff() <= 0) return;  // wait for events
    anchor_pose_ = RigidTransform::identity();
    map_ = LocalMap(f.index);
    record_pose(f.stamp, anchor_pose_);
    // First map from static stereo only: no relative pose exists yet.
    auto rng = cycle_rng(f.index);
    auto sampled = sample_edge_pixels(f.aa_left, cfg_.budget, rng);
    SampledPixelSet all;
    all.group = StereoGroup::StaticStereo;
    all.pixels = std::move(sampled);
    map_static(f, all);
    pending_batches_.push_back({anchor_pose_, std::move(pending_)});
    pending_.clear();
    flush_pending(f);
    stored_.push_back({f.aa_left, f.aa_float, anchor_pose_, f.stamp});
    bootstrapped_ = true;
    ++result_.cycles;
  }

  RigidTransform predict_pose(int64_t stamp) const {
    RigidTransform T_pred = poses_.back();
    if (poses_.size() >= 2) {
      const RigidTransform delta =
          poses_[poses_.size() - 2].inverse().compose(poses_.back());
      T_pred = poses_.back().compose(delta);
    }
    // Gyro prior replaces the extrapolated rotation.
    if (!gyro_.empty()) {
      const int64_t t_prev = stamps_.back();
      auto lo = std::lower_bound(
          gyro_.begin(), gyro_.end(), t_prev,
          [](const GyroSample& s, int64_t t) { return s.t < t; });
      if (lo != gyro_.begin()) --lo;  // include the sample straddling t_prev
      auto hi = std::upper_bound(
          lo, gyro_.end(), stamp,
          [](int64_t t, const GyroSample& s) { return t < s.t; });
      const std::span<const GyroSample> slice(&*lo,
                                              static_cast<size_t>(hi - lo));
      if (!slice.empty()) {
        const PreintegratedRotation gamma =
            preintegrate_gyro(slice, cfg_.gyro_bias, t_prev, stamp);
        const Eigen::Quaterniond q_il = rig_.T_imu_left.rotation;
        const Eigen::Quaterniond q_cam =
            (q_il.conjugate() * gamma.gamma * q_il).normalized();
        T_pred.rotation = (poses_.back().rotation * q_cam).normalized();
      }
    }
    return T_pred;
  }

  bool track_and_map(const Frame& f) {
    const RigidTransform T_pred = predict_pose(f.stamp);

    bool lost = map_.size() < static_cast<size_t>(cfg_.solver.min_points);
    RigidTransform T_world_cur = T_pred;
    if (!lost) {
      MotionParams theta_init;
      try {
        theta_init = MotionParams::from_transform(
            T_pred.inverse().compose(anchor_pose_));
      } catch (const std::domain_error&) {
        theta_init = MotionParams{};
      }
      const TimeSurfaceMap ts_neg = negate_time_surface(f.ts_left);
      auto t0 = Clock::now();
      const TrackingResult tr = solve_pose(map_, ts_neg, theta_init,
                                           rig_.left, rig_.left, cfg_.solver);
      timers_.solver.add(t0);
      lost = tr.lost;
      if (std::getenv("PIPELINE_DEBUG")) {
        std::fprintf(stderr,
                     "cycle %d map %zu lost %d obj %.4f inl %.3f iters %d\n",
                     result_.cycles, map_.size(), static_cast<int>(tr.lost),
                     tr.objective, tr.inlier_fraction, tr.iterations);
      }
      if (!lost) {
        T_world_cur =
            anchor_pose_.compose(tr.motion.to_transform().inverse());
      }
    } else if (std::getenv("PIPELINE_DEBUG")) {
      std::fprintf(stderr, "cycle %d map %zu below min_points\n",
                   result_.cycles, map_.size());
    }

    if (lost) {
      ++result_.lost_cycles;
      ++lost_streak_;
      if (lost_streak_ > cfg_.max_lost_cycles) {
        result_.halted_early = true;
        record_pose(f.stamp, T_world_cur);
        ++result_.cycles;
        return false;
      }
    } else {
      lost_streak_ = 0;
    }

    record_pose(f.stamp, T_world_cur);

    // Re-anchor only once the pose has moved appreciably: the solved motion
    // must span several pixels before the alignment resolves sub-pixel
    // structure, so the anchor persists across cycles (see PipelineConfig).
    const RigidTransform T_cur_anchor =
        T_world_cur.inverse().compose(anchor_pose_);
    ++cycles_since_anchor_;
    const double anchor_angle =
        Eigen::AngleAxisd(T_cur_anchor.rotation).angle();
    if (T_cur_anchor.translation.norm() > cfg_.reanchor_translation_m ||
        anchor_angle > cfg_.reanchor_rotation_rad ||
        cycles_since_anchor_ >= cfg_.reanchor_max_cycles) {
      map_ = reanchor_map(map_, T_cur_anchor, rig_.left, f.index);
      anchor_pose_ = T_world_cur;
      cycles_since_anchor_ = 0;
      flush_pending(f);
      if (std::getenv("PIPELINE_DEBUG")) {
        std::fprintf(stderr, "cycle %d reanchor: shift %.4f m angle %.4f map %zu\n",
                     result_.cycles, T_cur_anchor.translation.norm(),
                     anchor_angle, map_.size());
      }
    }
    run_mapping(f, T_world_cur);
    ++result_.cycles;
    return true;
  }

  const PipelineConfig& cfg_;
  const StereoRig& rig_;
  const std::vector<GyroSample>& gyro_;
  Timers& timers_;
  OdometryResult& result_;

  bool bootstrapped_ = false;
  int cycles_since_anchor_ = 0;
  LocalMap map_;
  RigidTransform anchor_pose_;
  std::vector<RigidTransform> poses_;
  std::vector<int64_t> stamps_;
  struct PendingBatch {
    RigidTransform T_world_capture;
    std::vector<DepthEstimate> estimates;
  };

  std::deque<StoredFrame> stored_;
  std::vector<DepthEstimate> pending_;
  std::vector<PendingBatch> pending_batches_;
  int lost_streak_ = 0;
};

}  // namespace

OdometryResult run_odometry(const PipelineConfig& cfg,
                            const std::vector<Event>& left_events,
                            const std::vector<Event>& right_events,
                            const std::vector<GyroSample>& gyro,
                            const StereoRig& rig) {
  if (!cfg.valid()) {
    throw std::invalid_argument("run_odometry: invalid configuration");
  }
  for (const auto* ev : {&left_events, &right_events}) {
    for (size_t i = 1; i < ev->size(); ++i) {
      if ((*ev)[i].t < (*ev)[i - 1].t) {
        throw std::runtime_error("run_odometry: event stream not sorted at "
                                 "record " +
                                 std::to_string(i + 1));
      }
    }
  }

  OdometryResult result;
  Timers timers;
  Preprocessor pre(cfg, rig, left_events, right_events, timers);
  OdometryCore core(cfg, rig, gyro, timers, result);
  const int n = pre.n_cycles();

  if (cfg.single_thread) {
    for (int k = 0; k < n; ++k) {
      if (!core.consume(pre.make_frame(k))) break;
    }
  } else {
    // Pre-processing runs ahead of tracking+mapping through a bounded
    // queue. push blocks when full, so frame order and content are
    // identical to the single-thread schedule.
    BoundedQueue<Frame> queue(2);
    std::thread producer([&] {
      for (int k = 0; k < n; ++k) queue.push(pre.make_frame(k));
      queue.close();
    });
    while (auto frame = queue.pop()) {
      if (!core.consume(*frame)) break;
    }
    queue.close();
    producer.join();
  }

  core.finalize();
  result.timing.rows = {
      {"TS", timers.ts.mean(), timers.ts.calls},
      {"AA", timers.aa.mean(), timers.aa.calls},
      {"non-linear solver", timers.solver.mean(), timers.solver.calls},
      {"event matching", timers.matching.mean(), timers.matching.calls},
      {"depth optimization", timers.depth_opt.mean(), timers.depth_opt.calls},
      {"depth fusion", timers.depth_fusion.mean(), timers.depth_fusion.calls},
  };
  return result;
}

std::string TimingReport::to_csv() const {
  std::ostringstream os;
  os << "function,mean_ms,calls\n";
  for (const auto& r : rows) {
    os << r.function << "," << r.mean_ms << "," << r.calls << "\n";
  }
  return os.str();
}

namespace {

template <typename T>
T parse_value(const std::string& s) {
  std::istringstream is(s);
  T v;
  if (!(is >> v)) throw std::runtime_error("bad config value: " + s);
  return v;
}

}  // namespace

void apply_config_override(PipelineConfig& cfg, const std::string& key,
                           const std::string& value) {
  if (key == "w") cfg.w = parse_value<int>(value);
  else if (key == "delta_t_ms") cfg.delta_t_ms = parse_value<double>(value);
  else if (key == "beta") cfg.beta = parse_value<double>(value);
  else if (key == "eta") cfg.eta = parse_value<double>(value);
  else if (key == "tau_ms") cfg.tau_ms = parse_value<double>(value);
  else if (key == "budget") cfg.budget = parse_value<int>(value);
  else if (key == "rate_hz") cfg.rate_hz = parse_value<double>(value);
  else if (key == "seed") cfg.seed = parse_value<uint64_t>(value);
  else if (key == "single_thread")
    cfg.single_thread = parse_value<int>(value) != 0;
  else if (key == "threads_preprocess")
    cfg.threads_preprocess = parse_value<int>(value);
  else if (key == "threads_tracking")
    cfg.threads_tracking = parse_value<int>(value);
  else if (key == "threads_mapping")
    cfg.threads_mapping = parse_value<int>(value);
  else if (key == "min_temporal_baseline_m")
    cfg.min_temporal_baseline_m = parse_value<double>(value);
  else if (key == "reanchor_translation_m")
    cfg.reanchor_translation_m = parse_value<double>(value);
  else if (key == "reanchor_rotation_rad")
    cfg.reanchor_rotation_rad = parse_value<double>(value);
  else if (key == "reanchor_max_cycles")
    cfg.reanchor_max_cycles = parse_value<int>(value);
  else if (key == "patch_size")
    cfg.matching.patch_size = parse_value<int>(value);
  else if (key == "min_disparity")
    cfg.matching.min_disparity = parse_value<int>(value);
  else if (key == "max_disparity")
    cfg.matching.max_disparity = parse_value<int>(value);
  else if (key == "accept_cost")
    cfg.matching.accept_cost = parse_value<double>(value);
  else if (key == "ratio_test")
    cfg.matching.ratio_test = parse_value<double>(value);
  else if (key == "rho_min") cfg.matching.rho_min = parse_value<double>(value);
  else if (key == "rho_max") cfg.matching.rho_max = parse_value<double>(value);
  else if (key == "rho_samples")
    cfg.matching.rho_samples = parse_value<int>(value);
  else if (key == "max_iterations")
    cfg.solver.max_iterations = parse_value<int>(value);
  else if (key == "step_tolerance")
    cfg.solver.step_tolerance = parse_value<double>(value);
  else if (key == "min_points")
    cfg.solver.min_points = parse_value<int>(value);
  else if (key == "use_huber")
    cfg.solver.use_huber = parse_value<int>(value) != 0;
  else if (key == "huber_delta")
    cfg.solver.huber_delta = parse_value<double>(value);
  else if (key == "gyro_bias_x")
    cfg.gyro_bias.b.x() = parse_value<double>(value);
  else if (key == "gyro_bias_y")
    cfg.gyro_bias.b.y() = parse_value<double>(value);
  else if (key == "gyro_bias_z")
    cfg.gyro_bias.b.z() = parse_value<double>(value);
  else if (key == "max_lost_cycles")
    cfg.max_lost_cycles = parse_value<int>(value);
  else
    throw std::runtime_error("unknown config key: " + key);
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string key, value;
    if (!(ls >> key)) continue;
    if (!(ls >> value)) {
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": missing value for key '" + key + "'");
    }
    apply_config_override(cfg, key, value);
  }
  if (!cfg.valid()) {
    throw std::runtime_error("config: parameters must be positive");
  }
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

}  // namespace evs
