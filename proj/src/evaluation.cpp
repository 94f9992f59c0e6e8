#include "evs/evaluation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace evs {

namespace {

struct PosePair {
  RigidTransform est;
  RigidTransform gt;
  double t = 0.0;
};

std::vector<PosePair> associate(const TrajectoryRecord& estimate,
                                const TrajectoryRecord& gt, double window_s) {
  std::vector<PosePair> pairs;
  size_t j = 0;
  for (const auto& e : estimate.poses) {
    while (j + 1 < gt.poses.size() &&
           std::abs(gt.poses[j + 1].t - e.t) <= std::abs(gt.poses[j].t - e.t)) {
      ++j;
    }
    if (j < gt.poses.size() && std::abs(gt.poses[j].t - e.t) <= window_s) {
      pairs.push_back({e.T_world_cam, gt.poses[j].T_world_cam, e.t});
    }
  }
  return pairs;
}

}  // namespace

double evaluate_ate(const TrajectoryRecord& estimate,
                    const TrajectoryRecord& gt, double association_window_s) {
  const auto pairs = associate(estimate, gt, association_window_s);
  if (pairs.size() < 2) {
    throw std::runtime_error("evaluate_ate: fewer than 2 associated poses");
  }
  const int n = static_cast<int>(pairs.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (int i = 0; i < n; ++i) {
    src.col(i) = pairs[i].est.translation;
    dst.col(i) = pairs[i].gt.translation;
  }
  // Rigid (no-scale) least-squares alignment of estimate onto gt.
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
  const Eigen::Matrix3d R = T.topLeftCorner<3, 3>();
  const Eigen::Vector3d t = T.topRightCorner<3, 1>();
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    sq += (R * src.col(i) + t - dst.col(i)).squaredNorm();
  }
  return std::sqrt(sq / n);
}

RpeResult evaluate_rpe(const TrajectoryRecord& estimate,
                       const TrajectoryRecord& gt, double delta_m,
                       double association_window_s) {
  const auto pairs = associate(estimate, gt, association_window_s);
  if (pairs.size() < 2) {
    throw std::runtime_error("evaluate_rpe: fewer than 2 associated poses");
  }
  // Cumulative gt arc length selects segment end points.
  std::vector<double> arc(pairs.size(), 0.0);
  for (size_t i = 1; i < pairs.size(); ++i) {
    arc[i] = arc[i - 1] +
             (pairs[i].gt.translation - pairs[i - 1].gt.translation).norm();
  }
  if (arc.back() < delta_m) {
    throw std::runtime_error("evaluate_rpe: trajectory shorter than delta");
  }

  double rot_sq = 0.0, trans_sq = 0.0;
  int count = 0;
  size_t j = 0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    while (j < pairs.size() && arc[j] - arc[i] < delta_m) ++j;
    if (j >= pairs.size()) break;
    const double seg_len = arc[j] - arc[i];
    const RigidTransform rel_gt =
        pairs[i].gt.inverse().compose(pairs[j].gt);
    const RigidTransform rel_est =
        pairs[i].est.inverse().compose(pairs[j].est);
    const RigidTransform err = rel_gt.inverse().compose(rel_est);
    const double angle_deg =
        Eigen::AngleAxisd(err.rotation).angle() * 180.0 / M_PI;
    rot_sq += (angle_deg / seg_len) * (angle_deg / seg_len);
    const double trans_pct = err.translation.norm() / seg_len * 100.0;
    trans_sq += trans_pct * trans_pct;
    ++count;
  }
  if (count == 0) {
    throw std::runtime_error("evaluate_rpe: no segment of length delta");
  }
  RpeResult r;
  r.segments = count;
  r.rotation_deg_per_m = std::sqrt(rot_sq / count);
  r.translation_percent = std::sqrt(trans_sq / count);
  return r;
}

DepthErrorResult evaluate_depth(const LocalMap& map,
                                const InverseDepthImage& gt) {
  std::vector<double> abs_errors;
  double rel_sum = 0.0;
  for (const auto& [k, e] : map.estimates()) {
    const int x = k.first.first;
    const int y = k.first.second;
    if (x < 0 || y < 0 || x >= gt.inv_depth.cols() ||
        y >= gt.inv_depth.rows() || !gt.valid(y, x)) {
      continue;
    }
    const double depth_gt = 1.0 / gt.inv_depth(y, x);
    const double depth_est = 1.0 / e.inv_depth;
    const double err = std::abs(depth_est - depth_gt);
    abs_errors.push_back(err);
    rel_sum += err / depth_gt;
  }
  if (abs_errors.empty()) {
    throw std::runtime_error(
        "evaluate_depth: no estimate overlaps valid ground truth");
  }
  DepthErrorResult r;
  r.evaluated = static_cast<int>(abs_errors.size());
  r.mean_m = 0.0;
  for (double e : abs_errors) r.mean_m += e;
  r.mean_m /= abs_errors.size();
  std::nth_element(abs_errors.begin(),
                   abs_errors.begin() + abs_errors.size() / 2,
                   abs_errors.end());
  r.median_m = abs_errors[abs_errors.size() / 2];
  r.relative = rel_sum / abs_errors.size();
  return r;
}

}  // namespace evs
