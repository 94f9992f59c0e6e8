#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <vector>

#include "evs/geometry.hpp"
#include "evs/representations.hpp"
#include "evs/student_t.hpp"

namespace evs {

enum class DepthSource { Static, Temporal };

/// Per-pixel inverse-depth hypothesis anchored to a reference frame.
struct DepthEstimate {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double inv_depth = 0.0;  // 1/m
  double variance = 0.0;   // of inv_depth
  double dof = 2.0;
  DepthSource source = DepthSource::Static;
  int64_t anchor = 0;  // reference frame id
};

/// Semi-dense inverse-depth map, at most one estimate per (pixel, source).
class LocalMap {
 public:
  using Key = std::pair<std::pair<int, int>, DepthSource>;

  LocalMap() = default;
  explicit LocalMap(int64_t anchor) : anchor_(anchor) {}

  int64_t anchor() const { return anchor_; }
  void set_anchor(int64_t a) { anchor_ = a; }
  size_t size() const { return estimates_.size(); }
  bool empty() const { return estimates_.empty(); }

  /// Insert, fusing with any existing estimate at the same (pixel, source);
  /// an incompatible pair keeps the lower-variance estimate.
  void insert(const DepthEstimate& e);
  void insert_raw(const DepthEstimate& e);

  const std::map<Key, DepthEstimate>& estimates() const { return estimates_; }
  std::map<Key, DepthEstimate>& estimates() { return estimates_; }

 private:
  int64_t anchor_ = 0;
  std::map<Key, DepthEstimate> estimates_;
};

struct StereoMatch {
  double disparity = 0.0;  // px (static) — see temporal variant below
  double cost = 0.0;
};

struct TemporalMatch {
  double inv_depth = 0.0;
  double cost = 0.0;
};

struct MatchingOptions {
  int patch_size = 5;            // odd
  int min_disparity = 1;
  int max_disparity = 60;
  double accept_cost = 0.04;     // mean per-pixel zero-mean SSD
  double ratio_test = 0.95;      // best/second-best above this -> no match
  double rho_min = 0.02;         // 1/m
  double rho_max = 2.0;          // 1/m
  int rho_samples = 60;
  int refine_max_iters = 10;
  double refine_tol = 1e-6;
};

/// Block matching of a left-TS patch along the horizontal epipolar line of a
/// rectified rig, with parabolic subpixel refinement. No match when the best
/// cost fails acceptance or the cost curve is flat (ratio test).
/// Throws std::out_of_range when the pixel is too close to the border.
std::optional<StereoMatch> static_stereo_match(const Eigen::Vector2d& x,
                                               const TimeSurfaceMap& ts_left,
                                               const TimeSurfaceMap& ts_right,
                                               const StereoRig& rig,
                                               const MatchingOptions& opt);

/// Search along the generalized epipolar curve in the current AA map induced
/// by T_cur_ref, sampling candidate inverse depths uniformly, then refine.
/// Throws std::domain_error when the relative translation is degenerate.
std::optional<TemporalMatch> temporal_stereo_match(
    const Eigen::Vector2d& x, const AAMap& aa_ref, const AAMap& aa_cur,
    const RigidTransform& T_cur_ref, const CameraIntrinsics& K,
    const MatchingOptions& opt);

struct RefineResult {
  double inv_depth = 0.0;
  double variance = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// One-dimensional Gauss-Newton over inverse depth on patch dissimilarity
/// with bilinear interpolation. On divergence the initial value is kept with
/// inflated variance.
RefineResult refine_inverse_depth(const Eigen::Vector2d& x, double rho0,
                                  const Eigen::ArrayXXf& ref_img,
                                  const Eigen::ArrayXXf& cur_img,
                                  const RigidTransform& T_cur_ref,
                                  const CameraIntrinsics& K,
                                  const MatchingOptions& opt);

/// Student's-t compatible fusion: gate on |mu_a - mu_b| against the combined
/// scales, then precision-weighted update. Same pixel and same source
/// required; cross-source fusion is a contract violation.
std::optional<DepthEstimate> fuse_estimates(const DepthEstimate& a,
                                            const DepthEstimate& b);

/// Union of the two source maps; overlapping pixels keep both estimates.
LocalMap merge_maps(const LocalMap& static_map, const LocalMap& temporal_map);

/// Transform every estimate into a new anchor frame, reprojecting and
/// propagating variance to first order. Points leaving the view or with
/// non-positive depth are dropped.
LocalMap reanchor_map(const LocalMap& map, const RigidTransform& T_new_old,
                      const CameraIntrinsics& K, int64_t new_anchor);

/// Bilinear interpolation helpers shared by matching and tracking.
float bilinear(const Eigen::ArrayXXf& img, double x, double y);
Eigen::Vector2f bilinear_gradient(const Eigen::ArrayXXf& img, double x,
                                  double y);

/// Depth-map exports.
Eigen::ArrayXXf rasterize_inv_depth(const LocalMap& map, int width,
                                    int height);

}  // namespace evs
