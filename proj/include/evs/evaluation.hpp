#pragma once

#include "evs/io.hpp"
#include "evs/mapping.hpp"
#include "evs/synth.hpp"

namespace evs {

/// Translational RMSE (meters) after nearest-timestamp association (5 ms
/// window) and least-squares SE(3) alignment of the estimate onto the
/// ground truth. Throws when fewer than 2 pairs associate.
double evaluate_ate(const TrajectoryRecord& estimate,
                    const TrajectoryRecord& gt,
                    double association_window_s = 0.005);

struct RpeResult {
  double rotation_deg_per_m = 0.0;
  double translation_percent = 0.0;
  int segments = 0;
};

/// Relative pose RMSE over segments of the given arc length (meters),
/// normalized per meter. Throws when the trajectory is shorter than delta.
RpeResult evaluate_rpe(const TrajectoryRecord& estimate,
                       const TrajectoryRecord& gt, double delta_m,
                       double association_window_s = 0.005);

struct DepthErrorResult {
  double mean_m = 0.0;
  double median_m = 0.0;
  double relative = 0.0;  // mean |depth error| / true depth
  int evaluated = 0;
};

/// Per-point absolute depth error of map estimates against a ground-truth
/// inverse depth grid. Throws when no estimate overlaps a valid gt pixel.
DepthErrorResult evaluate_depth(const LocalMap& map,
                                const InverseDepthImage& gt);

}  // namespace evs
