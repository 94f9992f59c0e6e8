#include "evs/representations.hpp"

#include <cmath>
#include <stdexcept>

namespace evs {

void BlockGrid::block_bounds(int i, int& x0, int& y0, int& x1,
                             int& y1) const {
  const int bx = i % blocks_x();
  const int by = i / blocks_x();
  x0 = bx * block_size;
  y0 = by * block_size;
  x1 = std::min(x0 + block_size, width);
  y1 = std::min(y0 + block_size, height);
}

int BlockGrid::block_area(int i) const {
  int x0, y0, x1, y1;
  block_bounds(i, x0, y0, x1, y1);
  return (x1 - x0) * (y1 - y0);
}

TimeSurfaceBuilder::TimeSurfaceBuilder(int width, int height)
    : last_(Eigen::Array<int64_t, Eigen::Dynamic, Eigen::Dynamic>::Constant(
          height, width, -1)) {}

void TimeSurfaceBuilder::add(const Event& e) {
  if (e.x < last_.cols() && e.y < last_.rows()) {
    last_(e.y, e.x) = std::max(last_(e.y, e.x), e.t);
  }
}

void TimeSurfaceBuilder::add(std::span<const Event> events) {
  for (const Event& e : events) add(e);
}

TimeSurfaceMap TimeSurfaceBuilder::evaluate(int64_t t_eval,
                                            double tau) const {
  TimeSurfaceMap ts;
  ts.stamp = t_eval;
  ts.tau = tau;
  ts.values.setZero(last_.rows(), last_.cols());
  const double inv_tau_us = 1.0 / (tau * 1e6);
  for (Eigen::Index r = 0; r < last_.rows(); ++r) {
    for (Eigen::Index c = 0; c < last_.cols(); ++c) {
      const int64_t t_last = last_(r, c);
      if (t_last < 0) continue;
      const double dt = static_cast<double>(t_eval - t_last);
      ts.values(r, c) = static_cast<float>(std::exp(-dt * inv_tau_us));
    }
  }
  return ts;
}

TimeSurfaceMap build_time_surface(std::span<const Event> events,
                                  int64_t t_eval, double tau, int width,
                                  int height) {
  TimeSurfaceBuilder builder(width, height);
  builder.add(events);
  return builder.evaluate(t_eval, tau);
}

TimeSurfaceMap negate_time_surface(const TimeSurfaceMap& ts) {
  TimeSurfaceMap out = ts;
  out.values = 1.0f - ts.values;
  return out;
}

double image_contrast(const Eigen::Ref<const Eigen::ArrayXXi>& block) {
  if (block.size() == 0) {
    throw std::invalid_argument("image_contrast: empty block");
  }
  const double n = static_cast<double>(block.size());
  const double mean = block.cast<double>().sum() / n;
  const double mean_sq = block.cast<double>().square().sum() / n;
  return mean_sq - mean * mean;
}

AAMap build_adaptive_accumulation(std::span<const Event> events,
                                  const BlockGrid& grid, double beta,
                                  int64_t dt_us, int64_t stamp) {
  if (grid.block_size <= 0 || grid.width <= 0 || grid.height <= 0) {
    throw std::invalid_argument("build_adaptive_accumulation: bad grid");
  }
  if (!(beta > 0.0) || dt_us <= 0) {
    throw std::invalid_argument(
        "build_adaptive_accumulation: beta and dt must be positive");
  }

  AAMap aa;
  aa.grid = grid;
  aa.stamp = stamp;
  aa.counts.setZero(grid.height, grid.width);
  aa.flags.assign(grid.n_blocks(), 1);

  // Incremental per-block sum and sum of squares keep each contrast check
  // O(1) per block.
  std::vector<double> sum(grid.n_blocks(), 0.0);
  std::vector<double> sum_sq(grid.n_blocks(), 0.0);

  const int nb = grid.n_blocks();
  auto run_contrast_check = [&]() {
    for (int i = 0; i < nb; ++i) {
      if (!aa.flags[i]) continue;
      const double n = static_cast<double>(grid.block_area(i));
      const double mean = sum[i] / n;
      const double variance = sum_sq[i] / n - mean * mean;
      if (variance > beta) aa.flags[i] = 0;
    }
  };

  int64_t next_check = 0;
  bool schedule_started = false;
  for (const Event& e : events) {
    if (!schedule_started) {
      next_check = e.t + dt_us;
      schedule_started = true;
    }
    while (e.t >= next_check) {
      run_contrast_check();
      next_check += dt_us;
    }
    if (e.x >= grid.width || e.y >= grid.height) {
      ++aa.rejected;
      continue;
    }
    const int bi = grid.block_index(e.x, e.y);
    if (!aa.flags[bi]) continue;
    const int v = aa.counts(e.y, e.x);
    aa.counts(e.y, e.x) = v + 1;
    sum[bi] += 1.0;
    sum_sq[bi] += 2.0 * v + 1.0;
  }
  return aa;
}

std::vector<BlockReport> blockwise_flags(const AAMap& aa) {
  std::vector<BlockReport> reports;
  const int nb = aa.grid.n_blocks();
  reports.reserve(nb);
  for (int i = 0; i < nb; ++i) {
    int x0, y0, x1, y1;
    aa.grid.block_bounds(i, x0, y0, x1, y1);
    BlockReport r;
    r.block = i;
    r.flag = aa.flags[i] != 0;
    const auto block = aa.counts.block(y0, x0, y1 - y0, x1 - x0);
    r.accepted = block.sum();
    r.contrast = image_contrast(block);
    reports.push_back(r);
  }
  return reports;
}

}  // namespace evs
