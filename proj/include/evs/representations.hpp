#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

namespace evs {

/// Single brightness-change sample from an event camera.
struct Event {
  int64_t t = 0;  // microseconds
  uint16_t x = 0;
  uint16_t y = 0;
  int8_t p = 1;  // polarity, +1 or -1
};

/// Exponential-decay recency image. values(y, x) in [0, 1].
struct TimeSurfaceMap {
  Eigen::ArrayXXf values;  // rows = height, cols = width
  int64_t stamp = 0;       // evaluation time, microseconds
  double tau = 0.03;       // decay, seconds

  int width() const { return static_cast<int>(values.cols()); }
  int height() const { return static_cast<int>(values.rows()); }
};

/// Partition of the image plane into w x w blocks (edge blocks may be
/// smaller).
struct BlockGrid {
  int width = 0;
  int height = 0;
  int block_size = 0;

  int blocks_x() const { return (width + block_size - 1) / block_size; }
  int blocks_y() const { return (height + block_size - 1) / block_size; }
  int n_blocks() const { return blocks_x() * blocks_y(); }
  int block_index(int x, int y) const {
    return (y / block_size) * blocks_x() + (x / block_size);
  }
  /// Pixel extent of block i: [x0, x1) x [y0, y1).
  void block_bounds(int i, int& x0, int& y0, int& x1, int& y1) const;
  int block_area(int i) const;
};

/// Per-block event counts under contrast gating.
struct AAMap {
  Eigen::ArrayXXi counts;       // rows = height, cols = width
  BlockGrid grid;
  std::vector<uint8_t> flags;   // per block; 1 = still accumulating
  int64_t stamp = 0;            // generation time, microseconds
  int64_t rejected = 0;         // out-of-bounds events dropped

  int width() const { return static_cast<int>(counts.cols()); }
  int height() const { return static_cast<int>(counts.rows()); }
};

struct BlockReport {
  int block = 0;
  bool flag = true;
  double contrast = 0.0;
  int64_t accepted = 0;
};

/// Incrementally maintained per-pixel last-event timestamps, from which time
/// surfaces are evaluated at arbitrary instants.
class TimeSurfaceBuilder {
 public:
  TimeSurfaceBuilder(int width, int height);

  void add(const Event& e);
  void add(std::span<const Event> events);
  TimeSurfaceMap evaluate(int64_t t_eval, double tau) const;

 private:
  Eigen::Array<int64_t, Eigen::Dynamic, Eigen::Dynamic> last_;
};

/// One-shot time surface over an event slice.
TimeSurfaceMap build_time_surface(std::span<const Event> events,
                                  int64_t t_eval, double tau, int width,
                                  int height);

/// Elementwise 1 - value; exact involution.
TimeSurfaceMap negate_time_surface(const TimeSurfaceMap& ts);

/// Population variance of a block of counts.
double image_contrast(const Eigen::Ref<const Eigen::ArrayXXi>& block);

/// Replay of per-block adaptive accumulation: events in blocks whose
/// contrast already exceeded beta are skipped; contrast is re-evaluated on a
/// fixed dt schedule.
AAMap build_adaptive_accumulation(std::span<const Event> events,
                                  const BlockGrid& grid, double beta,
                                  int64_t dt_us, int64_t stamp = 0);

/// Per-block flag, final contrast and accepted-event count.
std::vector<BlockReport> blockwise_flags(const AAMap& aa);

}  // namespace evs
