#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

#include "evs/representations.hpp"

namespace evs {

enum class StereoGroup { TemporalStereo, StaticStereo };

struct SampledPixel {
  int x = 0;
  int y = 0;
  int count = 0;                                    // AA count
  Eigen::Vector2f gradient = Eigen::Vector2f::Zero();  // TS gradient (gx, gy)
};

struct SampledPixelSet {
  std::vector<SampledPixel> pixels;
  StereoGroup group = StereoGroup::StaticStereo;
};

/// Weighted sampling without replacement from each block independently,
/// weight proportional to AA count. Per-block quota is budget / n_blocks;
/// surplus is redistributed to blocks that still have unsampled nonzero
/// pixels. The final list is shuffled.
std::vector<SampledPixel> sample_edge_pixels(const AAMap& aa, int budget,
                                             std::mt19937_64& rng);

/// Central-difference TS gradient at (x, y); one-sided on the border.
Eigen::Vector2f ts_gradient(const TimeSurfaceMap& ts, int x, int y);

/// Split pixels by TS gradient orientation: |gx| / (|gy| + eps) < eta goes
/// to the temporal group (near-horizontal structure), the rest to static.
std::pair<SampledPixelSet, SampledPixelSet> classify_by_gradient(
    std::vector<SampledPixel> pixels, const TimeSurfaceMap& ts, double eta);

}  // namespace evs
