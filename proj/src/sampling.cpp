#include "evs/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace evs {

namespace {

struct BlockPixels {
  std::vector<SampledPixel> candidates;  // nonzero-count pixels
};

// Weighted sampling without replacement via exponential jump keys: the k
// smallest keys -log(u)/w are the sample.
std::vector<SampledPixel> draw_from_block(BlockPixels& block, int k,
                                          std::mt19937_64& rng) {
  std::vector<SampledPixel> out;
  if (k <= 0 || block.candidates.empty()) return out;
  std::uniform_real_distribution<double> uni(
      std::numeric_limits<double>::min(), 1.0);
  std::vector<std::pair<double, size_t>> keys;
  keys.reserve(block.candidates.size());
  for (size_t i = 0; i < block.candidates.size(); ++i) {
    const double key =
        -std::log(uni(rng)) / static_cast<double>(block.candidates[i].count);
    keys.emplace_back(key, i);
  }
  const size_t take = std::min<size_t>(k, keys.size());
  std::partial_sort(keys.begin(), keys.begin() + take, keys.end());
  std::vector<SampledPixel> rest;
  std::vector<bool> taken(block.candidates.size(), false);
  for (size_t i = 0; i < take; ++i) {
    out.push_back(block.candidates[keys[i].second]);
    taken[keys[i].second] = true;
  }
  for (size_t i = 0; i < block.candidates.size(); ++i) {
    if (!taken[i]) rest.push_back(block.candidates[i]);
  }
  block.candidates.swap(rest);
  return out;
}

}  // namespace

std::vector<SampledPixel> sample_edge_pixels(const AAMap& aa, int budget,
                                             std::mt19937_64& rng) {
  if (budget <= 0) {
    throw std::invalid_argument("sample_edge_pixels: budget must be > 0");
  }
  const int nb = aa.grid.n_blocks();
  std::vector<BlockPixels> blocks(nb);
  for (int y = 0; y < aa.height(); ++y) {
    for (int x = 0; x < aa.width(); ++x) {
      const int c = aa.counts(y, x);
      if (c <= 0) continue;
      blocks[aa.grid.block_index(x, y)].candidates.push_back(
          {x, y, c, Eigen::Vector2f::Zero()});
    }
  }

  std::vector<SampledPixel> sampled;
  sampled.reserve(budget);
  const int quota = std::max(1, (budget + nb - 1) / nb);
  for (int i = 0; i < nb && static_cast<int>(sampled.size()) < budget; ++i) {
    const int want =
        std::min(quota, budget - static_cast<int>(sampled.size()));
    auto picked = draw_from_block(blocks[i], want, rng);
    sampled.insert(sampled.end(), picked.begin(), picked.end());
  }
  // Redistribute surplus round-robin over blocks with remaining candidates.
  while (static_cast<int>(sampled.size()) < budget) {
    bool progress = false;
    for (int i = 0; i < nb && static_cast<int>(sampled.size()) < budget;
         ++i) {
      auto picked = draw_from_block(blocks[i], 1, rng);
      if (!picked.empty()) {
        sampled.push_back(picked.front());
        progress = true;
      }
    }
    if (!progress) break;  // AA map exhausted
  }

  std::shuffle(sampled.begin(), sampled.end(), rng);
  return sampled;
}

Eigen::Vector2f ts_gradient(const TimeSurfaceMap& ts, int x, int y) {
  const auto& v = ts.values;
  const int W = ts.width(), H = ts.height();
  auto dx = [&]() -> float {
    if (x == 0) return v(y, 1) - v(y, 0);
    if (x == W - 1) return v(y, W - 1) - v(y, W - 2);
    return 0.5f * (v(y, x + 1) - v(y, x - 1));
  };
  auto dy = [&]() -> float {
    if (y == 0) return v(1, x) - v(0, x);
    if (y == H - 1) return v(H - 1, x) - v(H - 2, x);
    return 0.5f * (v(y + 1, x) - v(y - 1, x));
  };
  return {dx(), dy()};
}

std::pair<SampledPixelSet, SampledPixelSet> classify_by_gradient(
    std::vector<SampledPixel> pixels, const TimeSurfaceMap& ts, double eta) {
  if (!(eta > 0.0)) {
    throw std::invalid_argument("classify_by_gradient: eta must be > 0");
  }
  constexpr double kEps = 1e-6;
  SampledPixelSet temporal;
  temporal.group = StereoGroup::TemporalStereo;
  SampledPixelSet stat;
  stat.group = StereoGroup::StaticStereo;
  for (SampledPixel& p : pixels) {
    p.gradient = ts_gradient(ts, p.x, p.y);
    const double ratio =
        std::abs(p.gradient.x()) / (std::abs(p.gradient.y()) + kEps);
    (ratio < eta ? temporal : stat).pixels.push_back(p);
  }
  return {std::move(temporal), std::move(stat)};
}

}  // namespace evs
