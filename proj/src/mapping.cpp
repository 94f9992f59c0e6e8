#include "evs/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

namespace evs {

namespace {

constexpr double kDofCap = 50.0;
constexpr double kVarianceFloor = 1e-12;

LocalMap::Key key_of(const DepthEstimate& e) {
  return {{static_cast<int>(std::lround(e.pixel.x())),
           static_cast<int>(std::lround(e.pixel.y()))},
          e.source};
}

// Mean per-pixel zero-mean SSD between two equally sized patch vectors.
double zero_mean_ssd(const std::vector<float>& a, const std::vector<float>& b) {
  const size_t m = a.size();
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < m; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(m);
  mb /= static_cast<double>(m);
  double ssd = 0.0;
  for (size_t i = 0; i < m; ++i) {
    const double d = (a[i] - ma) - (b[i] - mb);
    ssd += d * d;
  }
  return ssd / static_cast<double>(m);
}

// 1 - zero-mean normalized cross-correlation, in [0, 2]. Time-surface
// patches of the same edge differ by a constant decay factor (the two
// cameras cross corresponding pixel centres at slightly different times);
// a scale-invariant cost matches through that, where plain SSD cannot.
double ncc_cost(const std::vector<float>& a, const std::vector<float>& b) {
  const size_t m = a.size();
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < m; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(m);
  mb /= static_cast<double>(m);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < m; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    dot += da * db;
    na += da * da;
    nb += db * db;
  }
  if (na <= 0.0 || nb <= 0.0) return 2.0;  // flat patch: no information
  return 1.0 - dot / std::sqrt(na * nb);
}

// Population variance of a patch; gates out textureless references for which
// the SSD cost surface carries no information.
double patch_variance(const std::vector<float>& a) {
  double mean = 0.0;
  for (float v : a) mean += v;
  mean /= static_cast<double>(a.size());
  double var = 0.0;
  for (float v : a) var += (v - mean) * (v - mean);
  return var / static_cast<double>(a.size());
}

// Variance of the per-column means of a square patch. Row-constant patches
// (pure horizontal structure) make every horizontal-search cost identical,
// so the match would be decided by numerical noise: the aperture case.
double column_mean_variance(const std::vector<float>& a, int patch_size) {
  double total = 0.0;
  std::vector<double> col(patch_size, 0.0);
  for (int r = 0; r < patch_size; ++r) {
    for (int c = 0; c < patch_size; ++c) {
      col[c] += a[r * patch_size + c];
    }
  }
  for (double& v : col) {
    v /= patch_size;
    total += v;
  }
  total /= patch_size;
  double var = 0.0;
  for (double v : col) var += (v - total) * (v - total);
  return var / patch_size;
}

bool extract_patch_int(const Eigen::ArrayXXf& img, int cx, int cy, int half,
                       std::vector<float>& out) {
  if (cx - half < 0 || cy - half < 0 || cx + half >= img.cols() ||
      cy + half >= img.rows()) {
    return false;
  }
  out.clear();
  for (int dy = -half; dy <= half; ++dy) {
    for (int dx = -half; dx <= half; ++dx) {
      out.push_back(img(cy + dy, cx + dx));
    }
  }
  return true;
}

bool extract_patch_bilinear(const Eigen::ArrayXXf& img, double cx, double cy,
                            int half, std::vector<float>& out) {
  if (cx - half < 0.0 || cy - half < 0.0 || cx + half > img.cols() - 1.0 ||
      cy + half > img.rows() - 1.0) {
    return false;
  }
  out.clear();
  for (int dy = -half; dy <= half; ++dy) {
    for (int dx = -half; dx <= half; ++dx) {
      out.push_back(bilinear(img, cx + dx, cy + dy));
    }
  }
  return true;
}

Eigen::ArrayXXf normalize_counts(const AAMap& aa) {
  const int mx = aa.counts.maxCoeff();
  if (mx <= 0) return Eigen::ArrayXXf::Zero(aa.counts.rows(), aa.counts.cols());
  return aa.counts.cast<float>() / static_cast<float>(mx);
}

// Warped pixel and its derivative w.r.t. inverse depth.
struct EpipolarPoint {
  Eigen::Vector2d pixel;
  Eigen::Vector2d d_pixel_d_rho;
  bool valid = false;
};

EpipolarPoint epipolar_point(const Eigen::Vector2d& x, double rho,
                             const RigidTransform& T_cur_ref,
                             const CameraIntrinsics& K) {
  EpipolarPoint ep;
  const Eigen::Vector3d dir((x.x() - K.cx) / K.fx, (x.y() - K.cy) / K.fy,
                            1.0);
  const Eigen::Vector3d r_dir = T_cur_ref.rotation * dir;
  const Eigen::Vector3d p = r_dir / rho + T_cur_ref.translation;
  if (!(p.z() > 1e-9)) return ep;
  const double zi = 1.0 / p.z();
  ep.pixel = {K.fx * p.x() * zi + K.cx, K.fy * p.y() * zi + K.cy};
  Eigen::Matrix<double, 2, 3> J_proj;
  J_proj << K.fx * zi, 0.0, -K.fx * p.x() * zi * zi, 0.0, K.fy * zi,
      -K.fy * p.y() * zi * zi;
  ep.d_pixel_d_rho = J_proj * (-r_dir / (rho * rho));
  ep.valid = true;
  return ep;
}

}  // namespace

float bilinear(const Eigen::ArrayXXf& img, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min<int>(x0 + 1, static_cast<int>(img.cols()) - 1);
  const int y1 = std::min<int>(y0 + 1, static_cast<int>(img.rows()) - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  return static_cast<float>((1 - fx) * (1 - fy) * img(y0, x0) +
                            fx * (1 - fy) * img(y0, x1) +
                            (1 - fx) * fy * img(y1, x0) +
                            fx * fy * img(y1, x1));
}

Eigen::Vector2f bilinear_gradient(const Eigen::ArrayXXf& img, double x,
                                  double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min<int>(x0 + 1, static_cast<int>(img.cols()) - 1);
  const int y1 = std::min<int>(y0 + 1, static_cast<int>(img.rows()) - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  // Exact in-cell derivative of the bilinear surface.
  const double gx = (1 - fy) * (img(y0, x1) - img(y0, x0)) +
                    fy * (img(y1, x1) - img(y1, x0));
  const double gy = (1 - fx) * (img(y1, x0) - img(y0, x0)) +
                    fx * (img(y1, x1) - img(y0, x1));
  return {static_cast<float>(gx), static_cast<float>(gy)};
}

std::optional<StereoMatch> static_stereo_match(const Eigen::Vector2d& x,
                                               const TimeSurfaceMap& ts_left,
                                               const TimeSurfaceMap& ts_right,
                                               const StereoRig& rig,
                                               const MatchingOptions& opt) {
  if (opt.patch_size % 2 == 0) {
    throw std::invalid_argument("static_stereo_match: patch must be odd");
  }
  const int half = opt.patch_size / 2;
  const int cx = static_cast<int>(std::lround(x.x()));
  const int cy = static_cast<int>(std::lround(x.y()));
  std::vector<float> left_patch, right_patch;
  if (!extract_patch_int(ts_left.values, cx, cy, half, left_patch)) {
    throw std::out_of_range("static_stereo_match: pixel too close to border");
  }
  if (patch_variance(left_patch) < 1e-8) return std::nullopt;
  if (column_mean_variance(left_patch, opt.patch_size) < 1e-8) {
    return std::nullopt;
  }

  std::vector<double> costs;
  std::vector<int> disparities;
  for (int d = opt.min_disparity; d <= opt.max_disparity; ++d) {
    if (!extract_patch_int(ts_right.values, cx - d, cy, half, right_patch)) {
      continue;
    }
    costs.push_back(ncc_cost(left_patch, right_patch));
    disparities.push_back(d);
  }
  if (costs.size() < 3) return std::nullopt;

  size_t best = 0;
  for (size_t i = 1; i < costs.size(); ++i) {
    if (costs[i] < costs[best]) best = i;
  }
  if (costs[best] > opt.accept_cost) return std::nullopt;

  double second = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < costs.size(); ++i) {
    if (std::abs(static_cast<long>(i) - static_cast<long>(best)) > 1) {
      second = std::min(second, costs[i]);
    }
  }
  if (std::isfinite(second) &&
      costs[best] / (second + 1e-12) > opt.ratio_test) {
    return std::nullopt;
  }

  StereoMatch match;
  match.cost = costs[best];
  match.disparity = disparities[best];
  if (best > 0 && best + 1 < costs.size() &&
      disparities[best + 1] - disparities[best - 1] == 2) {
    const double c0 = costs[best - 1], c1 = costs[best], c2 = costs[best + 1];
    const double denom = c0 - 2.0 * c1 + c2;
    if (denom > 1e-18) {
      match.disparity += 0.5 * (c0 - c2) / denom;
    }
  }
  return match;
}

std::optional<TemporalMatch> temporal_stereo_match(
    const Eigen::Vector2d& x, const AAMap& aa_ref, const AAMap& aa_cur,
    const RigidTransform& T_cur_ref, const CameraIntrinsics& K,
    const MatchingOptions& opt) {
  if (T_cur_ref.translation.norm() < 1e-4) {
    throw std::domain_error(
        "temporal_stereo_match: insufficient parallax (translation below "
        "1e-4 m)");
  }
  const int half = opt.patch_size / 2;
  const Eigen::ArrayXXf ref_img = normalize_counts(aa_ref);
  const Eigen::ArrayXXf cur_img = normalize_counts(aa_cur);

  std::vector<float> ref_patch, cur_patch;
  if (!extract_patch_int(ref_img, static_cast<int>(std::lround(x.x())),
                         static_cast<int>(std::lround(x.y())), half,
                         ref_patch)) {
    return std::nullopt;
  }
  if (patch_variance(ref_patch) < 1e-8) return std::nullopt;

  std::vector<double> costs(opt.rho_samples,
                            std::numeric_limits<double>::infinity());
  std::vector<double> rhos(opt.rho_samples, 0.0);
  const double drho =
      (opt.rho_max - opt.rho_min) / std::max(1, opt.rho_samples - 1);
  for (int i = 0; i < opt.rho_samples; ++i) {
    const double rho = opt.rho_min + i * drho;
    rhos[i] = rho;
    const EpipolarPoint ep = epipolar_point(x, rho, T_cur_ref, K);
    if (!ep.valid) continue;
    if (!extract_patch_bilinear(cur_img, ep.pixel.x(), ep.pixel.y(), half,
                                cur_patch)) {
      continue;
    }
    costs[i] = zero_mean_ssd(ref_patch, cur_patch);
  }

  int best = -1;
  for (int i = 0; i < opt.rho_samples; ++i) {
    if (std::isfinite(costs[i]) && (best < 0 || costs[i] < costs[best])) {
      best = i;
    }
  }
  if (std::getenv("TEMPORAL_DEBUG")) {
    double second = std::numeric_limits<double>::infinity();
    for (int i = 0; i < opt.rho_samples; ++i) {
      if (std::abs(i - best) > 1 && std::isfinite(costs[i])) {
        second = std::min(second, costs[i]);
      }
    }
    std::fprintf(stderr,
                 "tsm pix (%.0f,%.0f) best %d cost %.4f second %.4f var %.5f\n",
                 x.x(), x.y(), best, best >= 0 ? costs[best] : -1.0, second,
                 patch_variance(ref_patch));
  }
  if (best < 0 || costs[best] > opt.accept_cost) return std::nullopt;

  double second = std::numeric_limits<double>::infinity();
  for (int i = 0; i < opt.rho_samples; ++i) {
    if (std::abs(i - best) > 1 && std::isfinite(costs[i])) {
      second = std::min(second, costs[i]);
    }
  }
  if (std::isfinite(second) &&
      costs[best] / (second + 1e-12) > opt.ratio_test) {
    return std::nullopt;
  }

  TemporalMatch match;
  match.inv_depth = rhos[best];
  match.cost = costs[best];
  return match;
}

RefineResult refine_inverse_depth(const Eigen::Vector2d& x, double rho0,
                                  const Eigen::ArrayXXf& ref_img,
                                  const Eigen::ArrayXXf& cur_img,
                                  const RigidTransform& T_cur_ref,
                                  const CameraIntrinsics& K,
                                  const MatchingOptions& opt) {
  const int half = opt.patch_size / 2;
  std::vector<float> ref_patch;
  RefineResult out;
  out.inv_depth = rho0;
  out.variance = 1e6;
  if (!extract_patch_int(ref_img, static_cast<int>(std::lround(x.x())),
                         static_cast<int>(std::lround(x.y())), half,
                         ref_patch)) {
    return out;
  }
  const size_t m = ref_patch.size();
  double ref_mean = 0.0;
  for (float v : ref_patch) ref_mean += v;
  ref_mean /= static_cast<double>(m);

  double rho = rho0;
  const double lo = 0.5 * opt.rho_min;
  const double hi = 2.0 * opt.rho_max;

  auto evaluate = [&](double r, double& sse, double& JtJ, double& Jtr) {
    sse = 0.0;
    JtJ = 0.0;
    Jtr = 0.0;
    const EpipolarPoint ep = epipolar_point(x, r, T_cur_ref, K);
    if (!ep.valid) return false;
    if (ep.pixel.x() - half < 0.0 || ep.pixel.y() - half < 0.0 ||
        ep.pixel.x() + half > cur_img.cols() - 1.0 ||
        ep.pixel.y() + half > cur_img.rows() - 1.0) {
      return false;
    }
    std::vector<double> res(m);
    std::vector<double> jac(m);
    double cur_mean = 0.0;
    size_t idx = 0;
    for (int dy = -half; dy <= half; ++dy) {
      for (int dx = -half; dx <= half; ++dx, ++idx) {
        const double px = ep.pixel.x() + dx, py = ep.pixel.y() + dy;
        const double v = bilinear(cur_img, px, py);
        cur_mean += v;
        const Eigen::Vector2f g = bilinear_gradient(cur_img, px, py);
        res[idx] = v - ref_patch[idx];
        jac[idx] = g.x() * ep.d_pixel_d_rho.x() + g.y() * ep.d_pixel_d_rho.y();
      }
    }
    cur_mean /= static_cast<double>(m);
    for (size_t i = 0; i < m; ++i) {
      const double r_i = res[i] - (cur_mean - ref_mean);
      sse += r_i * r_i;
      JtJ += jac[i] * jac[i];
      Jtr += jac[i] * r_i;
    }
    return true;
  };

  double sse = 0.0, JtJ = 0.0, Jtr = 0.0;
  if (!evaluate(rho, sse, JtJ, Jtr)) return out;
  if (JtJ < 1e-12) {
    // Flat cost: refinement cannot proceed.
    out.variance = 1e6;
    return out;
  }

  bool converged = false;
  for (int it = 0; it < opt.refine_max_iters && !converged; ++it) {
    out.iterations = it + 1;
    double step = -Jtr / JtJ;
    if (std::abs(step) < opt.refine_tol) {
      converged = true;
      break;
    }
    // Line search along the Gauss-Newton direction. The analytic in-cell
    // gradient only approximates the finite-shift slope of the cost, so the
    // raw step length is unreliable in both directions: probe the full step,
    // a quadratic-interpolation step through (sse, dsse, sse_full), and
    // halvings, and take the best strict improvement.
    double best_rho = rho, best_sse = sse, best_JtJ = JtJ, best_Jtr = Jtr;
    const double dsse = 2.0 * Jtr;  // directional derivative along +1
    std::vector<double> candidates{step, 0.5 * step, 0.25 * step,
                                   0.125 * step};
    {
      double sse_full, JtJ_full, Jtr_full;
      const double rho_full = rho + step;
      if (rho_full > lo && rho_full < hi &&
          evaluate(rho_full, sse_full, JtJ_full, Jtr_full)) {
        const double denom = 2.0 * (sse_full - sse - dsse * step);
        if (denom > 1e-18) {
          candidates.insert(candidates.begin(),
                            -dsse * step * step / denom);
        }
      }
    }
    for (double s : candidates) {
      const double rho_new = rho + s;
      if (!(rho_new > lo) || !(rho_new < hi) || !std::isfinite(rho_new)) {
        continue;
      }
      double sse_new, JtJ_new, Jtr_new;
      if (!evaluate(rho_new, sse_new, JtJ_new, Jtr_new) || JtJ_new < 1e-12) {
        continue;
      }
      if (sse_new < best_sse) {
        best_rho = rho_new;
        best_sse = sse_new;
        best_JtJ = JtJ_new;
        best_Jtr = Jtr_new;
      }
    }
    if (best_rho == rho) {
      // No step improves: bottom of the sampled cost valley.
      converged = true;
    } else {
      if (std::abs(best_rho - rho) < opt.refine_tol) converged = true;
      rho = best_rho;
      sse = best_sse;
      JtJ = best_JtJ;
      Jtr = best_Jtr;
    }
  }
  if (!converged) {
    // Diverged: keep the block-match value with inflated variance.
    out.inv_depth = rho0;
    out.variance =
        10.0 * std::max(sse / std::max<double>(1, m - 1) / JtJ, 1e-10);
    out.converged = false;
    return out;
  }
  out.inv_depth = rho;
  out.variance = std::max(sse / std::max<double>(1, m - 1) / JtJ, 1e-10);
  out.converged = true;
  return out;
}

std::optional<DepthEstimate> fuse_estimates(const DepthEstimate& a,
                                            const DepthEstimate& b) {
  if (a.source != b.source) {
    throw std::logic_error("fuse_estimates: cross-source fusion forbidden");
  }
  if (key_of(a).first != key_of(b).first) {
    throw std::logic_error("fuse_estimates: pixel mismatch");
  }
  // Compatibility gate at 2 combined scales.
  const double gate = 2.0 * std::sqrt(a.variance + b.variance);
  if (std::abs(a.inv_depth - b.inv_depth) > gate) return std::nullopt;

  const double wa = 1.0 / std::max(a.variance, kVarianceFloor);
  const double wb = 1.0 / std::max(b.variance, kVarianceFloor);
  DepthEstimate fused = a;
  fused.inv_depth = (wa * a.inv_depth + wb * b.inv_depth) / (wa + wb);
  fused.variance = std::max(1.0 / (wa + wb), kVarianceFloor);
  fused.dof = std::min(std::max(a.dof, b.dof) + 1.0, kDofCap);
  return fused;
}

void LocalMap::insert(const DepthEstimate& e) {
  const Key k = key_of(e);
  auto it = estimates_.find(k);
  if (it == estimates_.end()) {
    estimates_.emplace(k, e);
    return;
  }
  const auto fused = fuse_estimates(it->second, e);
  if (fused) {
    it->second = *fused;
  } else if (e.variance < it->second.variance) {
    it->second = e;
  }
}

void LocalMap::insert_raw(const DepthEstimate& e) {
  estimates_[key_of(e)] = e;
}

LocalMap merge_maps(const LocalMap& static_map, const LocalMap& temporal_map) {
  if (static_map.anchor() != temporal_map.anchor()) {
    throw std::invalid_argument("merge_maps: anchor frames differ");
  }
  LocalMap merged(static_map.anchor());
  for (const auto& [k, e] : static_map.estimates()) merged.insert(e);
  for (const auto& [k, e] : temporal_map.estimates()) merged.insert(e);
  return merged;
}

LocalMap reanchor_map(const LocalMap& map, const RigidTransform& T_new_old,
                      const CameraIntrinsics& K, int64_t new_anchor) {
  LocalMap out(new_anchor);
  const Eigen::Matrix3d R = T_new_old.rotation.toRotationMatrix();
  for (const auto& [k, e] : map.estimates()) {
    const Eigen::Vector3d dir((e.pixel.x() - K.cx) / K.fx,
                              (e.pixel.y() - K.cy) / K.fy, 1.0);
    const Eigen::Vector3d p_new =
        R * (dir / e.inv_depth) + T_new_old.translation;
    if (!(p_new.z() > 1e-9)) continue;
    Eigen::Vector2d px(K.fx * p_new.x() / p_new.z() + K.cx,
                       K.fy * p_new.y() / p_new.z() + K.cy);
    if (!K.contains(px)) continue;
    DepthEstimate moved = e;
    moved.pixel = px;
    moved.inv_depth = 1.0 / p_new.z();
    moved.anchor = new_anchor;
    // First-order propagation through rho -> z_new -> rho_new.
    const double r3dir = R.row(2).dot(dir);
    const double drho_new =
        r3dir / (e.inv_depth * e.inv_depth * p_new.z() * p_new.z());
    moved.variance =
        std::max(drho_new * drho_new * e.variance, kVarianceFloor);
    out.insert(moved);
  }
  return out;
}

Eigen::ArrayXXf rasterize_inv_depth(const LocalMap& map, int width,
                                    int height) {
  Eigen::ArrayXXf grid = Eigen::ArrayXXf::Zero(height, width);
  Eigen::ArrayXXf var = Eigen::ArrayXXf::Constant(
      height, width, std::numeric_limits<float>::infinity());
  for (const auto& [k, e] : map.estimates()) {
    const int x = k.first.first;
    const int y = k.first.second;
    if (x < 0 || y < 0 || x >= width || y >= height) continue;
    if (static_cast<float>(e.variance) < var(y, x)) {
      var(y, x) = static_cast<float>(e.variance);
      grid(y, x) = static_cast<float>(e.inv_depth);
    }
  }
  return grid;
}

}  // namespace evs
