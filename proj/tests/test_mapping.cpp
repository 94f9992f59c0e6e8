#include <doctest.h>

#include <cmath>
#include <random>

#include "evs/mapping.hpp"

using namespace evs;

namespace {

CameraIntrinsics simple_camera() {
  CameraIntrinsics K;
  K.fx = K.fy = 100.0;
  K.cx = 160.0;
  K.cy = 120.0;
  K.width = 320;
  K.height = 240;
  return K;
}

StereoRig simple_rig(double baseline = 0.1) {
  StereoRig rig;
  rig.left = rig.right = simple_camera();
  rig.T_right_left.translation = Eigen::Vector3d(-baseline, 0, 0);
  return rig;
}

// Smooth aperiodic random texture: uniform noise box-blurred a few times so
// subpixel bilinear sampling is meaningful and matches are unambiguous.
Eigen::ArrayXXf smooth_noise(int width, int height, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Eigen::ArrayXXf img(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) img(y, x) = u(rng);
  for (int pass = 0; pass < 3; ++pass) {
    Eigen::ArrayXXf tmp = img;
    for (int y = 1; y < height - 1; ++y)
      for (int x = 1; x < width - 1; ++x)
        tmp(y, x) = 0.25f * (2.0f * img(y, x) + img(y, x - 1) + img(y, x + 1));
    img = tmp;
    for (int y = 1; y < height - 1; ++y)
      for (int x = 1; x < width - 1; ++x)
        tmp(y, x) = 0.25f * (2.0f * img(y, x) + img(y - 1, x) + img(y + 1, x));
    img = tmp;
  }
  return img;
}

// out(y, x) = img(y, x + shift), bilinearly resampled.
Eigen::ArrayXXf shift_x(const Eigen::ArrayXXf& img, double shift) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  Eigen::ArrayXXf out = Eigen::ArrayXXf::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double sx = x + shift;
      if (sx >= 0.0 && sx <= w - 1.0) out(y, x) = bilinear(img, sx, y);
    }
  return out;
}

TimeSurfaceMap as_ts(Eigen::ArrayXXf img) {
  TimeSurfaceMap ts;
  ts.values = std::move(img);
  return ts;
}

DepthEstimate make_estimate(double rho, double var, DepthSource src,
                            double px = 10, double py = 10, double dof = 5,
                            int64_t anchor = 0) {
  DepthEstimate e;
  e.pixel = Eigen::Vector2d(px, py);
  e.inv_depth = rho;
  e.variance = var;
  e.dof = dof;
  e.source = src;
  e.anchor = anchor;
  return e;
}

}  // namespace

TEST_CASE("bilinear: exact on the lattice and linear in between") {
  Eigen::ArrayXXf img(3, 3);
  img << 0, 1, 2, 3, 4, 5, 6, 7, 8;
  CHECK(bilinear(img, 1.0, 1.0) == doctest::Approx(4.0f));
  CHECK(bilinear(img, 0.5, 0.0) == doctest::Approx(0.5f));
  CHECK(bilinear(img, 0.0, 0.5) == doctest::Approx(1.5f));
  CHECK(bilinear(img, 0.5, 0.5) == doctest::Approx(2.0f));
  const auto g = bilinear_gradient(img, 0.5, 0.5);
  CHECK(g.x() == doctest::Approx(1.0f));
  CHECK(g.y() == doctest::Approx(3.0f));
}

TEST_CASE("static stereo: known disparity from a shifted image") {
  // True depth 2 m with fx = 100, baseline 0.1 -> disparity 5 px; build the
  // right image as the left shifted by exactly that.
  const auto rig = simple_rig();
  const double disparity = 5.0;
  const Eigen::ArrayXXf tex = smooth_noise(320, 240, 1);
  const auto left = as_ts(tex);
  const auto right = as_ts(shift_x(tex, disparity));

  MatchingOptions opt;
  const auto m = static_stereo_match({160, 120}, left, right, rig, opt);
  REQUIRE(m.has_value());
  CHECK(std::abs(m->disparity - disparity) < 0.2);
  CHECK(m->cost < opt.accept_cost);
}

TEST_CASE("static stereo: subpixel disparity") {
  const auto rig = simple_rig();
  const double disparity = 7.4;
  const Eigen::ArrayXXf tex = smooth_noise(320, 240, 2);
  const auto left = as_ts(tex);
  const auto right = as_ts(shift_x(tex, disparity));
  MatchingOptions opt;
  const auto m = static_stereo_match({100, 60}, left, right, rig, opt);
  REQUIRE(m.has_value());
  CHECK(std::abs(m->disparity - disparity) < 0.3);
}

TEST_CASE("static stereo: flat patches and borders are rejected") {
  const auto rig = simple_rig();
  const auto flat = as_ts(Eigen::ArrayXXf::Constant(240, 320, 0.5f));
  MatchingOptions opt;
  CHECK(!static_stereo_match({160, 120}, flat, flat, rig, opt).has_value());
  const auto left = as_ts(smooth_noise(320, 240, 3));
  CHECK_THROWS_AS(static_stereo_match({1, 120}, left, left, rig, opt),
                  std::out_of_range);
  CHECK_THROWS_AS(static_stereo_match({160, 1}, left, left, rig, opt),
                  std::out_of_range);
}

TEST_CASE("static stereo: no structure to the right means no match") {
  const auto rig = simple_rig();
  const auto left = as_ts(smooth_noise(320, 240, 4));
  const auto right = as_ts(Eigen::ArrayXXf::Zero(240, 320));
  MatchingOptions opt;
  CHECK(!static_stereo_match({160, 120}, left, right, rig, opt).has_value());
}

TEST_CASE("temporal stereo: known inverse depth under pure translation") {
  const auto K = simple_camera();
  // Camera translates 5 cm along +x; a point at depth 1 m moves -5 px in the
  // current frame. Build AA maps as stripe patterns with that exact shift.
  const double depth = 1.0;
  RigidTransform T_cur_ref;
  T_cur_ref.translation = Eigen::Vector3d(-0.05, 0, 0);
  const double shift = K.fx * 0.05 / depth;

  AAMap ref, cur;
  ref.grid = cur.grid = BlockGrid{320, 240, 30};
  const Eigen::ArrayXXf tex = smooth_noise(320, 240, 5);
  ref.counts = (tex * 100).cast<int>();
  cur.counts = (shift_x(tex, shift) * 100).cast<int>();

  MatchingOptions opt;
  const auto m = temporal_stereo_match({160, 120}, ref, cur, T_cur_ref, K, opt);
  REQUIRE(m.has_value());
  CHECK(std::abs(m->inv_depth - 1.0 / depth) < 0.05);
}

TEST_CASE("temporal stereo: degenerate translation throws") {
  const auto K = simple_camera();
  AAMap ref, cur;
  ref.grid = cur.grid = BlockGrid{320, 240, 30};
  ref.counts = cur.counts = Eigen::ArrayXXi::Zero(240, 320);
  RigidTransform tiny;
  tiny.translation = Eigen::Vector3d(1e-6, 0, 0);
  MatchingOptions opt;
  CHECK_THROWS_AS(temporal_stereo_match({160, 120}, ref, cur, tiny, K, opt),
                  std::domain_error);
}

TEST_CASE("refine_inverse_depth: converges to the true inverse depth") {
  const auto K = simple_camera();
  RigidTransform T_cur_ref;
  T_cur_ref.translation = Eigen::Vector3d(-0.05, 0, 0);
  const double rho_true = 1.0;
  const double shift = K.fx * 0.05 * rho_true;
  const Eigen::ArrayXXf ref_img = smooth_noise(320, 240, 6);
  const Eigen::ArrayXXf cur_img = shift_x(ref_img, shift);

  MatchingOptions opt;
  const auto r = refine_inverse_depth({160, 120}, 0.9, ref_img, cur_img,
                                      T_cur_ref, K, opt);
  CHECK(r.converged);
  CHECK(std::abs(r.inv_depth - rho_true) < 0.01);
  CHECK(r.variance > 0.0);
}

TEST_CASE("refine_inverse_depth: flat cost surface does not converge") {
  const auto K = simple_camera();
  RigidTransform T_cur_ref;
  T_cur_ref.translation = Eigen::Vector3d(-0.05, 0, 0);
  const Eigen::ArrayXXf flat = Eigen::ArrayXXf::Constant(240, 320, 0.5f);
  MatchingOptions opt;
  const auto r =
      refine_inverse_depth({160, 120}, 0.9, flat, flat, T_cur_ref, K, opt);
  CHECK(!r.converged);
}

TEST_CASE("fuse_estimates: exact precision-weighted oracle") {
  const auto a = make_estimate(0.5, 0.01, DepthSource::Static);
  const auto b = make_estimate(0.54, 0.02, DepthSource::Static);
  const auto f = fuse_estimates(a, b);
  REQUIRE(f.has_value());
  // Precisions 100 and 50: mean = (100*0.5 + 50*0.54)/150.
  CHECK(f->inv_depth == doctest::Approx((100 * 0.5 + 50 * 0.54) / 150.0));
  CHECK(f->variance == doctest::Approx(1.0 / 150.0));
  CHECK(f->variance < a.variance);
  CHECK(f->dof == doctest::Approx(6.0));
}

TEST_CASE("fuse_estimates: gate rejects incompatible hypotheses") {
  const auto a = make_estimate(0.5, 1e-4, DepthSource::Static);
  const auto b = make_estimate(1.5, 1e-4, DepthSource::Static);
  CHECK(!fuse_estimates(a, b).has_value());
  // Barely inside the 2-sigma gate fuses.
  const auto c = make_estimate(0.5 + 1.9 * std::sqrt(2e-4), 1e-4,
                               DepthSource::Static);
  CHECK(fuse_estimates(a, c).has_value());
}

TEST_CASE("fuse_estimates: dof grows but saturates; cross-source throws") {
  auto a = make_estimate(0.5, 0.01, DepthSource::Static, 10, 10, 49.5);
  auto b = make_estimate(0.5, 0.01, DepthSource::Static, 10, 10, 3.0);
  const auto f = fuse_estimates(a, b);
  REQUIRE(f.has_value());
  CHECK(f->dof == doctest::Approx(50.0));

  const auto t = make_estimate(0.5, 0.01, DepthSource::Temporal);
  CHECK_THROWS_AS(fuse_estimates(a, t), std::logic_error);
}

TEST_CASE("LocalMap::insert fuses repeated observations") {
  LocalMap map(3);
  map.insert(make_estimate(0.5, 0.01, DepthSource::Static));
  map.insert(make_estimate(0.52, 0.01, DepthSource::Static));
  CHECK(map.size() == 1);
  const auto& e = map.estimates().begin()->second;
  CHECK(e.inv_depth == doctest::Approx(0.51));
  CHECK(e.variance == doctest::Approx(0.005));

  // Same pixel, other source: second entry.
  map.insert(make_estimate(0.5, 0.01, DepthSource::Temporal));
  CHECK(map.size() == 2);

  // Incompatible insert keeps the lower-variance one.
  map.insert(make_estimate(5.0, 1.0, DepthSource::Temporal));
  CHECK(map.size() == 2);
  const auto key = LocalMap::Key{{10, 10}, DepthSource::Temporal};
  CHECK(map.estimates().at(key).inv_depth == doctest::Approx(0.5));
}

TEST_CASE("merge_maps keeps both sources and checks anchors") {
  LocalMap s(7), t(7);
  s.insert(make_estimate(0.5, 0.01, DepthSource::Static, 10, 10, 5, 7));
  t.insert(make_estimate(0.6, 0.01, DepthSource::Temporal, 10, 10, 5, 7));
  const auto merged = merge_maps(s, t);
  CHECK(merged.size() == 2);
  CHECK(merged.anchor() == 7);

  LocalMap other(8);
  CHECK_THROWS(merge_maps(s, other));
}

TEST_CASE("reanchor_map: identity is a no-op on inverse depth") {
  const auto K = simple_camera();
  LocalMap map(0);
  map.insert(make_estimate(0.5, 0.01, DepthSource::Static, 100, 80));
  const auto out = reanchor_map(map, RigidTransform::identity(), K, 1);
  REQUIRE(out.size() == 1);
  const auto& e = out.estimates().begin()->second;
  CHECK(e.inv_depth == doctest::Approx(0.5));
  CHECK(e.variance == doctest::Approx(0.01));
  CHECK(e.anchor == 1);
}

TEST_CASE("reanchor_map: forward translation scales inverse depth") {
  const auto K = simple_camera();
  LocalMap map(0);
  // Point on the optical axis at 2 m; moving the camera 1 m forward leaves
  // it at 1 m, inverse depth 1.
  map.insert(make_estimate(0.5, 0.01, DepthSource::Static, 160, 120));
  RigidTransform T_new_old;
  T_new_old.translation = Eigen::Vector3d(0, 0, -1);
  const auto out = reanchor_map(map, T_new_old, K, 1);
  REQUIRE(out.size() == 1);
  const auto& e = out.estimates().begin()->second;
  CHECK(e.inv_depth == doctest::Approx(1.0));
  // d rho_new / d rho_old = (z_old/z_new)^2 ... here 4, variance x16.
  CHECK(e.variance == doctest::Approx(0.16).epsilon(1e-6));
}

TEST_CASE("reanchor_map: variance follows the analytic derivative") {
  const auto K = simple_camera();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ur(0.3, 1.2), u(-0.1, 0.1);
  for (int i = 0; i < 30; ++i) {
    const double rho = ur(rng);
    const Eigen::Vector2d px(120 + 80 * u(rng) * 10, 100 + 40 * u(rng) * 10);
    RigidTransform T;
    T.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(
        0.1 * u(rng) * 10, Eigen::Vector3d(u(rng), u(rng), 1).normalized()));
    T.translation = Eigen::Vector3d(u(rng), u(rng), u(rng));

    LocalMap map(0);
    map.insert(make_estimate(rho, 1e-4, DepthSource::Static, px.x(), px.y()));
    const auto out = reanchor_map(map, T, K, 1);
    if (out.empty()) continue;

    // Finite-difference the old-to-new inverse-depth function.
    const double h = 1e-6;
    const auto rho_new = [&](double r) {
      return 1.0 / T.apply(backproject(px, r, K)).z();
    };
    const double d = (rho_new(rho + h) - rho_new(rho - h)) / (2 * h);
    const double expect = 1e-4 * d * d;
    const auto& e = out.estimates().begin()->second;
    CHECK(e.variance == doctest::Approx(expect).epsilon(1e-3));
  }
}

TEST_CASE("reanchor_map drops points leaving the view") {
  const auto K = simple_camera();
  LocalMap map(0);
  map.insert(make_estimate(1.0, 0.01, DepthSource::Static, 160, 120));
  RigidTransform away;
  away.translation = Eigen::Vector3d(0, 0, -2);  // point ends up behind
  CHECK(reanchor_map(map, away, K, 1).empty());

  RigidTransform aside;
  aside.translation = Eigen::Vector3d(10, 0, 0);  // projects far off-sensor
  CHECK(reanchor_map(map, aside, K, 1).empty());
}

TEST_CASE("rasterize_inv_depth places values at rounded pixels") {
  LocalMap map(0);
  map.insert(make_estimate(0.5, 0.01, DepthSource::Static, 4.3, 2.7));
  const auto img = rasterize_inv_depth(map, 8, 8);
  CHECK(img(3, 4) == doctest::Approx(0.5f));
  CHECK(img(0, 0) == doctest::Approx(0.0f));
}
