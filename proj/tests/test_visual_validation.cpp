#include <doctest.h>

#include <cmath>

#include "evmo/synth_oracle.hpp"
#include "evmo/visual_validation.hpp"

using namespace evmo;

namespace {

/// Sawtooth gradient along one axis: textured, deterministic, and
/// uncorrelated with the same pattern along the other axis.
Raster sawtooth(int w, int h, int channels, bool along_x) {
  Raster r = Raster::filled(w, h, channels, 0.0f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int s = along_x ? x : y;
      for (int c = 0; c < channels; ++c) {
        r.at(x, y, c) = static_cast<float>((s % 8) * 0.125);
      }
    }
  }
  return r;
}

ScanRecord wall_cloud(double x, double half_span, double step) {
  ScanRecord cloud;
  for (double y = -half_span; y <= half_span; y += step) {
    for (double z = -half_span; z <= half_span; z += step) {
      cloud.points.emplace_back(x, y, z);
    }
  }
  cloud.intensities.assign(cloud.points.size(), 0.5f);
  return cloud;
}

CameraFrame make_frame(const Raster& image, const Vec3& position,
                       const ScanRecord* cloud = nullptr) {
  CameraFrame frame;
  frame.calib = make_default_camera(32, 32, 30.0);
  frame.image = image;
  frame.pose.translation = position;
  frame.cloud = cloud;
  return frame;
}

}  // namespace

TEST_SUITE("visual_validation") {

TEST_CASE("projection into the pinhole model") {
  const CameraCalib calib = make_default_camera(64, 48, 100.0);

  SUBCASE("camera-frame arithmetic") {
    const Projection p = project_camera_point(Vec3(0.1, -0.05, 2.0), calib);
    CHECK(p.status == ProjectStatus::Inside);
    CHECK(p.u == doctest::Approx(37.0));
    CHECK(p.v == doctest::Approx(21.5));
    CHECK(p.distance == doctest::Approx(Vec3(0.1, -0.05, 2.0).norm()));
  }
  SUBCASE("points behind the camera are flagged") {
    CHECK(project_camera_point(Vec3(0.0, 0.0, -1.0), calib).status ==
          ProjectStatus::Behind);
    CHECK(project_camera_point(Vec3(0.0, 0.0, 0.0), calib).status ==
          ProjectStatus::Behind);
  }
  SUBCASE("image bounds use the containing pixel") {
    // u = 64 falls outside a 64-wide image, u just under stays inside.
    CHECK(project_camera_point(Vec3(0.32, 0.0, 1.0), calib).status ==
          ProjectStatus::Outside);
    CHECK(project_camera_point(Vec3(0.3199, 0.0, 1.0), calib).status ==
          ProjectStatus::Inside);
    CHECK(project_camera_point(Vec3(-0.33, 0.0, 1.0), calib).status ==
          ProjectStatus::Outside);
  }
  SUBCASE("world route composes mount and sensor pose") {
    CameraFrame frame;
    frame.calib = calib;
    frame.pose.translation = Vec3(1.0, 2.0, 3.0);
    const Pose w2c = world_to_camera(frame);
    // A point straight ahead of the sensor lands on the optical axis.
    const Vec3 cam = w2c.apply(Vec3(1.0 + 4.0, 2.0, 3.0));
    CHECK((cam - Vec3(0.0, 0.0, 4.0)).norm() < 1e-12);
    const Projection p = project_to_camera(Vec3(5.0, 2.0, 3.0), frame);
    CHECK(p.status == ProjectStatus::Inside);
    CHECK(p.u == doctest::Approx(32.0));
    CHECK(p.v == doctest::Approx(24.0));
    CHECK(p.distance == doctest::Approx(4.0));
  }
}

TEST_CASE("patch side shrinks with distance and stays odd") {
  ValidationParams params;  // patch_height_h = 0.15
  CHECK(patch_side(5.0, 400.0, params) == 13);
  CHECK(patch_side(20.0, 400.0, params) == 3);
  CHECK(patch_side(60.0, 400.0, params) == 3);  // floor, then the minimum
  for (double d = 0.5; d < 30.0; d += 0.7) {
    CHECK(patch_side(d, 400.0, params) % 2 == 1);
  }
  CHECK_THROWS_AS(patch_side(0.0, 400.0, params), GeometryError);
}

TEST_CASE("extract_patch clamps at the image edge") {
  Raster img = Raster::filled(5, 4, 1, 0.0f);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 5; ++x) {
      img.at(x, y) = static_cast<float>(x + 10 * y);
    }
  }
  SUBCASE("interior") {
    const Raster p = extract_patch(img, 2.4, 1.7, 3);
    REQUIRE(p.width == 3);
    for (int dy = 0; dy < 3; ++dy) {
      for (int dx = 0; dx < 3; ++dx) {
        CHECK(p.at(dx, dy) == static_cast<float>((dx + 1) + 10 * dy));
      }
    }
  }
  SUBCASE("corner duplicates the edge rows") {
    const Raster p = extract_patch(img, 0.0, 0.0, 3);
    CHECK(p.at(0, 0) == 0.0f);   // clamped from (-1, -1)
    CHECK(p.at(1, 0) == 0.0f);   // clamped row -1
    CHECK(p.at(0, 1) == 0.0f);   // clamped col -1
    CHECK(p.at(2, 2) == 11.0f);  // true (1, 1)
  }
  CHECK_THROWS_AS(extract_patch(Raster{}, 0.0, 0.0, 3), GeometryError);
}

TEST_CASE("resize_bilinear") {
  Raster p = Raster::filled(2, 2, 1, 0.0f);
  p.at(0, 0) = 0.0f;
  p.at(1, 0) = 1.0f;
  p.at(0, 1) = 0.5f;
  p.at(1, 1) = 0.25f;

  SUBCASE("same size is the identity") {
    const Raster r = resize_bilinear(p, 2);
    CHECK(r.samples == p.samples);
  }
  SUBCASE("upsampling interpolates and clamps at corners") {
    const Raster r = resize_bilinear(p, 4);
    REQUIRE(r.width == 4);
    CHECK(r.at(0, 0) == 0.0f);
    CHECK(r.at(3, 0) == 1.0f);
    CHECK(r.at(0, 3) == 0.5f);
    CHECK(r.at(3, 3) == 0.25f);
    // Sample at (1,1): source coords 0.25 between all four corners.
    CHECK(r.at(1, 1) ==
          doctest::Approx(0.75 * 0.25 + 0.25 * (0.75 * 0.5 + 0.25 * 0.25)));
  }
  SUBCASE("channels survive") {
    const Raster rgb = sawtooth(6, 6, 3, true);
    const Raster r = resize_bilinear(rgb, 3);
    CHECK(r.channels == 3);
    CHECK(r.width == 3);
  }
}

TEST_CASE("uniformity uses gray standard deviation") {
  ValidationParams params;
  CHECK(is_uniform(Raster::filled(5, 5, 1, 0.37f), params));
  CHECK(is_uniform(Raster::filled(5, 5, 3, 0.9f), params));
  CHECK_FALSE(is_uniform(sawtooth(5, 5, 1, true), params));

  // Channels that differ but average to the same gray count as uniform.
  Raster tinted = Raster::filled(4, 4, 3, 0.0f);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      tinted.at(x, y, 0) = 0.1f;
      tinted.at(x, y, 1) = 0.2f;
      tinted.at(x, y, 2) = 0.3f;
    }
  }
  CHECK(is_uniform(tinted, params));
}

TEST_CASE("ncc dissimilarity") {
  ValidationParams params;
  const Raster base_x = sawtooth(16, 16, 1, true);
  const Raster base_y = sawtooth(16, 16, 1, false);

  SUBCASE("identical patches score zero") {
    const Raster a = extract_patch(base_x, 7.0, 7.0, 5);
    const auto d = ncc_dissimilarity(a, a, params);
    REQUIRE(d.size() == 1);
    REQUIRE(d[0].has_value());
    CHECK(std::abs(*d[0]) < 1e-9);
  }
  SUBCASE("a shifted copy is recovered within the search radius") {
    const Raster a = extract_patch(base_x, 7.0, 7.0, 5);
    const Raster b = extract_patch(base_x, 9.0, 7.0, 5);  // 2 px to the right
    const auto d = ncc_dissimilarity(a, b, params);
    REQUIRE(d[0].has_value());
    CHECK(*d[0] < 1e-9);
  }
  SUBCASE("orthogonal gradients stay dissimilar at every shift") {
    const Raster a = extract_patch(base_x, 7.0, 7.0, 5);
    const Raster b = extract_patch(base_y, 7.0, 7.0, 5);
    const auto d = ncc_dissimilarity(a, b, params);
    REQUIRE(d[0].has_value());
    CHECK(*d[0] >= params.ncc_tau);
    CHECK(*d[0] == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("a flat channel yields no verdict") {
    const Raster flat = Raster::filled(5, 5, 1, 0.5f);
    const Raster a = extract_patch(base_x, 7.0, 7.0, 5);
    const auto d = ncc_dissimilarity(a, flat, params);
    REQUIRE(d.size() == 1);
    CHECK_FALSE(d[0].has_value());
  }
  SUBCASE("shape mismatch throws") {
    const Raster a = extract_patch(base_x, 7.0, 7.0, 5);
    const Raster b = extract_patch(base_x, 7.0, 7.0, 3);
    CHECK_THROWS_AS(ncc_dissimilarity(a, b, params), GeometryError);
  }
}

TEST_CASE("ssd dissimilarity") {
  const Raster a = Raster::filled(2, 2, 1, 0.0f);
  const Raster b = Raster::filled(2, 2, 1, 0.5f);
  CHECK(ssd_dissimilarity(a, a) == 0.0);
  CHECK(ssd_dissimilarity(a, b) == doctest::Approx(0.25));
  const Raster c = Raster::filled(3, 3, 1, 0.0f);
  CHECK_THROWS_AS(ssd_dissimilarity(a, c), GeometryError);
}

TEST_CASE("depth map construction") {
  ValidationParams params;
  CameraFrame frame = make_frame(Raster::filled(21, 21, 3, 0.5f),
                                 Vec3::Zero());
  frame.calib = make_default_camera(21, 21, 20.0);

  SUBCASE("per-pixel minimum, normalization and disk dilation") {
    ScanRecord cloud;
    cloud.points = {Vec3(2.0, 0.0, 0.0), Vec3(5.0, 0.0, 0.0)};
    cloud.intensities = {0.5f, 0.5f};
    const DepthMap dm = build_depthmap(cloud, frame, params);
    CHECK(dm.d_max == doctest::Approx(5.0));
    // Both points land in the center pixel; the nearer one wins.
    CHECK(dm.raster.at(10, 10) == doctest::Approx(0.4));
    // The disk of radius 4 spreads the value; beyond it stays unobserved.
    CHECK(dm.raster.at(14, 10) == doctest::Approx(0.4));
    CHECK(dm.raster.at(12, 13) == doctest::Approx(0.4));  // 2^2 + 3^2 < 16
    CHECK(dm.raster.at(15, 10) == 1.0f);
    CHECK(dm.raster.at(0, 0) == 1.0f);
  }
  SUBCASE("zero dilation radius keeps single pixels") {
    params.dilation_radius = 0;
    ScanRecord cloud;
    // Second point: camera frame (-2, 0, 4), pixel (0, 10), the far norm.
    cloud.points = {Vec3(2.0, 0.0, 0.0), Vec3(4.0, 2.0, 0.0)};
    cloud.intensities = {0.5f, 0.5f};
    const DepthMap dm = build_depthmap(cloud, frame, params);
    CHECK(dm.d_max == doctest::Approx(std::sqrt(20.0)));
    CHECK(dm.raster.at(10, 10) ==
          doctest::Approx(2.0 / std::sqrt(20.0)));
    CHECK(dm.raster.at(11, 10) == 1.0f);  // no dilation spill
    CHECK(dm.raster.at(9, 10) == 1.0f);
  }
  SUBCASE("clouds that miss the image throw") {
    ScanRecord cloud;
    cloud.points = {Vec3(-3.0, 0.0, 0.0)};  // behind the camera
    cloud.intensities = {0.5f};
    CHECK_THROWS_AS(build_depthmap(cloud, frame, params), GeometryError);
    CHECK_THROWS_AS(build_depthmap(ScanRecord{}, frame, params),
                    GeometryError);
    CameraFrame no_size = frame;
    no_size.calib.width = 0;
    CHECK_THROWS_AS(build_depthmap(wall_cloud(2.0, 1.0, 0.25), no_size,
                                   params),
                    GeometryError);
  }
}

TEST_CASE("depth correction shifts by camera travel over d_max") {
  CameraFrame frame_l = make_frame(Raster{}, Vec3::Zero());
  frame_l.depth = Raster::filled(4, 4, 1, 0.5f);
  frame_l.depth.at(3, 3) = 0.95f;
  frame_l.d_max = 4.0;
  CameraFrame frame_k = make_frame(Raster{}, Vec3(0.8, 0.0, 0.0));

  const Raster corrected = correct_depthmap(frame_l, frame_k);
  CHECK(corrected.at(0, 0) == doctest::Approx(0.7));
  CHECK(corrected.at(3, 3) == 1.0f);  // clamped

  CameraFrame no_depth = make_frame(Raster{}, Vec3::Zero());
  CHECK_THROWS_AS(correct_depthmap(no_depth, frame_k), GeometryError);
}

TEST_CASE("validate_candidates") {
  ValidationParams params;
  const Raster tex_x = sawtooth(32, 32, 3, true);
  const Raster tex_y = sawtooth(32, 32, 3, false);
  const Raster flat = Raster::filled(32, 32, 3, 0.5f);

  ScanRecord targets;
  targets.points = {Vec3(2.0, 0.0, 0.0)};
  targets.intensities = {0.5f};
  const LabelArray moving = {PointLabel::Moving};

  SUBCASE("consistent appearance demotes to Static") {
    std::vector<CameraFrame> frames = {make_frame(tex_x, Vec3::Zero()),
                                       make_frame(tex_x, Vec3::Zero())};
    ValidationStats stats;
    const LabelArray out =
        validate_candidates(moving, targets, frames, 0, params, &stats);
    CHECK(out[0] == PointLabel::Static);
    CHECK(stats.candidates == 1);
    CHECK(stats.demoted == 1);
    CHECK(stats.color_pairs == 1);
    CHECK(stats.depth_pairs == 0);
  }
  SUBCASE("changed appearance keeps the point Moving") {
    std::vector<CameraFrame> frames = {make_frame(tex_x, Vec3::Zero()),
                                       make_frame(tex_y, Vec3::Zero())};
    ValidationStats stats;
    const LabelArray out =
        validate_candidates(moving, targets, frames, 0, params, &stats);
    CHECK(out[0] == PointLabel::Moving);
    CHECK(stats.demoted == 0);
    CHECK(stats.color_pairs == 1);
  }
  SUBCASE("uniform patches fall back to matching depth") {
    const ScanRecord wall = wall_cloud(2.0, 1.5, 0.25);
    std::vector<CameraFrame> frames = {
        make_frame(flat, Vec3::Zero(), &wall),
        make_frame(flat, Vec3::Zero(), &wall)};
    ValidationStats stats;
    const LabelArray out =
        validate_candidates(moving, targets, frames, 0, params, &stats);
    CHECK(out[0] == PointLabel::Static);
    CHECK(stats.demoted == 1);
    CHECK(stats.depth_pairs == 1);
    CHECK(stats.color_pairs == 0);
    CHECK(frames[0].has_depth());  // built lazily on demand
    CHECK(frames[1].has_depth());
  }
  SUBCASE("depth disagreement keeps the point Moving") {
    // Same angular footprint, different depth: the far wall normalizes near
    // 1.0 while the near wall sits around 0.82, well past ssd_tau.
    const ScanRecord near_wall = wall_cloud(2.0, 1.5, 0.25);
    const ScanRecord far_wall = wall_cloud(8.0, 1.5, 0.25);
    std::vector<CameraFrame> frames = {
        make_frame(flat, Vec3::Zero(), &far_wall),
        make_frame(flat, Vec3::Zero(), &near_wall)};
    ValidationStats stats;
    const LabelArray out =
        validate_candidates(moving, targets, frames, 0, params, &stats);
    CHECK(out[0] == PointLabel::Moving);
    CHECK(stats.demoted == 0);
    CHECK(stats.depth_pairs == 1);
  }
  SUBCASE("non-moving labels pass through untouched") {
    const LabelArray others = {PointLabel::Ground};
    std::vector<CameraFrame> frames = {make_frame(tex_x, Vec3::Zero()),
                                       make_frame(tex_y, Vec3::Zero())};
    ValidationStats stats;
    const LabelArray out =
        validate_candidates(others, targets, frames, 0, params, &stats);
    CHECK(out == others);
    CHECK(stats.candidates == 0);
  }
  SUBCASE("candidates without visual evidence stay Moving") {
    ScanRecord behind;
    behind.points = {Vec3(-5.0, 0.0, 0.0)};
    behind.intensities = {0.5f};
    std::vector<CameraFrame> frames = {make_frame(tex_x, Vec3::Zero()),
                                       make_frame(tex_x, Vec3::Zero())};
    ValidationStats stats;
    const LabelArray out =
        validate_candidates(moving, behind, frames, 0, params, &stats);
    CHECK(out[0] == PointLabel::Moving);
    CHECK(stats.unusable == 1);

    // A center-only window has no pair to compare against.
    std::vector<CameraFrame> lone = {make_frame(tex_x, Vec3::Zero())};
    ValidationStats lone_stats;
    const LabelArray kept =
        validate_candidates(moving, targets, lone, 0, params, &lone_stats);
    CHECK(kept[0] == PointLabel::Moving);
    CHECK(lone_stats.unusable == 1);
  }
  SUBCASE("a center frame without an image is a no-op") {
    std::vector<CameraFrame> frames = {make_frame(Raster{}, Vec3::Zero()),
                                       make_frame(tex_x, Vec3::Zero())};
    const LabelArray out =
        validate_candidates(moving, targets, frames, 0, params);
    CHECK(out == moving);
  }
  SUBCASE("argument validation") {
    std::vector<CameraFrame> frames = {make_frame(tex_x, Vec3::Zero())};
    const LabelArray wrong_size = {PointLabel::Moving, PointLabel::Moving};
    CHECK_THROWS_AS(
        validate_candidates(wrong_size, targets, frames, 0, params),
        ConfigError);
    CHECK_THROWS_AS(validate_candidates(moving, targets, frames, 7, params),
                    ConfigError);
  }
}

}  // TEST_SUITE
