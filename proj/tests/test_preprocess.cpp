#include <doctest.h>

#include <cmath>

#include "evmo/detail/rng.hpp"
#include "evmo/error.hpp"
#include "evmo/preprocess.hpp"

using namespace evmo;

namespace {

ScanRecord make_scan(const std::vector<Vec3>& points,
                     const Vec3& origin = Vec3::Zero()) {
  ScanRecord scan;
  scan.points = points;
  scan.intensities.assign(points.size(), 0.5f);
  scan.sensor_origin = origin;
  return scan;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("apply_pose moves points and origin rigidly") {
  Pose pose;
  pose.rotation << 0, -1, 0, 1, 0, 0, 0, 0, 1;  // 90 degree yaw
  pose.translation = Vec3(10, 0, 1);

  const ScanRecord scan = make_scan({Vec3(1, 0, 0)}, Vec3(0, 0, 0.5));
  const ScanRecord out = apply_pose(scan, pose);
  CHECK((out.points[0] - Vec3(10, 1, 1)).norm() < 1e-15);
  CHECK((out.sensor_origin - Vec3(10, 0, 1.5)).norm() < 1e-15);
  CHECK(out.intensities == scan.intensities);
  CHECK(out.frame_index == scan.frame_index);

  // Composing with the inverse is the identity.
  const ScanRecord back = apply_pose(out, pose.inverse());
  CHECK((back.points[0] - scan.points[0]).norm() < 1e-12);
}

TEST_CASE("crop_far keeps the per-axis box, boundary inclusive") {
  PreprocessParams params;
  params.crop_tau = 2.0;
  const Vec3 origin(100, 0, 0);
  const ScanRecord scan = make_scan(
      {
          Vec3(100, 0, 0),        // at the sensor
          Vec3(102, 0, 0),        // exactly on the boundary
          Vec3(102.001, 0, 0),    // just outside
          Vec3(101, 1.5, -1.0),   // inside on all axes
          Vec3(101, 2.5, 0),      // outside on y only
          Vec3(99, -2, 2),        // corner, inclusive
      },
      origin);

  const FilterResult out = crop_far(scan, params);
  CHECK(out.kept_indices == std::vector<int>{0, 1, 3, 5});
  CHECK(out.scan.points.size() == 4);
  CHECK(out.scan.sensor_origin == origin);
  // Point-to-index correspondence survives filtering.
  CHECK(out.scan.points[2] == scan.points[3]);
}

TEST_CASE("dedup keeps only points far from every recent cloud") {
  PreprocessParams params;
  params.dedup_radius = 0.5;

  const ScanRecord a = make_scan({Vec3(0, 0, 0), Vec3(10, 0, 0)});
  const ScanRecord b = make_scan({Vec3(5, 5, 0)});
  const ScanRecord scan = make_scan({
      Vec3(0.1, 0, 0),   // near a[0]
      Vec3(3, 0, 0),     // free
      Vec3(5, 5.49, 0),  // near b[0]
      Vec3(5, 5.51, 0),  // just beyond the radius
      Vec3(10.5, 0, 0),  // exactly on the boundary: dropped
  });

  const FilterResult out =
      dedup_window(scan, {&a, &b}, params);
  CHECK(out.kept_indices == std::vector<int>{1, 3});

  SUBCASE("no recent clouds keeps everything") {
    const FilterResult all = dedup_window(scan, {}, params);
    CHECK(all.kept_indices.size() == scan.points.size());
  }
}

TEST_CASE("icp recovers a small rigid offset") {
  detail::Rng rng(99);
  ScanRecord target;
  for (int i = 0; i < 400; ++i) {
    // Two perpendicular walls and a floor patch give the problem full rank.
    const double u = rng.next_double() * 4.0;
    const double v = rng.next_double() * 2.0;
    if (i % 3 == 0) {
      target.points.emplace_back(u, 0.0, v);
    } else if (i % 3 == 1) {
      target.points.emplace_back(0.0, u, v);
    } else {
      target.points.emplace_back(u, v, 0.0);
    }
  }
  target.intensities.assign(target.points.size(), 0.0f);

  Pose offset;
  const double ang = 0.02;
  offset.rotation << std::cos(ang), -std::sin(ang), 0, std::sin(ang),
      std::cos(ang), 0, 0, 0, 1;
  offset.translation = Vec3(0.05, -0.03, 0.02);
  const ScanRecord source = apply_pose(target, offset.inverse());

  PreprocessParams params;
  const Pose refined = icp_refine(source, target, Pose{}, params);
  // The recovered pose must map source back onto target.
  double worst = 0.0;
  for (std::size_t i = 0; i < source.points.size(); ++i) {
    worst = std::max(worst, (refined.apply(source.points[i]) -
                             target.points[i])
                                .norm());
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("icp with no overlap throws") {
  PreprocessParams params;
  params.icp_corr_dist = 0.5;
  const ScanRecord source = make_scan({Vec3(0, 0, 0), Vec3(1, 0, 0)});
  const ScanRecord target = make_scan({Vec3(100, 100, 100)});
  CHECK_THROWS_AS(icp_refine(source, target, Pose{}, params), GeometryError);
}

}  // TEST_SUITE
