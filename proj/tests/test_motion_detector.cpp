#include <doctest.h>

#include <cmath>
#include <vector>

#include "evmo/detail/rng.hpp"
#include "evmo/motion_detector.hpp"
#include "evmo/preprocess.hpp"
#include "evmo/synth_oracle.hpp"
#include "support/oracles.hpp"

using namespace evmo;

namespace {

ScanRecord ring_scan(const std::vector<double>& azimuths, double range) {
  ScanRecord scan;
  for (double az : azimuths) {
    scan.points.emplace_back(range * std::cos(az), range * std::sin(az), 0.0);
  }
  scan.intensities.assign(scan.points.size(), 0.0f);
  return scan;
}

/// Four rings of jittered azimuth sweeps with a handful of degenerate beams,
/// dense enough that the candidate cone stays well under the cap.
ScanRecord structured_scan(std::uint64_t seed) {
  detail::Rng rng(seed);
  ScanRecord scan;
  const double elevs[4] = {-0.2, -0.1, 0.0, 0.1};
  for (double elev : elevs) {
    for (int i = 0; i < 200; ++i) {
      const double az =
          i * (2.0 * M_PI / 200) + 0.003 * (rng.next_double() - 0.5);
      const double r = 2.0 + 18.0 * rng.next_double();
      scan.points.emplace_back(r * std::cos(elev) * std::cos(az),
                               r * std::cos(elev) * std::sin(az),
                               r * std::sin(elev));
      if (i % 67 == 13) scan.points.emplace_back(0.0, 0.0, 0.0);
    }
  }
  scan.intensities.assign(scan.points.size(), 0.0f);
  return scan;
}

/// A five-frame window around a static sensor: flat ground, one parked box,
/// one crossing box and a backdrop wall that returns the grazing beams.
struct WindowFixture {
  Sequence seq;
  std::vector<ScanRecord> world;
  std::vector<IndexedScan> indexed;
  std::vector<oracle::FlatScan> flats;
  ScanWindow window;
  oracle::FlatScan* center_flat = nullptr;
  std::vector<oracle::FlatScan> other_flats;

  WindowFixture() {
    SceneSpec spec;
    spec.frames = 5;
    spec.noise_sigma = 0.01;
    spec.with_camera = false;
    spec.camera = make_default_camera(64, 48, 60.0);
    spec.sensor_path = make_linear_path(Vec3(0.0, 0.0, 1.3), Vec3::Zero(), 5);
    spec.lidar.azimuth_res = 0.02;
    spec.lidar.elevations = {-0.30, -0.18, -0.10, -0.04, 0.0, 0.04};
    spec.lidar.max_range = 14.0;
    BoxSpec parked;
    parked.center = Vec3(4.0, -2.0, 0.5);
    parked.size = Vec3(1.2, 1.2, 1.0);
    BoxSpec mover;
    mover.center = Vec3(6.0, -1.6, 0.9);
    mover.size = Vec3(0.8, 0.8, 1.8);
    mover.velocity = Vec3(0.0, 0.8, 0.0);
    BoxSpec wall;
    wall.center = Vec3(9.0, 0.0, 1.25);
    wall.size = Vec3(0.4, 16.0, 2.5);
    spec.boxes = {parked, mover, wall};
    REQUIRE(spec.is_valid());

    seq = generate_sequence(spec, 7);
    world.reserve(5);
    indexed.reserve(5);
    flats.reserve(5);
    for (int f = 0; f < 5; ++f) {
      world.push_back(apply_pose(seq.frames[f].scan, seq.frames[f].pose));
      indexed.push_back(index_scan(world.back()));
    }
    for (int f = 0; f < 5; ++f) flats.push_back(oracle::flatten(world[f]));

    window.targets = &world[2];
    window.center = &indexed[2];
    for (int f = 0; f < 5; ++f) {
      if (f == 2) continue;
      window.others.push_back(&indexed[f]);
      other_flats.push_back(flats[f]);
    }
    center_flat = &flats[2];
  }
};

std::size_t count_label(const LabelArray& labels, PointLabel value) {
  std::size_t n = 0;
  for (PointLabel l : labels) {
    if (l == value) ++n;
  }
  return n;
}

}  // namespace

TEST_SUITE("motion_detector") {

TEST_CASE("index_scan geometry and angular resolution") {
  SUBCASE("unit directions, ranges and far norm") {
    ScanRecord scan = ring_scan({0.0, 0.5, 1.0}, 5.0);
    scan.points.push_back(Vec3(0.0, 0.0, 8.0));
    scan.intensities.push_back(0.0f);
    scan.sensor_origin = Vec3::Zero();
    const IndexedScan idx = index_scan(scan);
    REQUIRE(idx.beam_dirs.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(idx.beam_dirs[i].norm() == doctest::Approx(1.0).epsilon(1e-12));
      const Vec3 rebuilt = idx.origin + idx.beam_ranges[i] * idx.beam_dirs[i];
      CHECK((rebuilt - scan.points[i]).norm() < 1e-12);
    }
    CHECK(idx.far_norm == doctest::Approx(8.0));
  }
  SUBCASE("beams start at a displaced sensor origin") {
    ScanRecord scan;
    scan.points = {Vec3(13.0, 4.0, 2.0)};
    scan.intensities = {0.0f};
    scan.sensor_origin = Vec3(10.0, 0.0, 2.0);
    const IndexedScan idx = index_scan(scan);
    CHECK(idx.beam_ranges[0] == doctest::Approx(5.0));
    CHECK((idx.beam_dirs[0] - Vec3(0.6, 0.8, 0.0)).norm() < 1e-12);
    CHECK(idx.far_norm == doctest::Approx(5.0));
  }
  SUBCASE("lambda is the median positive adjacent gap") {
    const IndexedScan idx =
        index_scan(ring_scan({0.0, 0.01, 0.03, 0.06, 0.10}, 5.0));
    CHECK(idx.lambda_theta == doctest::Approx(0.03).epsilon(1e-9));
    CHECK(idx.grid.bin == doctest::Approx(0.09).epsilon(1e-9));
  }
  SUBCASE("gaps touching a degenerate beam are skipped") {
    ScanRecord scan = ring_scan({0.0, 0.01, 0.03}, 5.0);
    scan.points.push_back(Vec3::Zero());
    scan.intensities.push_back(0.0f);
    ScanRecord tail = ring_scan({0.06, 0.10}, 5.0);
    for (const Vec3& p : tail.points) {
      scan.points.push_back(p);
      scan.intensities.push_back(0.0f);
    }
    const IndexedScan idx = index_scan(scan);
    CHECK(idx.lambda_theta == doctest::Approx(0.02).epsilon(1e-9));
  }
  SUBCASE("single beam falls back to the default resolution") {
    const IndexedScan idx = index_scan(ring_scan({0.3}, 4.0));
    CHECK(idx.lambda_theta == doctest::Approx(0.0035));
  }
  SUBCASE("grid covers every non-degenerate beam once") {
    const ScanRecord scan = structured_scan(3);
    const IndexedScan idx = index_scan(scan);
    std::size_t binned = 0;
    for (const auto& [key, cell] : idx.grid.cells) binned += cell.size();
    std::size_t nonzero = 0;
    for (const Vec3& p : scan.points) {
      if (p.norm() > 0.0) ++nonzero;
    }
    CHECK(binned == nonzero);
  }
}

TEST_CASE("build_octree buckets by floor against the min corner") {
  ScanRecord scan;
  scan.points = {Vec3(0.0, 0.0, 0.0), Vec3(0.29, 0.0, 0.0),
                 Vec3(0.3, 0.0, 0.0), Vec3(1.0, 2.0, 3.1),
                 Vec3(-0.1, 0.0, 0.0)};
  scan.intensities.assign(5, 0.0f);

  const OctreeIndex tree = build_octree(scan, 0.3);
  CHECK((tree.min_corner - Vec3(-0.1, 0.0, 0.0)).norm() == 0.0);
  REQUIRE(tree.leaves.size() == 3);
  CHECK(tree.total_points() == 5);
  CHECK(tree.leaves[0].kx == 0);
  CHECK(tree.leaves[0].points == std::vector<std::int32_t>{0, 4});
  CHECK(tree.leaves[1].kx == 1);
  CHECK(tree.leaves[1].points == std::vector<std::int32_t>{1, 2});
  CHECK(tree.leaves[2].kx == 3);
  CHECK(tree.leaves[2].ky == 6);
  CHECK(tree.leaves[2].kz == 10);

  CHECK(build_octree(ScanRecord{}, 0.3).leaves.empty());
  CHECK_THROWS_AS(build_octree(scan, 0.0), ConfigError);
}

TEST_CASE("sampling and vote arithmetic") {
  CHECK(leaf_sample_count(0, 0.5) == 0);
  CHECK(leaf_sample_count(5, 1e-9) == 1);
  CHECK(leaf_sample_count(5, 1.0) == 5);
  CHECK(leaf_sample_count(12, 1.0 / 6.0) == 2);
  CHECK(leaf_sample_count(13, 1.0 / 6.0) == 3);

  CHECK(leaf_vote_threshold(4, 0.5) == 2);
  CHECK(leaf_vote_threshold(5, 0.5) == 3);
  CHECK(leaf_vote_threshold(3, 1.0) == 3);
  CHECK(leaf_vote_threshold(3, 0.01) == 1);
  CHECK(leaf_vote_threshold(1, 0.5) == 1);
}

TEST_CASE("vote_leaf") {
  OctreeLeaf leaf;
  leaf.kx = 1;
  leaf.ky = 2;
  leaf.kz = 3;
  for (std::int32_t i = 0; i < 10; ++i) leaf.points.push_back(i);

  WindowParams wparams;
  wparams.leaf_sample_fraction = 0.3;  // tests ceil(10 * 0.3) = 3 points
  wparams.leaf_majority = 0.5;
  wparams.seed = 42;

  SUBCASE("a dynamic sample extends Moving to the whole leaf") {
    LabelArray labels(12, PointLabel::Ground);
    DetectStats stats;
    std::size_t calls = 0;
    vote_leaf(
        leaf, wparams,
        [&](std::int32_t) {
          ++calls;
          return true;
        },
        labels, &stats);
    CHECK(calls == 3);
    CHECK(stats.voted_leaves == 1);
    for (std::int32_t i = 0; i < 10; ++i) {
      CHECK(labels[static_cast<std::size_t>(i)] == PointLabel::Moving);
    }
    CHECK(labels[10] == PointLabel::Ground);  // untouched outside the leaf
  }
  SUBCASE("a static sample extends Static") {
    LabelArray labels(12, PointLabel::Ground);
    vote_leaf(
        leaf, wparams, [](std::int32_t) { return false; }, labels, nullptr);
    for (std::int32_t i = 0; i < 10; ++i) {
      CHECK(labels[static_cast<std::size_t>(i)] == PointLabel::Static);
    }
  }
  SUBCASE("the sampled subset is a function of the seed and leaf key") {
    std::vector<std::int32_t> first, second;
    LabelArray labels(12, PointLabel::Ground);
    vote_leaf(
        leaf, wparams,
        [&](std::int32_t idx) {
          first.push_back(idx);
          return false;
        },
        labels, nullptr);
    vote_leaf(
        leaf, wparams,
        [&](std::int32_t idx) {
          second.push_back(idx);
          return false;
        },
        labels, nullptr);
    CHECK(first == second);
    REQUIRE(first.size() == 3);

    // A different leaf key draws a different subset under the same seed.
    OctreeLeaf shifted = leaf;
    shifted.kz = 4;
    std::vector<std::int32_t> third;
    vote_leaf(
        shifted, wparams,
        [&](std::int32_t idx) {
          third.push_back(idx);
          return false;
        },
        labels, nullptr);
    CHECK(third != first);
  }
  SUBCASE("full fraction classifies each point individually") {
    wparams.leaf_sample_fraction = 1.0;
    LabelArray labels(12, PointLabel::Ground);
    DetectStats stats;
    vote_leaf(
        leaf, wparams, [](std::int32_t idx) { return idx % 2 == 0; }, labels,
        &stats);
    CHECK(stats.voted_leaves == 0);
    for (std::int32_t i = 0; i < 10; ++i) {
      CHECK(labels[static_cast<std::size_t>(i)] ==
            (i % 2 == 0 ? PointLabel::Moving : PointLabel::Static));
    }
  }
  SUBCASE("leaves under tau_np skip sampling") {
    OctreeLeaf small;
    small.points = {3, 5, 7};
    LabelArray labels(12, PointLabel::Ground);
    DetectStats stats;
    vote_leaf(
        small, wparams, [](std::int32_t idx) { return idx == 5; }, labels,
        &stats);
    CHECK(stats.voted_leaves == 0);
    CHECK(labels[3] == PointLabel::Static);
    CHECK(labels[5] == PointLabel::Moving);
    CHECK(labels[7] == PointLabel::Static);
  }
}

TEST_CASE("candidate_beams matches the brute-force cone search") {
  const ScanRecord scan = structured_scan(11);
  const IndexedScan idx = index_scan(scan);
  const oracle::FlatScan flat = oracle::flatten(scan);
  REQUIRE(idx.lambda_theta == doctest::Approx(flat.lambda_theta));

  detail::Rng rng(17);
  WindowParams wparams;
  SUBCASE("default cap") {}
  SUBCASE("tight cap") { wparams.neighbor_cap = 4; }

  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t b = static_cast<std::size_t>(
        rng.next_below(static_cast<std::uint64_t>(scan.points.size())));
    if (scan.points[b].norm() == 0.0) continue;
    Vec3 dir = scan.points[b].normalized();
    dir += 0.02 * Vec3(rng.next_double() - 0.5, rng.next_double() - 0.5,
                       rng.next_double() - 0.5);
    dir.normalize();
    const Vec3 query = (1.0 + 24.0 * rng.next_double()) * dir;

    const auto got = candidate_beams(query, idx, wparams);
    const auto want = oracle::cone_beams(query, flat, wparams);
    CAPTURE(trial);
    REQUIRE(got.size() == want.size());
    for (std::size_t k = 0; k < got.size(); ++k) {
      const Vec3& expect = scan.points[static_cast<std::size_t>(want[k].second)];
      CHECK((got[k].endpoint - expect).norm() == 0.0);
      CHECK((got[k].origin - scan.sensor_origin).norm() == 0.0);
    }
  }
}

TEST_CASE("window classification agrees with the brute-force oracle") {
  const WindowFixture fx;
  const OccupancyParams oparams;
  const ConvTables tables = build_smoothing_tables(oparams);
  const DiscretizeParams dparams;
  WindowParams wparams;
  wparams.seed = 9001;
  wparams.leaf_sample_fraction = 1.0;

  const LabelArray& gt = fx.seq.frames[2].gt_labels;
  REQUIRE(gt.size() == fx.world[2].points.size());
  REQUIRE(count_label(gt, PointLabel::Moving) > 20);

  SUBCASE("occupancy beliefs are identical per scan") {
    detail::Rng rng(23);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t i = static_cast<std::size_t>(rng.next_below(
          static_cast<std::uint64_t>(fx.world[2].points.size())));
      const Vec3& p = fx.world[2].points[i];
      const Belief got = point_occupancy_in_scan(p, fx.indexed[0], oparams,
                                                 tables, wparams);
      const Belief want =
          oracle::occupancy(p, fx.flats[0], oparams, tables, wparams);
      CHECK(got.e == want.e);
      CHECK(got.o == want.o);
      CHECK(got.u == want.u);
    }
  }

  SUBCASE("exhaustive labels are identical in both modes") {
    for (const auto mode : {WindowParams::Mode::Discretized,
                            WindowParams::Mode::PairwiseConflict}) {
      wparams.mode = mode;
      DetectStats stats;
      const LabelArray got = detect_window(fx.window, oparams, tables,
                                           dparams, wparams, &stats);
      const LabelArray want =
          oracle::label_scan(*fx.window.targets, fx.center_flat,
                             fx.other_flats, oparams, tables, dparams,
                             wparams);
      CHECK(got == want);
      CHECK(stats.points_classified == fx.world[2].points.size());
      CHECK(stats.voted_leaves == 0);
      CHECK(stats.leaves ==
            build_octree(fx.world[2], wparams.octree_resolution)
                .leaves.size());

      const std::size_t moving = count_label(got, PointLabel::Moving);
      CHECK(moving > 0);
      CHECK(moving < fx.world[2].points.size() / 5);

      oracle::PointPrf prf;
      prf.accumulate(got, gt);
      CHECK(prf.recall() >= 0.3);
    }
  }

  SUBCASE("subsampled voting is deterministic across runs and threads") {
    wparams.leaf_sample_fraction = 1.0 / 6.0;
    wparams.tau_np = 2;
    DetectStats s1, s2;
    const LabelArray a =
        detect_window(fx.window, oparams, tables, dparams, wparams, &s1, 1);
    const LabelArray b =
        detect_window(fx.window, oparams, tables, dparams, wparams, &s2, 4);
    CHECK(a == b);
    CHECK(s1.points_classified == s2.points_classified);
    CHECK(s1.voted_leaves == s2.voted_leaves);
    CHECK(s1.beams_fused == s2.beams_fused);
    CHECK(s1.voted_leaves > 0);
    CHECK(s1.points_classified < fx.world[2].points.size());

    const LabelArray c =
        detect_window(fx.window, oparams, tables, dparams, wparams);
    CHECK(a == c);

    // Sampling must stay close to the exhaustive verdicts.
    wparams.leaf_sample_fraction = 1.0;
    const LabelArray full =
        detect_window(fx.window, oparams, tables, dparams, wparams);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < full.size(); ++i) {
      if (full[i] == a[i]) ++agree;
    }
    CHECK(static_cast<double>(agree) / static_cast<double>(full.size()) >=
          0.85);
  }

  SUBCASE("no surrounding scans means nothing moves") {
    ScanWindow lone;
    lone.targets = fx.window.targets;
    lone.center = fx.window.center;
    const LabelArray got =
        detect_window(lone, oparams, tables, dparams, wparams);
    CHECK(count_label(got, PointLabel::Moving) == 0);
  }

  SUBCASE("a point outside every cone keeps the vacuous belief") {
    const Belief b = point_occupancy_in_scan(Vec3(0.0, 0.0, 40.0),
                                             fx.indexed[0], oparams, tables,
                                             wparams);
    CHECK(b.e == 0.0);
    CHECK(b.o == 0.0);
    CHECK(b.u == 1.0);
  }
}

}  // TEST_SUITE
