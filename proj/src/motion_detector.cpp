#include "evmo/motion_detector.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <utility>

#include "evmo/detail/parallel.hpp"
#include "evmo/detail/rng.hpp"
#include "evmo/error.hpp"

namespace evmo {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLambdaFallback = 0.0035;

std::int64_t grid_key(const AngularGrid& g, int ia, int ie) {
  return static_cast<std::int64_t>(ie) * g.n_az + ia;
}

int az_bin(const AngularGrid& g, double az) {
  int ia = static_cast<int>(std::floor((az + kPi) / g.bin));
  return std::clamp(ia, 0, g.n_az - 1);
}

int elev_bin(const AngularGrid& g, double elev) {
  int ie = static_cast<int>(std::floor((elev + 0.5 * kPi) / g.bin));
  return std::clamp(ie, 0, g.n_elev - 1);
}

// Candidate beams are ordered by (angle, index); that order is also the
// fusion order, which pins down the floating-point result.
using Candidate = std::pair<double, std::int32_t>;

void gather_candidates(const IndexedScan& scan, const Vec3& unit_dir,
                       double cone, std::vector<Candidate>& out) {
  out.clear();
  const AngularGrid& g = scan.grid;
  if (g.cells.empty()) return;
  const double elev = std::asin(std::clamp(unit_dir.z(), -1.0, 1.0));
  const double az = std::atan2(unit_dir.y(), unit_dir.x());
  const int ie_lo = elev_bin(g, elev - cone);
  const int ie_hi = elev_bin(g, elev + cone);
  const int ia0 = az_bin(g, az);
  for (int ie = ie_lo; ie <= ie_hi; ++ie) {
    // The azimuth span a cone needs widens toward the poles with the
    // steepest elevation inside the row.
    const double e_lo = std::abs(static_cast<double>(ie) * g.bin - 0.5 * kPi);
    const double e_hi =
        std::abs(static_cast<double>(ie + 1) * g.bin - 0.5 * kPi);
    const double steepest = std::min(std::max(e_lo, e_hi), 0.5 * kPi);
    const double cos_min = std::cos(steepest);
    bool full_row = cos_min < 1e-6;
    int daz = 0;
    if (!full_row) {
      const double width = cone / cos_min;
      if (width >= kPi) {
        full_row = true;
      } else {
        daz = static_cast<int>(std::floor(width / g.bin)) + 1;
        if (2 * daz + 1 >= g.n_az) full_row = true;
      }
    }
    const int a_begin = full_row ? 0 : ia0 - daz;
    const int a_end = full_row ? g.n_az - 1 : ia0 + daz;
    for (int a = a_begin; a <= a_end; ++a) {
      int ia = a % g.n_az;
      if (ia < 0) ia += g.n_az;
      const auto it = g.cells.find(grid_key(g, ia, ie));
      if (it == g.cells.end()) continue;
      for (const std::int32_t idx : it->second) {
        const double cosang =
            std::clamp(unit_dir.dot(scan.beam_dirs[idx]), -1.0, 1.0);
        const double angle = std::acos(cosang);
        if (angle <= cone + 1e-12) out.emplace_back(angle, idx);
      }
    }
  }
  std::sort(out.begin(), out.end());
}

std::vector<Candidate>& candidate_scratch() {
  thread_local std::vector<Candidate> scratch;
  return scratch;
}

std::uint64_t signed_salt(std::int32_t v) {
  return static_cast<std::uint64_t>(static_cast<std::int64_t>(v));
}

}  // namespace

IndexedScan index_scan(const ScanRecord& scan) {
  IndexedScan out;
  out.scan = scan;
  out.origin = scan.sensor_origin;
  const std::size_t n = scan.points.size();
  out.beam_dirs.assign(n, Vec3::Zero());
  out.beam_ranges.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 d = scan.points[i] - out.origin;
    const double r = d.norm();
    out.beam_ranges[i] = r;
    if (r > 0.0) out.beam_dirs[i] = d / r;
    out.far_norm = std::max(out.far_norm, r);
  }

  std::vector<double> gaps;
  gaps.reserve(n);
  for (std::size_t i = 1; i < n; ++i) {
    if (out.beam_ranges[i - 1] <= 0.0 || out.beam_ranges[i] <= 0.0) continue;
    const double cosang =
        std::clamp(out.beam_dirs[i - 1].dot(out.beam_dirs[i]), -1.0, 1.0);
    const double gap = std::acos(cosang);
    if (gap > 0.0) gaps.push_back(gap);
  }
  if (gaps.empty()) {
    out.lambda_theta = kLambdaFallback;
  } else {
    auto mid = gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2);
    std::nth_element(gaps.begin(), mid, gaps.end());
    out.lambda_theta = *mid;
  }

  AngularGrid& g = out.grid;
  g.bin = std::clamp(3.0 * out.lambda_theta, 1e-3, 0.25);
  g.n_az = static_cast<int>(std::ceil(2.0 * kPi / g.bin));
  g.n_elev = static_cast<int>(std::ceil(kPi / g.bin));
  for (std::size_t i = 0; i < n; ++i) {
    if (out.beam_ranges[i] <= 0.0) continue;
    const Vec3& u = out.beam_dirs[i];
    const double b_elev = std::asin(std::clamp(u.z(), -1.0, 1.0));
    const double b_az = std::atan2(u.y(), u.x());
    const std::int64_t key = grid_key(g, az_bin(g, b_az), elev_bin(g, b_elev));
    g.cells[key].push_back(static_cast<std::int32_t>(i));
  }
  return out;
}

std::size_t OctreeIndex::total_points() const {
  std::size_t total = 0;
  for (const OctreeLeaf& leaf : leaves) total += leaf.points.size();
  return total;
}

OctreeIndex build_octree(const ScanRecord& scan, double resolution) {
  if (resolution <= 0.0) {
    throw ConfigError("build_octree: resolution must be positive");
  }
  OctreeIndex out;
  out.resolution = resolution;
  if (scan.points.empty()) return out;

  Vec3 mn = scan.points.front();
  for (const Vec3& p : scan.points) mn = mn.cwiseMin(p);
  out.min_corner = mn;

  constexpr std::int64_t kMaxCells = std::int64_t{1} << 21;
  std::unordered_map<std::uint64_t, OctreeLeaf> buckets;
  buckets.reserve(scan.points.size() / 4 + 1);
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    const Vec3 rel = (scan.points[i] - mn) / resolution;
    const auto kx = static_cast<std::int64_t>(std::floor(rel.x()));
    const auto ky = static_cast<std::int64_t>(std::floor(rel.y()));
    const auto kz = static_cast<std::int64_t>(std::floor(rel.z()));
    if (kx >= kMaxCells || ky >= kMaxCells || kz >= kMaxCells) {
      throw GeometryError("build_octree: cloud extent exceeds index range");
    }
    const std::uint64_t key = (static_cast<std::uint64_t>(kx) << 42) |
                              (static_cast<std::uint64_t>(ky) << 21) |
                              static_cast<std::uint64_t>(kz);
    OctreeLeaf& leaf = buckets[key];
    if (leaf.points.empty()) {
      leaf.kx = static_cast<std::int32_t>(kx);
      leaf.ky = static_cast<std::int32_t>(ky);
      leaf.kz = static_cast<std::int32_t>(kz);
    }
    leaf.points.push_back(static_cast<std::int32_t>(i));
  }

  out.leaves.reserve(buckets.size());
  for (auto& [key, leaf] : buckets) out.leaves.push_back(std::move(leaf));
  std::sort(out.leaves.begin(), out.leaves.end(),
            [](const OctreeLeaf& a, const OctreeLeaf& b) {
              return std::tie(a.kx, a.ky, a.kz) < std::tie(b.kx, b.ky, b.kz);
            });
  return out;
}

void DetectStats::accumulate(const DetectStats& other) {
  points_classified += other.points_classified;
  leaves += other.leaves;
  voted_leaves += other.voted_leaves;
  beams_fused += other.beams_fused;
  total_conflicts += other.total_conflicts;
}

std::vector<BeamGeometry> candidate_beams(const Vec3& point,
                                          const IndexedScan& scan,
                                          const WindowParams& wparams) {
  std::vector<BeamGeometry> beams;
  const Vec3 d = point - scan.origin;
  const double dn = d.norm();
  if (dn <= 0.0) return beams;
  const double cone = wparams.neighbor_angle_mult * scan.lambda_theta;
  std::vector<Candidate>& scratch = candidate_scratch();
  gather_candidates(scan, d / dn, cone, scratch);
  const auto cap = static_cast<std::size_t>(wparams.neighbor_cap);
  if (scratch.size() > cap) scratch.resize(cap);
  beams.reserve(scratch.size());
  for (const auto& [angle, idx] : scratch) {
    beams.push_back({scan.origin, scan.scan.points[idx]});
  }
  return beams;
}

Belief point_occupancy_in_scan(const Vec3& point, const IndexedScan& scan,
                               const OccupancyParams& oparams,
                               const ConvTables& tables,
                               const WindowParams& wparams,
                               DetectStats* stats) {
  Belief acc = Belief::vacuous();
  const Vec3 d = point - scan.origin;
  const double dn = d.norm();
  if (dn <= 0.0) return acc;
  const double cone = wparams.neighbor_angle_mult * scan.lambda_theta;
  std::vector<Candidate>& scratch = candidate_scratch();
  gather_candidates(scan, d / dn, cone, scratch);
  const std::size_t cap =
      std::min(scratch.size(), static_cast<std::size_t>(wparams.neighbor_cap));
  for (std::size_t c = 0; c < cap; ++c) {
    const auto [angle, idx] = scratch[c];
    BeamProjection proj;
    proj.theta = angle;
    proj.range_residual = scan.beam_ranges[idx] - d.dot(scan.beam_dirs[idx]);
    bool total_conflict = false;
    acc = fuse(acc, smoothed_projection_belief(proj, oparams, tables),
               &total_conflict);
    if (stats) {
      ++stats->beams_fused;
      if (total_conflict) ++stats->total_conflicts;
    }
  }
  return acc;
}

bool classify_point(const Vec3& point, const ScanWindow& window,
                    const OccupancyParams& oparams, const ConvTables& tables,
                    const DiscretizeParams& dparams,
                    const WindowParams& wparams, DetectStats* stats) {
  if (stats) ++stats->points_classified;
  if (window.others.empty()) return false;

  if (wparams.mode == WindowParams::Mode::Discretized) {
    Belief acc = Belief::vacuous();
    for (const IndexedScan* other : window.others) {
      if (other->far_norm <= 0.0) continue;
      const Belief occ =
          point_occupancy_in_scan(point, *other, oparams, tables, wparams,
                                  stats);
      const double l =
          depth_weight_l(point, other->far_norm, other->origin, dparams);
      bool total_conflict = false;
      acc = fuse(acc, discretize(occ, l), &total_conflict);
      if (stats && total_conflict) ++stats->total_conflicts;
    }
    return acc.e > acc.o && acc.e > acc.u;
  }

  const Belief center_occ =
      window.center ? point_occupancy_in_scan(point, *window.center, oparams,
                                              tables, wparams, stats)
                    : Belief::vacuous();
  int votes = 0;
  int pairs = 0;
  for (const IndexedScan* other : window.others) {
    if (other->far_norm <= 0.0) continue;
    const Belief occ =
        point_occupancy_in_scan(point, *other, oparams, tables, wparams,
                                stats);
    ++pairs;
    if (compare(center_occ, occ).moving) ++votes;
  }
  return votes * 2 > pairs;
}

std::size_t leaf_sample_count(std::size_t leaf_size, double fraction) {
  if (leaf_size == 0) return 0;
  auto tested = static_cast<std::size_t>(
      std::ceil(static_cast<double>(leaf_size) * fraction));
  return std::clamp<std::size_t>(tested, 1, leaf_size);
}

std::size_t leaf_vote_threshold(std::size_t tested, double majority) {
  auto need = static_cast<std::size_t>(
      std::ceil(static_cast<double>(tested) * majority));
  return std::max<std::size_t>(need, 1);
}

void vote_leaf(const OctreeLeaf& leaf, const WindowParams& wparams,
               const std::function<bool(std::int32_t)>& is_moving,
               LabelArray& labels, DetectStats* stats) {
  const std::size_t n = leaf.points.size();
  if (n == 0) return;
  if (stats) ++stats->leaves;

  const bool exhaustive = wparams.leaf_sample_fraction >= 1.0;
  if (exhaustive || n < static_cast<std::size_t>(wparams.tau_np)) {
    for (const std::int32_t idx : leaf.points) {
      labels[static_cast<std::size_t>(idx)] =
          is_moving(idx) ? PointLabel::Moving : PointLabel::Static;
    }
    return;
  }

  if (stats) ++stats->voted_leaves;
  const std::size_t tested = leaf_sample_count(n, wparams.leaf_sample_fraction);
  std::vector<std::int32_t> pool(leaf.points);
  detail::Rng rng = detail::Rng(wparams.seed)
                        .fork(signed_salt(leaf.kx))
                        .fork(signed_salt(leaf.ky))
                        .fork(signed_salt(leaf.kz));
  std::size_t dynamic = 0;
  for (std::size_t i = 0; i < tested; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.next_below(
                static_cast<std::uint64_t>(n - i)));
    std::swap(pool[i], pool[j]);
    if (is_moving(pool[i])) ++dynamic;
  }
  const bool leaf_moving =
      dynamic >= leaf_vote_threshold(tested, wparams.leaf_majority);
  const PointLabel verdict =
      leaf_moving ? PointLabel::Moving : PointLabel::Static;
  for (const std::int32_t idx : leaf.points) {
    labels[static_cast<std::size_t>(idx)] = verdict;
  }
}

LabelArray detect_window(const ScanWindow& window,
                         const OccupancyParams& oparams,
                         const ConvTables& tables,
                         const DiscretizeParams& dparams,
                         const WindowParams& wparams, DetectStats* stats,
                         unsigned threads) {
  if (window.targets == nullptr) {
    throw ConfigError("detect_window: window has no target scan");
  }
  const ScanRecord& targets = *window.targets;
  LabelArray labels(targets.points.size(), PointLabel::Static);
  if (targets.points.empty()) return labels;

  const OctreeIndex octree = build_octree(targets, wparams.octree_resolution);
  std::vector<DetectStats> leaf_stats(stats != nullptr ? octree.leaves.size()
                                                       : 0);
  detail::parallel_for(
      octree.leaves.size(), threads, [&](std::size_t li) {
        const OctreeLeaf& leaf = octree.leaves[li];
        DetectStats* leaf_out = stats != nullptr ? &leaf_stats[li] : nullptr;
        const auto classify = [&](std::int32_t idx) {
          return classify_point(targets.points[static_cast<std::size_t>(idx)],
                                window, oparams, tables, dparams, wparams,
                                leaf_out);
        };
        vote_leaf(leaf, wparams, classify, labels, leaf_out);
      });
  if (stats != nullptr) {
    for (const DetectStats& ls : leaf_stats) stats->accumulate(ls);
  }
  return labels;
}

}  // namespace evmo
