#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "evmo/evidential.hpp"
#include "evmo/types.hpp"

namespace evmo {

struct WindowParams {
  enum class Mode { Discretized, PairwiseConflict };

  int k_half = 10;
  double octree_resolution = 0.3;
  double leaf_sample_fraction = 1.0 / 6.0;
  double leaf_majority = 0.5;
  int tau_np = 6;
  double neighbor_angle_mult = 3.0;
  int neighbor_cap = 32;
  std::uint64_t seed = 0;
  Mode mode = Mode::Discretized;

  bool is_valid() const {
    return k_half >= 1 && octree_resolution > 0.0 &&
           leaf_sample_fraction > 0.0 && leaf_sample_fraction <= 1.0 &&
           leaf_majority > 0.0 && leaf_majority <= 1.0 && tau_np >= 1 &&
           neighbor_angle_mult > 0.0 && neighbor_cap >= 1;
  }
};

/// Directional index over a scan's beams: azimuth/elevation bins of unit
/// directions from the sensor origin. Beams of zero length are excluded.
struct AngularGrid {
  double bin = 0.0105;  // radians
  int n_az = 1;
  int n_elev = 1;
  std::unordered_map<std::int64_t, std::vector<std::int32_t>> cells;
};

/// A world-frame scan prepared for occupancy queries: unit beam directions,
/// beam ranges, the farthest-point norm and the directional index.
struct IndexedScan {
  ScanRecord scan;
  Vec3 origin = Vec3::Zero();
  std::vector<Vec3> beam_dirs;     // unit vectors, zero for degenerate beams
  std::vector<double> beam_ranges; // meters from origin
  double far_norm = 0.0;
  double lambda_theta = 0.0;       // median angular gap between adjacent beams
  AngularGrid grid;
};

IndexedScan index_scan(const ScanRecord& scan);

/// The sliding classification window. `targets` holds the points that
/// receive labels (the deduplicated center cloud in the pipeline); `center`
/// carries the full center-scan evidence used by pairwise comparison.
struct ScanWindow {
  const ScanRecord* targets = nullptr;
  const IndexedScan* center = nullptr;
  std::vector<const IndexedScan*> others;

  double lambda_theta() const { return center ? center->lambda_theta : 0.0; }
};

struct OctreeLeaf {
  std::int32_t kx = 0;
  std::int32_t ky = 0;
  std::int32_t kz = 0;
  std::vector<std::int32_t> points;
};

struct OctreeIndex {
  Vec3 min_corner = Vec3::Zero();
  double resolution = 0.3;
  std::vector<OctreeLeaf> leaves;  // sorted by (kx, ky, kz)

  std::size_t total_points() const;
};

OctreeIndex build_octree(const ScanRecord& scan, double resolution);

struct DetectStats {
  std::uint64_t points_classified = 0;  // individual point classifications
  std::uint64_t leaves = 0;
  std::uint64_t voted_leaves = 0;       // leaves labeled through sampling
  std::uint64_t beams_fused = 0;
  std::uint64_t total_conflicts = 0;    // fusions that hit full conflict

  void accumulate(const DetectStats& other);
};

/// Beams of `scan` whose direction lies within neighbor_angle_mult times the
/// scan's angular resolution of the ray origin->point, nearest-angle first,
/// at most neighbor_cap entries.
std::vector<BeamGeometry> candidate_beams(const Vec3& point,
                                          const IndexedScan& scan,
                                          const WindowParams& wparams);

/// Fused occupancy of `point` under all candidate beams of one scan.
/// No candidates yields the vacuous belief.
Belief point_occupancy_in_scan(const Vec3& point, const IndexedScan& scan,
                               const OccupancyParams& oparams,
                               const ConvTables& tables,
                               const WindowParams& wparams,
                               DetectStats* stats = nullptr);

/// True when the window evidence classifies `point` as moving.
bool classify_point(const Vec3& point, const ScanWindow& window,
                    const OccupancyParams& oparams, const ConvTables& tables,
                    const DiscretizeParams& dparams,
                    const WindowParams& wparams, DetectStats* stats = nullptr);

/// Number of points sampled from a leaf of the given size.
std::size_t leaf_sample_count(std::size_t leaf_size, double fraction);

/// Dynamic votes required to extend Moving to the whole leaf.
std::size_t leaf_vote_threshold(std::size_t tested, double majority);

/// Applies the subsampled-vote rule to one leaf, writing Static/Moving into
/// `labels` at the leaf's point indices. `is_moving` performs one point
/// classification; small leaves (< tau_np) and fraction >= 1 classify every
/// point individually.
void vote_leaf(const OctreeLeaf& leaf, const WindowParams& wparams,
               const std::function<bool(std::int32_t)>& is_moving,
               LabelArray& labels, DetectStats* stats = nullptr);

/// Labels every point of window.targets as Static or Moving. Deterministic
/// for a given seed, independent of thread count (0 = auto).
LabelArray detect_window(const ScanWindow& window,
                         const OccupancyParams& oparams,
                         const ConvTables& tables,
                         const DiscretizeParams& dparams,
                         const WindowParams& wparams,
                         DetectStats* stats = nullptr, unsigned threads = 0);

}  // namespace evmo
