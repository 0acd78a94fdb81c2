#pragma once

#include <vector>

#include "evmo/types.hpp"

namespace evmo {

struct PreprocessParams {
  double crop_tau = 30.0;      // per-axis crop distance, meters
  int dedup_window = 10;       // number of recent clouds compared against
  double dedup_radius = 0.1;   // meters
  bool icp_enabled = false;
  int icp_max_iter = 20;
  double icp_corr_dist = 1.0;  // correspondence cutoff, meters
};

/// A filtered scan plus the original indices of the surviving points.
struct FilterResult {
  ScanRecord scan;
  std::vector<int> kept_indices;
};

/// Rigidly transforms every point and the sensor origin.
ScanRecord apply_pose(const ScanRecord& scan, const Pose& pose);

/// Keeps points within crop_tau of the sensor origin along every axis
/// (boundary inclusive). Meant for sensor-frame scans.
FilterResult crop_far(const ScanRecord& scan, const PreprocessParams& params);

/// Keeps a point iff no point of any recent cloud lies within dedup_radius.
/// All clouds must share one frame.
FilterResult dedup_window(const ScanRecord& scan,
                          const std::vector<const ScanRecord*>& recent,
                          const PreprocessParams& params);

/// Point-to-point ICP aligning source onto target, starting from init.
/// Throws GeometryError when fewer than 3 correspondences remain.
Pose icp_refine(const ScanRecord& source, const ScanRecord& target,
                const Pose& init, const PreprocessParams& params);

}  // namespace evmo
