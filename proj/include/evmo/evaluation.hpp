#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evmo/types.hpp"
#include "evmo/visual_validation.hpp"

namespace evmo {

struct FrameEval {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  double precision = 1.0;  // 1 when tp + fp == 0
  double recall = 1.0;     // 1 when tp + fn == 0
};

FrameEval make_frame_eval(std::int64_t tp, std::int64_t fp, std::int64_t fn);

struct SweepSpec {
  double sigma_r_lo = 0.1;
  double sigma_r_hi = 0.45;
  double theta_lo = 0.0035;
  double theta_hi = 0.0088;
  int steps = 3;  // per axis

  bool is_valid() const {
    return sigma_r_lo < sigma_r_hi && theta_lo < theta_hi && steps >= 2;
  }
  double sigma_r_at(int i) const {
    return sigma_r_lo + (sigma_r_hi - sigma_r_lo) * i / (steps - 1);
  }
  double theta_at(int j) const {
    return theta_lo + (theta_hi - theta_lo) * j / (steps - 1);
  }
};

/// Binary raster of Moving points projected into the frame and dilated by a
/// disk of the given radius.
Raster labels_to_mask(const LabelArray& labels, const ScanRecord& scan,
                      const CameraFrame& frame, int dilation_radius);

/// Point-level counting against a ground-truth mask: an in-frame
/// Moving-labeled point inside the mask is a true positive, outside a false
/// positive; any other in-frame point inside the mask is a false negative.
FrameEval prf_frame(const LabelArray& labels, const ScanRecord& scan,
                    const CameraFrame& frame, const Raster& gt_mask);

/// Pixel-level counts of a predicted mask against a ground-truth mask.
FrameEval prf_masks(const Raster& predicted, const Raster& gt_mask);

struct RocRow {
  double sigma_r = 0.0;
  double theta = 0.0;
  double precision = 1.0;
  double recall = 1.0;
};

/// Runs `run_cell(sigma_r, theta)` for every grid cell of the sweep, in row
/// order (sigma_r outer, theta inner), and collects the rows.
template <typename RunCell>
std::vector<RocRow> roc_sweep(const SweepSpec& spec, RunCell&& run_cell) {
  if (!spec.is_valid()) {
    throw ConfigError("roc_sweep: invalid sweep spec");
  }
  std::vector<RocRow> rows;
  rows.reserve(static_cast<std::size_t>(spec.steps) * spec.steps);
  for (int i = 0; i < spec.steps; ++i) {
    for (int j = 0; j < spec.steps; ++j) {
      RocRow row;
      row.sigma_r = spec.sigma_r_at(i);
      row.theta = spec.theta_at(j);
      const FrameEval eval = run_cell(row.sigma_r, row.theta);
      row.precision = eval.precision;
      row.recall = eval.recall;
      rows.push_back(row);
    }
  }
  return rows;
}

void write_roc_csv(const std::string& path, const std::vector<RocRow>& rows);

struct ObjectCount {
  int object = 0;
  bool detected = false;
  bool partially = false;
  int visible_frames = 0;
  int detected_frames = 0;
  std::int64_t moving_points = 0;
  std::int64_t total_points = 0;
};

struct ObjectCountParams {
  double frame_coverage = 0.5;  // moving fraction for a frame to count
  double frame_fraction = 0.5;  // detected-frame fraction for D
};

/// Object-level detection counts. For each object, a per-frame mask
/// sequence; frames[i] pairs labels with the scan and camera of frame i.
struct ObjectFrame {
  const LabelArray* labels = nullptr;
  const ScanRecord* scan = nullptr;
  const CameraFrame* frame = nullptr;
  const std::vector<Raster>* object_masks = nullptr;  // one per object
};

std::vector<ObjectCount> object_counts(const std::vector<ObjectFrame>& frames,
                                       int n_objects,
                                       const ObjectCountParams& params);

}  // namespace evmo
