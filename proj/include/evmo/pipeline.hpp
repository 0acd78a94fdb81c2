#pragma once

#include <deque>
#include <vector>

#include "evmo/evidential.hpp"
#include "evmo/ground_filter.hpp"
#include "evmo/motion_detector.hpp"
#include "evmo/preprocess.hpp"
#include "evmo/visual_validation.hpp"

namespace evmo {

struct PipelineParams {
  PreprocessParams preprocess;
  GroundParams ground;
  OccupancyParams occupancy;
  DiscretizeParams discretize;
  WindowParams window;
  ValidationParams validation;
  bool use_validation = false;
  unsigned threads = 0;  // 0 = auto
};

struct StageTiming {
  double preprocess_s = 0.0;
  double ground_s = 0.0;
  double detect_s = 0.0;
  double validate_s = 0.0;
  double total_s = 0.0;
};

struct FrameResult {
  int frame_index = 0;
  LabelArray labels;  // one label per point of the original scan
  StageTiming timing;
  DetectStats detect_stats;
  ValidationStats validation_stats;
};

/// Streaming detector: feed frames in order, results for frame k are
/// returned once frame k + k_half has been pushed (or at finish), so labels
/// always see the full available window.
class Pipeline {
 public:
  explicit Pipeline(PipelineParams params, CameraCalib calib = CameraCalib{});

  /// `scan` is sensor-frame; `pose` maps it to the world frame; `image` may
  /// be empty when validation is off.
  std::vector<FrameResult> push_frame(const ScanRecord& scan,
                                      const Pose& pose,
                                      Raster image = Raster{});

  /// Flushes the tail frames (their windows are truncated on the future
  /// side, mirroring the head).
  std::vector<FrameResult> finish();

 private:
  struct FrameState {
    int frame_index = 0;
    Pose pose;
    LabelArray base_labels;          // original size; Dropped/Ground filled
    std::vector<int> retained_orig;  // original index per target point
    ScanRecord targets;              // deduplicated world cloud
    IndexedScan evidence;            // full ground-stripped world cloud
    ScanRecord world_full;           // cropped world cloud incl. ground
    Raster image;
    Raster depth;  // cached lazily by validation
    double depth_d_max = 0.0;
    StageTiming timing;
  };

  FrameResult emit(std::size_t center);
  void prune();

  PipelineParams params_;
  CameraCalib calib_;
  std::deque<FrameState> states_;
  ConvTables tables_;
  int next_push_ = 0;
  int next_emit_ = 0;
};

ConvTables build_pipeline_tables(const PipelineParams& params);

}  // namespace evmo
