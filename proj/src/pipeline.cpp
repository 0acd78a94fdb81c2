#include "evmo/pipeline.hpp"

#include <chrono>
#include <utility>

#include "evmo/error.hpp"

namespace evmo {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

ConvTables build_pipeline_tables(const PipelineParams& params) {
  return build_smoothing_tables(params.occupancy);
}

Pipeline::Pipeline(PipelineParams params, CameraCalib calib)
    : params_(std::move(params)), calib_(std::move(calib)) {
  if (!params_.window.is_valid()) {
    throw ConfigError("pipeline: invalid window parameters");
  }
  if (params_.use_validation && calib_.width <= 0) {
    throw ConfigError("pipeline: validation requires camera calibration");
  }
  tables_ = build_smoothing_tables(params_.occupancy);
}

std::vector<FrameResult> Pipeline::push_frame(const ScanRecord& scan,
                                              const Pose& pose,
                                              Raster image) {
  FrameState state;
  state.frame_index = next_push_;
  state.image = std::move(image);

  const auto t0 = Clock::now();
  state.base_labels.assign(scan.points.size(), PointLabel::Dropped);
  const FilterResult cropped = crop_far(scan, params_.preprocess);
  const double crop_s = seconds_since(t0);

  const auto t1 = Clock::now();
  const GroundGrid grid =
      classify_cells(build_height_grid(cropped.scan, params_.ground));
  GroundStripResult stripped = strip_ground(cropped.scan, grid);
  for (std::size_t i = 0; i < stripped.labels.size(); ++i) {
    if (stripped.labels[i] == PointLabel::Ground) {
      state.base_labels[static_cast<std::size_t>(
          cropped.kept_indices[i])] = PointLabel::Ground;
    }
  }
  state.timing.ground_s = seconds_since(t1);

  const auto t2 = Clock::now();
  state.pose = pose;
  if (params_.preprocess.icp_enabled && !states_.empty() &&
      !stripped.scan.empty() && !states_.back().evidence.scan.empty()) {
    state.pose = icp_refine(stripped.scan, states_.back().evidence.scan,
                            pose, params_.preprocess);
  }
  ScanRecord world = apply_pose(stripped.scan, state.pose);
  if (params_.use_validation) {
    state.world_full = apply_pose(cropped.scan, state.pose);
  }

  std::vector<const ScanRecord*> recent;
  const int w = params_.preprocess.dedup_window;
  for (auto it = states_.rbegin();
       it != states_.rend() && static_cast<int>(recent.size()) < w; ++it) {
    recent.push_back(&it->targets);
  }
  FilterResult retained = dedup_window(world, recent, params_.preprocess);
  state.retained_orig.reserve(retained.kept_indices.size());
  for (const int world_idx : retained.kept_indices) {
    state.retained_orig.push_back(
        cropped.kept_indices[static_cast<std::size_t>(
            stripped.kept_indices[static_cast<std::size_t>(world_idx)])]);
  }
  state.targets = std::move(retained.scan);
  state.evidence = index_scan(world);
  state.timing.preprocess_s = crop_s + seconds_since(t2);

  states_.push_back(std::move(state));
  ++next_push_;

  std::vector<FrameResult> out;
  while (next_emit_ + params_.window.k_half < next_push_) {
    const auto center = static_cast<std::size_t>(
        next_emit_ - states_.front().frame_index);
    out.push_back(emit(center));
    ++next_emit_;
    prune();
  }
  return out;
}

std::vector<FrameResult> Pipeline::finish() {
  std::vector<FrameResult> out;
  while (next_emit_ < next_push_) {
    const auto center = static_cast<std::size_t>(
        next_emit_ - states_.front().frame_index);
    out.push_back(emit(center));
    ++next_emit_;
    prune();
  }
  return out;
}

FrameResult Pipeline::emit(std::size_t center) {
  FrameState& state = states_[center];
  FrameResult result;
  result.frame_index = state.frame_index;
  result.timing = state.timing;

  const auto t0 = Clock::now();
  const auto in_window = [&](std::size_t i) {
    const int delta = states_[i].frame_index - state.frame_index;
    return delta >= -params_.window.k_half && delta <= params_.window.k_half;
  };
  ScanWindow window;
  window.targets = &state.targets;
  window.center = &state.evidence;
  window.others.reserve(states_.size() - 1);
  for (std::size_t i = 0; i < states_.size(); ++i) {
    if (i != center && in_window(i)) {
      window.others.push_back(&states_[i].evidence);
    }
  }
  LabelArray target_labels =
      detect_window(window, params_.occupancy, tables_, params_.discretize,
                    params_.window, &result.detect_stats, params_.threads);
  result.timing.detect_s = seconds_since(t0);

  if (params_.use_validation) {
    const auto t1 = Clock::now();
    std::vector<CameraFrame> frames;
    std::vector<std::size_t> frame_state;  // state index per camera frame
    frames.reserve(states_.size());
    std::size_t center_frame = 0;
    for (std::size_t i = 0; i < states_.size(); ++i) {
      if (!in_window(i)) continue;
      FrameState& s = states_[i];
      if (i == center) center_frame = frames.size();
      CameraFrame f;
      f.calib = calib_;
      f.image = s.image;
      f.pose = s.pose;
      f.cloud = &s.world_full;
      f.depth = s.depth;
      f.d_max = s.depth_d_max;
      frames.push_back(std::move(f));
      frame_state.push_back(i);
    }
    target_labels =
        validate_candidates(target_labels, state.targets, frames,
                            center_frame, params_.validation,
                            &result.validation_stats);
    for (std::size_t fi = 0; fi < frames.size(); ++fi) {
      FrameState& s = states_[frame_state[fi]];
      if (frames[fi].has_depth() && s.depth.width == 0) {
        s.depth = std::move(frames[fi].depth);
        s.depth_d_max = frames[fi].d_max;
      }
    }
    result.timing.validate_s = seconds_since(t1);
  }

  result.labels = state.base_labels;
  for (std::size_t r = 0; r < target_labels.size(); ++r) {
    result.labels[static_cast<std::size_t>(state.retained_orig[r])] =
        target_labels[r];
  }
  result.timing.total_s = result.timing.preprocess_s +
                          result.timing.ground_s + result.timing.detect_s +
                          result.timing.validate_s;
  return result;
}

void Pipeline::prune() {
  const int keep_window = next_emit_ - params_.window.k_half;
  const int keep_dedup = next_push_ - params_.preprocess.dedup_window;
  const int keep_from = std::min(keep_window, keep_dedup);
  while (!states_.empty() && states_.front().frame_index < keep_from) {
    states_.pop_front();
  }
}

}  // namespace evmo
