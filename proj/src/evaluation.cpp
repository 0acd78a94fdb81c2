#include "evmo/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "evmo/error.hpp"

namespace evmo {

FrameEval make_frame_eval(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  FrameEval e;
  e.tp = tp;
  e.fp = fp;
  e.fn = fn;
  e.precision = tp + fp == 0
                    ? 1.0
                    : static_cast<double>(tp) / static_cast<double>(tp + fp);
  e.recall = tp + fn == 0
                 ? 1.0
                 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return e;
}

Raster labels_to_mask(const LabelArray& labels, const ScanRecord& scan,
                      const CameraFrame& frame, int dilation_radius) {
  if (labels.size() != scan.points.size()) {
    throw ConfigError("labels_to_mask: labels do not match the scan");
  }
  const int w = frame.calib.width;
  const int h = frame.calib.height;
  Raster mask = Raster::filled(w, h, 1, 0.0f);
  const Pose w2c = world_to_camera(frame);
  const int r = dilation_radius;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != PointLabel::Moving) continue;
    const Projection proj =
        project_camera_point(w2c.apply(scan.points[i]), frame.calib);
    if (proj.status != ProjectStatus::Inside) continue;
    const int cx = static_cast<int>(std::floor(proj.u));
    const int cy = static_cast<int>(std::floor(proj.v));
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        if (dx * dx + dy * dy > r * r) continue;
        const int x = cx + dx;
        const int y = cy + dy;
        if (mask.in_bounds(x, y)) mask.at(x, y) = 1.0f;
      }
    }
  }
  return mask;
}

FrameEval prf_frame(const LabelArray& labels, const ScanRecord& scan,
                    const CameraFrame& frame, const Raster& gt_mask) {
  if (labels.size() != scan.points.size()) {
    throw ConfigError("prf_frame: labels do not match the scan");
  }
  if (gt_mask.width != frame.calib.width ||
      gt_mask.height != frame.calib.height) {
    throw ConfigError("prf_frame: mask size does not match the calibration");
  }
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  const Pose w2c = world_to_camera(frame);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Projection proj =
        project_camera_point(w2c.apply(scan.points[i]), frame.calib);
    if (proj.status != ProjectStatus::Inside) continue;
    const int x = static_cast<int>(std::floor(proj.u));
    const int y = static_cast<int>(std::floor(proj.v));
    const bool in_mask = gt_mask.at(x, y) > 0.5f;
    if (labels[i] == PointLabel::Moving) {
      in_mask ? ++tp : ++fp;
    } else if (in_mask) {
      ++fn;
    }
  }
  return make_frame_eval(tp, fp, fn);
}

FrameEval prf_masks(const Raster& predicted, const Raster& gt_mask) {
  if (predicted.width != gt_mask.width ||
      predicted.height != gt_mask.height) {
    throw ConfigError("prf_masks: mask sizes differ");
  }
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  for (std::size_t i = 0; i < predicted.samples.size(); ++i) {
    const bool pred = predicted.samples[i] > 0.5f;
    const bool truth = gt_mask.samples[i] > 0.5f;
    if (pred && truth) {
      ++tp;
    } else if (pred) {
      ++fp;
    } else if (truth) {
      ++fn;
    }
  }
  return make_frame_eval(tp, fp, fn);
}

void write_roc_csv(const std::string& path, const std::vector<RocRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("write_roc_csv: cannot open " + path);
  out << "sigma_r,theta,precision,recall\n";
  char buf[160];
  for (const RocRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f\n", r.sigma_r,
                  r.theta, r.precision, r.recall);
    out << buf;
  }
  if (!out) throw FormatError("write_roc_csv: write failed for " + path);
}

std::vector<ObjectCount> object_counts(const std::vector<ObjectFrame>& frames,
                                       int n_objects,
                                       const ObjectCountParams& params) {
  std::vector<ObjectCount> out(static_cast<std::size_t>(n_objects));
  for (int obj = 0; obj < n_objects; ++obj) {
    out[static_cast<std::size_t>(obj)].object = obj;
  }
  for (const ObjectFrame& f : frames) {
    if (f.labels == nullptr || f.scan == nullptr || f.frame == nullptr ||
        f.object_masks == nullptr) {
      throw ConfigError("object_counts: incomplete frame record");
    }
    if (f.labels->size() != f.scan->points.size()) {
      throw ConfigError("object_counts: labels do not match the scan");
    }
    const Pose w2c = world_to_camera(*f.frame);
    std::vector<std::int64_t> total(static_cast<std::size_t>(n_objects), 0);
    std::vector<std::int64_t> moving(static_cast<std::size_t>(n_objects), 0);
    for (std::size_t i = 0; i < f.labels->size(); ++i) {
      const Projection proj = project_camera_point(
          w2c.apply(f.scan->points[i]), f.frame->calib);
      if (proj.status != ProjectStatus::Inside) continue;
      const int x = static_cast<int>(std::floor(proj.u));
      const int y = static_cast<int>(std::floor(proj.v));
      for (int obj = 0; obj < n_objects; ++obj) {
        const Raster& mask = (*f.object_masks)[static_cast<std::size_t>(obj)];
        if (mask.width == 0 || mask.at(x, y) <= 0.5f) continue;
        ++total[static_cast<std::size_t>(obj)];
        if ((*f.labels)[i] == PointLabel::Moving) {
          ++moving[static_cast<std::size_t>(obj)];
        }
      }
    }
    for (int obj = 0; obj < n_objects; ++obj) {
      const auto o = static_cast<std::size_t>(obj);
      if (total[o] == 0) continue;
      ObjectCount& count = out[o];
      ++count.visible_frames;
      count.total_points += total[o];
      count.moving_points += moving[o];
      const double coverage =
          static_cast<double>(moving[o]) / static_cast<double>(total[o]);
      if (coverage >= params.frame_coverage) ++count.detected_frames;
    }
  }
  for (ObjectCount& count : out) {
    if (count.visible_frames == 0) continue;
    const double fraction = static_cast<double>(count.detected_frames) /
                            static_cast<double>(count.visible_frames);
    count.detected = fraction >= params.frame_fraction;
    count.partially = !count.detected && count.moving_points > 0;
  }
  return out;
}

}  // namespace evmo
