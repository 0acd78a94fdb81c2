#include "evmo/visual_validation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "evmo/error.hpp"

namespace evmo {

namespace {

constexpr double kVarEps = 1e-12;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

int clampi(int v, int lo, int hi) { return std::clamp(v, lo, hi); }

double gray_at(const Raster& r, int x, int y) {
  double acc = 0.0;
  for (int c = 0; c < r.channels; ++c) acc += r.at(x, y, c);
  return acc / r.channels;
}

/// Population mean and variance of one channel over the whole patch.
void channel_stats(const Raster& r, int c, double& mean, double& var) {
  double sum = 0.0;
  double sq = 0.0;
  const auto n = static_cast<double>(r.pixel_count());
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      const double v = r.at(x, y, c);
      sum += v;
      sq += v * v;
    }
  }
  mean = sum / n;
  var = std::max(0.0, sq / n - mean * mean);
}

}  // namespace

Pose world_to_camera(const CameraFrame& frame) {
  return frame.calib.lidar_to_camera.compose(frame.pose.inverse());
}

Projection project_to_camera(const Vec3& point_world,
                             const CameraFrame& frame) {
  const Pose w2c = world_to_camera(frame);
  return project_camera_point(w2c.apply(point_world), frame.calib);
}

Projection project_camera_point(const Vec3& p_cam, const CameraCalib& calib) {
  Projection out;
  out.distance = p_cam.norm();
  const Eigen::Vector4d hom(p_cam.x(), p_cam.y(), p_cam.z(), 1.0);
  const Vec3 pix = calib.projection * hom;
  if (pix.z() <= 0.0) {
    out.status = ProjectStatus::Behind;
    return out;
  }
  out.u = pix.x() / pix.z();
  out.v = pix.y() / pix.z();
  const int ix = static_cast<int>(std::floor(out.u));
  const int iy = static_cast<int>(std::floor(out.v));
  out.status = (ix >= 0 && ix < calib.width && iy >= 0 && iy < calib.height)
                   ? ProjectStatus::Inside
                   : ProjectStatus::Outside;
  return out;
}

int patch_side(double distance, double f_xy, const ValidationParams& params) {
  if (distance <= 0.0) {
    throw GeometryError("patch_side: non-positive distance");
  }
  const double raw = params.patch_height_h / distance * f_xy;
  const int side = 2 * static_cast<int>(std::floor(raw * 0.5)) + 1;
  return std::max(side, 3);
}

Raster extract_patch(const Raster& raster, double u, double v, int side) {
  if (raster.width <= 0 || raster.height <= 0) {
    throw GeometryError("extract_patch: empty raster");
  }
  const int cx = static_cast<int>(std::floor(u));
  const int cy = static_cast<int>(std::floor(v));
  const int half = side / 2;
  Raster out = Raster::filled(side, side, raster.channels, 0.0f);
  for (int dy = -half; dy <= half; ++dy) {
    const int sy = clampi(cy + dy, 0, raster.height - 1);
    for (int dx = -half; dx <= half; ++dx) {
      const int sx = clampi(cx + dx, 0, raster.width - 1);
      for (int c = 0; c < raster.channels; ++c) {
        out.at(dx + half, dy + half, c) = raster.at(sx, sy, c);
      }
    }
  }
  return out;
}

Raster resize_bilinear(const Raster& patch, int new_side) {
  if (patch.width == new_side && patch.height == new_side) return patch;
  Raster out = Raster::filled(new_side, new_side, patch.channels, 0.0f);
  const double sx = static_cast<double>(patch.width) / new_side;
  const double sy = static_cast<double>(patch.height) / new_side;
  for (int y = 0; y < new_side; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = clampi(static_cast<int>(std::floor(fy)), 0,
                          patch.height - 1);
    const int y1 = clampi(y0 + 1, 0, patch.height - 1);
    const double wy = std::clamp(fy - y0, 0.0, 1.0);
    for (int x = 0; x < new_side; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = clampi(static_cast<int>(std::floor(fx)), 0,
                            patch.width - 1);
      const int x1 = clampi(x0 + 1, 0, patch.width - 1);
      const double wx = std::clamp(fx - x0, 0.0, 1.0);
      for (int c = 0; c < patch.channels; ++c) {
        const double top = patch.at(x0, y0, c) * (1.0 - wx) +
                           patch.at(x1, y0, c) * wx;
        const double bot = patch.at(x0, y1, c) * (1.0 - wx) +
                           patch.at(x1, y1, c) * wx;
        out.at(x, y, c) = static_cast<float>(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return out;
}

bool is_uniform(const Raster& patch, const ValidationParams& params) {
  const auto n = static_cast<double>(patch.pixel_count());
  if (n <= 0.0) return true;
  double sum = 0.0;
  double sq = 0.0;
  for (int y = 0; y < patch.height; ++y) {
    for (int x = 0; x < patch.width; ++x) {
      const double g = gray_at(patch, x, y);
      sum += g;
      sq += g * g;
    }
  }
  const double mean = sum / n;
  const double var = std::max(0.0, sq / n - mean * mean);
  return std::sqrt(var) <= params.uniform_std;
}

std::vector<std::optional<double>> ncc_dissimilarity(
    const Raster& a, const Raster& b, const ValidationParams& params) {
  if (a.width != b.width || a.height != b.height ||
      a.channels != b.channels) {
    throw GeometryError("ncc_dissimilarity: patch shapes differ");
  }
  std::vector<std::optional<double>> out(
      static_cast<std::size_t>(a.channels));
  const int r = params.ncc_search_radius;
  for (int c = 0; c < a.channels; ++c) {
    double mean_a = 0.0;
    double var_a = 0.0;
    double mean_b = 0.0;
    double var_b = 0.0;
    channel_stats(a, c, mean_a, var_a);
    channel_stats(b, c, mean_b, var_b);
    if (var_a < kVarEps || var_b < kVarEps) continue;  // stays nullopt

    double best = -std::numeric_limits<double>::infinity();
    for (int dv = -r; dv <= r; ++dv) {
      for (int du = -r; du <= r; ++du) {
        // overlap window of a(x, y) against b(x + du, y + dv)
        const int x_lo = std::max(0, -du);
        const int x_hi = std::min(a.width, b.width - du);
        const int y_lo = std::max(0, -dv);
        const int y_hi = std::min(a.height, b.height - dv);
        const int nx = x_hi - x_lo;
        const int ny = y_hi - y_lo;
        if (nx <= 0 || ny <= 0) continue;
        const double n = static_cast<double>(nx) * ny;
        double sa = 0.0;
        double sb = 0.0;
        double saa = 0.0;
        double sbb = 0.0;
        double sab = 0.0;
        for (int y = y_lo; y < y_hi; ++y) {
          for (int x = x_lo; x < x_hi; ++x) {
            const double va = a.at(x, y, c);
            const double vb = b.at(x + du, y + dv, c);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        }
        const double va = std::max(0.0, saa / n - (sa / n) * (sa / n));
        const double vb = std::max(0.0, sbb / n - (sb / n) * (sb / n));
        if (va < kVarEps || vb < kVarEps) continue;
        const double cov = sab / n - (sa / n) * (sb / n);
        const double ncc = cov / std::sqrt(va * vb);
        best = std::max(best, ncc);
      }
    }
    if (std::isfinite(best)) out[static_cast<std::size_t>(c)] = 1.0 - best;
  }
  return out;
}

DepthMap build_depthmap(const ScanRecord& cloud, const CameraFrame& frame,
                        const ValidationParams& params) {
  const int w = frame.calib.width;
  const int h = frame.calib.height;
  if (w <= 0 || h <= 0) {
    throw GeometryError("build_depthmap: frame has no image size");
  }
  const Pose w2c = world_to_camera(frame);
  std::vector<double> dist(static_cast<std::size_t>(w) * h,
                           std::numeric_limits<double>::infinity());
  double d_max = 0.0;
  for (const Vec3& p : cloud.points) {
    const Projection proj = project_camera_point(w2c.apply(p), frame.calib);
    if (proj.status != ProjectStatus::Inside) continue;
    const auto ix = static_cast<std::size_t>(std::floor(proj.u));
    const auto iy = static_cast<std::size_t>(std::floor(proj.v));
    double& cell = dist[iy * static_cast<std::size_t>(w) + ix];
    cell = std::min(cell, proj.distance);
    d_max = std::max(d_max, proj.distance);
  }
  if (d_max <= 0.0) {
    throw GeometryError("build_depthmap: no points project into the image");
  }

  DepthMap out;
  out.d_max = d_max;
  out.raster = Raster::filled(w, h, 1, 1.0f);
  // min-valued disk dilation: splat each observed pixel over the disk so
  // the nearest surface wins
  const int r = params.dilation_radius;
  std::vector<std::pair<int, int>> disk;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy <= r * r) disk.emplace_back(dx, dy);
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = dist[static_cast<std::size_t>(y) * w + x];
      if (!std::isfinite(d)) continue;
      const auto val = static_cast<float>(clamp01(d / d_max));
      for (const auto& [dx, dy] : disk) {
        const int qx = x + dx;
        const int qy = y + dy;
        if (!out.raster.in_bounds(qx, qy)) continue;
        float& cell = out.raster.at(qx, qy);
        cell = std::min(cell, val);
      }
    }
  }
  return out;
}

Raster correct_depthmap(const CameraFrame& frame_l,
                        const CameraFrame& frame_k) {
  if (!frame_l.has_depth() || frame_l.d_max <= 0.0) {
    throw GeometryError("correct_depthmap: frame has no depth map");
  }
  const Vec3 center_l =
      frame_l.pose.compose(frame_l.calib.lidar_to_camera.inverse())
          .translation;
  const Vec3 center_k =
      frame_k.pose.compose(frame_k.calib.lidar_to_camera.inverse())
          .translation;
  const double shift = (center_k - center_l).norm() / frame_l.d_max;
  Raster out = frame_l.depth;
  for (float& s : out.samples) {
    s = static_cast<float>(clamp01(s + shift));
  }
  return out;
}

double ssd_dissimilarity(const Raster& a, const Raster& b) {
  if (a.width != b.width || a.height != b.height ||
      a.channels != b.channels) {
    throw GeometryError("ssd_dissimilarity: patch shapes differ");
  }
  if (a.samples.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const double d = static_cast<double>(a.samples[i]) - b.samples[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.samples.size());
}

namespace {

/// Patches of the two frames at matched projections, resized to the smaller
/// side.
struct PatchPair {
  Raster a;
  Raster b;
};

PatchPair matched_patches(const Raster& ra, const Projection& pa,
                          const Raster& rb, const Projection& pb,
                          double f_xy, const ValidationParams& params) {
  const int side_a = patch_side(pa.distance, f_xy, params);
  const int side_b = patch_side(pb.distance, f_xy, params);
  PatchPair out;
  out.a = extract_patch(ra, pa.u, pa.v, side_a);
  out.b = extract_patch(rb, pb.u, pb.v, side_b);
  const int side = std::min(side_a, side_b);
  out.a = resize_bilinear(out.a, side);
  out.b = resize_bilinear(out.b, side);
  return out;
}

}  // namespace

LabelArray validate_candidates(const LabelArray& labels,
                               const ScanRecord& targets,
                               std::vector<CameraFrame>& frames,
                               std::size_t center_index,
                               const ValidationParams& params,
                               ValidationStats* stats) {
  if (labels.size() != targets.points.size()) {
    throw ConfigError("validate_candidates: labels do not match the scan");
  }
  if (center_index >= frames.size()) {
    throw ConfigError("validate_candidates: center frame out of range");
  }
  LabelArray out = labels;
  CameraFrame& center = frames[center_index];
  if (center.image.width <= 0) return out;

  std::vector<char> depth_failed(frames.size(), 0);
  const auto ensure_depth = [&](std::size_t idx) -> bool {
    CameraFrame& f = frames[idx];
    if (f.has_depth()) return true;
    if (depth_failed[idx] != 0 || f.cloud == nullptr) {
      depth_failed[idx] = 1;
      return false;
    }
    try {
      DepthMap dm = build_depthmap(*f.cloud, f, params);
      f.depth = std::move(dm.raster);
      f.d_max = dm.d_max;
      return true;
    } catch (const GeometryError&) {
      depth_failed[idx] = 1;
      return false;
    }
  };

  // The correction of another frame's depth map toward the center frame is
  // candidate-independent, so it is cached per frame.
  std::vector<Raster> corrected(frames.size());
  const auto corrected_depth = [&](std::size_t idx) -> const Raster* {
    if (corrected[idx].width > 0) return &corrected[idx];
    if (!ensure_depth(idx) || !ensure_depth(center_index)) return nullptr;
    corrected[idx] = correct_depthmap(frames[idx], center);
    return &corrected[idx];
  };

  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] != PointLabel::Moving) continue;
    if (stats) ++stats->candidates;
    const Vec3& p = targets.points[i];
    const Projection proj_k = project_to_camera(p, center);
    if (proj_k.status != ProjectStatus::Inside) {
      if (stats) ++stats->unusable;
      continue;  // no visual evidence against motion
    }

    std::size_t usable = 0;
    bool all_similar = true;
    for (std::size_t l = 0; l < frames.size() && all_similar; ++l) {
      if (l == center_index) continue;
      CameraFrame& other = frames[l];
      if (other.image.width <= 0) continue;
      const Projection proj_l = project_to_camera(p, other);
      if (proj_l.status != ProjectStatus::Inside) continue;

      bool use_depth = false;
      bool similar = false;
      bool pair_usable = false;
      {
        const PatchPair pp = matched_patches(
            center.image, proj_k, other.image, proj_l,
            center.calib.f_xy, params);
        if (is_uniform(pp.a, params) || is_uniform(pp.b, params)) {
          use_depth = true;
        } else {
          const auto diss = ncc_dissimilarity(pp.a, pp.b, params);
          bool any_undefined = false;
          bool all_below = true;
          for (const auto& d : diss) {
            if (!d.has_value()) {
              any_undefined = true;
            } else if (*d >= params.ncc_tau) {
              all_below = false;
            }
          }
          if (any_undefined) {
            use_depth = true;
          } else {
            pair_usable = true;
            similar = all_below;
            if (stats) ++stats->color_pairs;
          }
        }
      }
      if (use_depth) {
        const Raster* depth_l = corrected_depth(l);
        if (depth_l != nullptr) {
          const PatchPair dp = matched_patches(
              center.depth, proj_k, *depth_l, proj_l, center.calib.f_xy,
              params);
          similar = ssd_dissimilarity(dp.a, dp.b) < params.ssd_tau;
          pair_usable = true;
          if (stats) ++stats->depth_pairs;
        }
      }
      if (pair_usable) {
        ++usable;
        if (!similar) all_similar = false;
      }
    }

    if (usable == 0) {
      if (stats) ++stats->unusable;
    } else if (all_similar) {
      out[i] = PointLabel::Static;
      if (stats) ++stats->demoted;
    }
  }
  return out;
}

}  // namespace evmo
