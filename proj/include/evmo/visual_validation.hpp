#pragma once

#include <optional>
#include <vector>

#include "evmo/types.hpp"

namespace evmo {

struct ValidationParams {
  double patch_height_h = 0.15;  // meters, physical patch height
  double ncc_tau = 0.1;          // color dissimilarity threshold
  double uniform_std = 0.02;     // at or below is "uniform"
  int dilation_radius = 4;       // pixels, depth-map disk dilation
  int ncc_search_radius = 2;     // pixels, correlation shift range
  double ssd_tau = 0.01;         // depth dissimilarity threshold

  bool is_valid() const {
    return patch_height_h > 0.0 && ncc_tau > 0.0 && uniform_std > 0.0 &&
           dilation_radius >= 0 && ncc_search_radius >= 0 && ssd_tau > 0.0;
  }
};

/// One camera observation of the scene: image, calibration, the sensor pose
/// at that frame and (lazily built) normalized lidar depth map. `cloud`
/// points at the world-frame cloud the depth map is built from; it must
/// outlive the frame.
struct CameraFrame {
  CameraCalib calib;
  Raster image;
  Pose pose;  // sensor to world
  Raster depth;
  double d_max = 0.0;
  const ScanRecord* cloud = nullptr;

  bool has_depth() const { return depth.width > 0; }
};

enum class ProjectStatus { Inside, Behind, Outside };

struct Projection {
  ProjectStatus status = ProjectStatus::Behind;
  double u = 0.0;        // continuous pixel column
  double v = 0.0;        // continuous pixel row
  double distance = 0.0; // camera-to-point distance, meters
};

/// World-to-camera transform of a frame (mount after inverse sensor pose).
Pose world_to_camera(const CameraFrame& frame);

Projection project_to_camera(const Vec3& point_world,
                             const CameraFrame& frame);

/// Projection of a point already expressed in the camera frame.
Projection project_camera_point(const Vec3& p_cam, const CameraCalib& calib);

/// Physical patch side in pixels at distance d: (h / d) * f_xy, forced odd
/// and at least 3.
int patch_side(double distance, double f_xy, const ValidationParams& params);

/// side x side patch centered at the pixel containing (u, v), edge-clamped.
Raster extract_patch(const Raster& raster, double u, double v, int side);

/// Bilinear resize to new_side x new_side (channels preserved).
Raster resize_bilinear(const Raster& patch, int new_side);

/// Standard deviation of gray intensity at or below params.uniform_std.
bool is_uniform(const Raster& patch, const ValidationParams& params);

/// Per-channel color dissimilarity 1 - max NCC over shifts within
/// ncc_search_radius. A channel without variance anywhere is nullopt.
std::vector<std::optional<double>> ncc_dissimilarity(
    const Raster& a, const Raster& b, const ValidationParams& params);

struct DepthMap {
  Raster raster;  // 1 channel, normalized distances, unobserved = 1.0
  double d_max = 0.0;
};

/// Projects a world-frame cloud into the frame, keeps per-pixel minimum
/// distance, normalizes by the maximum, then applies min-valued disk
/// dilation. Throws GeometryError when nothing projects into the image.
DepthMap build_depthmap(const ScanRecord& cloud, const CameraFrame& frame,
                        const ValidationParams& params);

/// Small-motion compensation: adds |t_k - t_l| / d_max_l to every sample of
/// frame_l's depth map, clamped to [0,1]. Translations are camera centers.
Raster correct_depthmap(const CameraFrame& frame_l,
                        const CameraFrame& frame_k);

/// Mean squared per-sample difference; patches must have equal shape.
double ssd_dissimilarity(const Raster& a, const Raster& b);

struct ValidationStats {
  std::size_t candidates = 0;
  std::size_t demoted = 0;
  std::size_t color_pairs = 0;
  std::size_t depth_pairs = 0;
  std::size_t unusable = 0;  // candidates with no usable frame pair
};

/// Re-examines every Moving point of `targets` against the window's camera
/// frames; appearance consistent across all usable frames demotes the point
/// to Static. Depth maps are built into `frames` on first use. Labels other
/// than Moving pass through untouched.
LabelArray validate_candidates(const LabelArray& labels,
                               const ScanRecord& targets,
                               std::vector<CameraFrame>& frames,
                               std::size_t center_index,
                               const ValidationParams& params,
                               ValidationStats* stats = nullptr);

}  // namespace evmo
