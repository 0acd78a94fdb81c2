#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evmo/types.hpp"

namespace evmo {

enum class GroundKind { Flat, Slope, Step };

struct GroundSpec {
  GroundKind kind = GroundKind::Flat;
  double slope_percent = 0.0;  // rise per 100 m along +x
  double step_height = 0.0;    // z offset of the far side
  double step_x = 0.0;         // where the step sits
};

struct BoxSpec {
  Vec3 center = Vec3::Zero();    // at frame 0
  Vec3 size = Vec3::Ones();      // full extents
  Vec3 color = Vec3(0.7, 0.7, 0.7);
  Vec3 velocity = Vec3::Zero();  // meters per frame
  bool checker = false;          // checkerboard texture instead of flat color
  double checker_cell = 0.1;     // meters, box-local

  bool is_moving() const { return velocity.norm() > 0.0; }
  Vec3 center_at(int frame) const {
    return center + static_cast<double>(frame) * velocity;
  }
};

struct LidarSpec {
  double azimuth_res = 0.005;      // radians
  std::vector<double> elevations;  // radians, one ring each
  double max_range = 80.0;
};

struct SceneSpec {
  GroundSpec ground;
  std::vector<BoxSpec> boxes;
  std::vector<Pose> sensor_path;  // one pose per frame
  LidarSpec lidar;
  CameraCalib camera;
  bool with_camera = true;
  int frames = 1;
  double noise_sigma = 0.0;
  Vec3 background = Vec3(0.25, 0.35, 0.55);

  bool is_valid() const {
    return frames >= 1 && lidar.azimuth_res > 0.0 &&
           !lidar.elevations.empty() && lidar.max_range > 0.0 &&
           static_cast<int>(sensor_path.size()) == frames;
  }
};

struct FrameData {
  ScanRecord scan;  // sensor frame
  Pose pose;        // sensor to world
  LabelArray gt_labels;
  Raster image;                      // RGB, empty when camera off
  Raster gt_mask;                    // 1 channel, union of moving boxes
  std::vector<Raster> object_masks;  // one per moving box
};

struct Sequence {
  std::vector<FrameData> frames;
  CameraCalib camera;
  std::vector<int> moving_box_ids;  // indices into SceneSpec::boxes
};

/// Closed-form nearest intersection of a world ray with the scene.
/// Returns the hit parameter t (meters along the unit direction), the hit
/// primitive (-1 ground, otherwise box index), or t < 0 when nothing is hit
/// within max_t.
struct RayHit {
  double t = -1.0;
  int box = -1;  // -1 means ground
  bool valid() const { return t >= 0.0; }
};

RayHit cast_ray(const SceneSpec& spec, int frame, const Vec3& origin,
                const Vec3& dir, double max_t);

Sequence generate_sequence(const SceneSpec& spec, std::uint64_t seed);

/// Writes a sequence in the on-disk layout consumed by the CLI:
/// calib.txt, poses.txt, scans/NNNNNN.bin, images/NNNNNN.ppm,
/// gt/labels/NNNNNN.label, gt/masks/NNNNNN.pgm, gt/objects/MM/NNNNNN.pgm.
void write_sequence(const Sequence& seq, const std::string& dir);

/// Straight-line sensor path with identity orientation.
std::vector<Pose> make_linear_path(const Vec3& start, const Vec3& step,
                                   int frames);

/// A pinhole camera looking along lidar +x, principal point centered.
CameraCalib make_default_camera(int width, int height, double focal);

/// Named scene presets shared by the CLI and the test harness:
/// "static", "moving", "checker", "flat".
SceneSpec preset_scene(const std::string& name, int frames,
                       double noise_sigma);

}  // namespace evmo
