#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "evmo/error.hpp"

namespace evmo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

/// Rigid transform: x -> R*x + t.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  Pose inverse() const {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  /// Composition: (*this) after other, i.e. apply(other.apply(p)).
  Pose compose(const Pose& other) const {
    Pose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }

  /// Max absolute deviation of R^T R from identity.
  double orthonormality_error() const {
    return (rotation.transpose() * rotation - Mat3::Identity())
        .cwiseAbs()
        .maxCoeff();
  }

  bool is_valid(double tol = 1e-6) const {
    return orthonormality_error() < tol &&
           std::abs(rotation.determinant() - 1.0) < tol;
  }

  /// Snap the rotation to the nearest proper orthonormal matrix.
  void reorthonormalize() {
    Eigen::JacobiSVD<Mat3> svd(rotation,
                               Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0) {
      Mat3 flip = Mat3::Identity();
      flip(2, 2) = -1.0;
      r = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    rotation = r;
  }
};

/// One lidar revolution: points with intensities, in some common frame.
/// Beams are the segments sensor_origin -> point.
struct ScanRecord {
  std::vector<Vec3> points;
  std::vector<float> intensities;  // unitless, [0,1], parallel to points
  int frame_index = 0;
  Vec3 sensor_origin = Vec3::Zero();

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Per-point classification result.
enum class PointLabel : std::uint8_t {
  Static = 0,
  Moving = 1,
  Ground = 2,
  Dropped = 3,
};

using LabelArray = std::vector<PointLabel>;

/// Camera model: 3x4 projection applied to camera-frame homogeneous points,
/// plus the lidar-to-camera extrinsic.
struct CameraCalib {
  Mat34 projection = Mat34::Zero();
  double f_xy = 0.0;  // focal length in pixels
  int width = 0;
  int height = 0;
  Pose lidar_to_camera;
};

/// Dense image raster, gray/depth/mask (1 channel) or RGB (3 channels).
/// Samples are row-major, channel-interleaved, normalized to [0,1].
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> samples;

  static Raster filled(int w, int h, int c, float value) {
    Raster r;
    r.width = w;
    r.height = h;
    r.channels = c;
    r.samples.assign(static_cast<std::size_t>(w) * h * c, value);
    return r;
  }

  float at(int x, int y, int c = 0) const {
    return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float& at(int x, int y, int c = 0) {
    return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
};

}  // namespace evmo
