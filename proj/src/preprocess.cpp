#include "evmo/preprocess.hpp"

#include <cmath>

#include "evmo/spatial_grid.hpp"

namespace evmo {

ScanRecord apply_pose(const ScanRecord& scan, const Pose& pose) {
  ScanRecord out;
  out.frame_index = scan.frame_index;
  out.intensities = scan.intensities;
  out.sensor_origin = pose.apply(scan.sensor_origin);
  out.points.reserve(scan.points.size());
  for (const Vec3& p : scan.points) {
    out.points.push_back(pose.apply(p));
  }
  return out;
}

FilterResult crop_far(const ScanRecord& scan, const PreprocessParams& params) {
  FilterResult out;
  out.scan.frame_index = scan.frame_index;
  out.scan.sensor_origin = scan.sensor_origin;
  const Vec3& o = scan.sensor_origin;
  const double tau = params.crop_tau;
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    const Vec3 d = scan.points[i] - o;
    if (std::abs(d.x()) <= tau && std::abs(d.y()) <= tau &&
        std::abs(d.z()) <= tau) {
      out.scan.points.push_back(scan.points[i]);
      out.scan.intensities.push_back(scan.intensities[i]);
      out.kept_indices.push_back(static_cast<int>(i));
    }
  }
  return out;
}

FilterResult dedup_window(const ScanRecord& scan,
                          const std::vector<const ScanRecord*>& recent,
                          const PreprocessParams& params) {
  std::vector<SpatialGrid> grids;
  grids.reserve(recent.size());
  for (const ScanRecord* cloud : recent) {
    grids.emplace_back(cloud->points, params.dedup_radius);
  }
  FilterResult out;
  out.scan.frame_index = scan.frame_index;
  out.scan.sensor_origin = scan.sensor_origin;
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    bool duplicate = false;
    for (const SpatialGrid& grid : grids) {
      if (grid.has_neighbor_within(scan.points[i], params.dedup_radius)) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) {
      out.scan.points.push_back(scan.points[i]);
      out.scan.intensities.push_back(scan.intensities[i]);
      out.kept_indices.push_back(static_cast<int>(i));
    }
  }
  return out;
}

namespace {

// Rigid alignment minimizing sum |R*s + t - q|^2 over matched pairs.
Pose fit_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  Vec3 src_mean = Vec3::Zero();
  Vec3 dst_mean = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    src_mean += src[i];
    dst_mean += dst[i];
  }
  src_mean /= static_cast<double>(src.size());
  dst_mean /= static_cast<double>(src.size());

  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cov += (src[i] - src_mean) * (dst[i] - dst_mean).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixV() * svd.matrixU().transpose();
  if (r.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixV() * flip * svd.matrixU().transpose();
  }
  Pose pose;
  pose.rotation = r;
  pose.translation = dst_mean - r * src_mean;
  return pose;
}

}  // namespace

Pose icp_refine(const ScanRecord& source, const ScanRecord& target,
                const Pose& init, const PreprocessParams& params) {
  if (source.empty() || target.empty()) {
    throw GeometryError("icp_refine: empty scan");
  }
  SpatialGrid grid(target.points, params.icp_corr_dist);
  Pose pose = init;
  std::vector<Vec3> matched_src;
  std::vector<Vec3> matched_dst;
  for (int iter = 0; iter < params.icp_max_iter; ++iter) {
    matched_src.clear();
    matched_dst.clear();
    for (const Vec3& p : source.points) {
      const Vec3 q = pose.apply(p);
      const int j = grid.nearest_within(q, params.icp_corr_dist);
      if (j >= 0) {
        matched_src.push_back(p);
        matched_dst.push_back(target.points[j]);
      }
    }
    if (matched_src.size() < 3) {
      throw GeometryError("icp_refine: degenerate registration (" +
                          std::to_string(matched_src.size()) +
                          " correspondences)");
    }
    const Pose next = fit_rigid(matched_src, matched_dst);
    const double change = (next.rotation - pose.rotation).norm() +
                          (next.translation - pose.translation).norm();
    pose = next;
    if (change < 1e-6) break;
  }
  return pose;
}

}  // namespace evmo
