#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "evmo/types.hpp"

namespace evmo {

/// Uniform voxel hash over a fixed point set, for radius and nearest-point
/// queries with radii up to the cell size.
class SpatialGrid {
 public:
  SpatialGrid() = default;

  SpatialGrid(const std::vector<Vec3>& points, double cell_size)
      : points_(&points), cell_(cell_size), inv_cell_(1.0 / cell_size) {
    cells_.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      cells_[key_of(points[i])].push_back(static_cast<int>(i));
    }
  }

  /// True when any stored point lies within `radius` of q (radius <= cell).
  bool has_neighbor_within(const Vec3& q, double radius) const {
    if (!points_) return false;
    const double r2 = radius * radius;
    bool found = false;
    visit_27(q, [&](int idx) {
      if (!found && ((*points_)[idx] - q).squaredNorm() <= r2) found = true;
    });
    return found;
  }

  /// Index of the nearest stored point within `radius`, or -1.
  int nearest_within(const Vec3& q, double radius) const {
    if (!points_) return -1;
    double best = radius * radius;
    int best_idx = -1;
    visit_27(q, [&](int idx) {
      const double d2 = ((*points_)[idx] - q).squaredNorm();
      if (d2 <= best && (d2 < best || idx < best_idx || best_idx == -1)) {
        best = d2;
        best_idx = idx;
      }
    });
    return best_idx;
  }

 private:
  std::int64_t key_of(const Vec3& p) const {
    const auto ix = static_cast<std::int64_t>(std::floor(p.x() * inv_cell_));
    const auto iy = static_cast<std::int64_t>(std::floor(p.y() * inv_cell_));
    const auto iz = static_cast<std::int64_t>(std::floor(p.z() * inv_cell_));
    return pack(ix, iy, iz);
  }

  static std::int64_t pack(std::int64_t x, std::int64_t y, std::int64_t z) {
    // 21 bits per axis, offset to stay positive.
    const std::int64_t m = 1 << 20;
    return ((x + m) << 42) | ((y + m) << 21) | (z + m);
  }

  template <typename Fn>
  void visit_27(const Vec3& q, Fn&& fn) const {
    const auto ix = static_cast<std::int64_t>(std::floor(q.x() * inv_cell_));
    const auto iy = static_cast<std::int64_t>(std::floor(q.y() * inv_cell_));
    const auto iz = static_cast<std::int64_t>(std::floor(q.z() * inv_cell_));
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = cells_.find(pack(ix + dx, iy + dy, iz + dz));
          if (it == cells_.end()) continue;
          for (int idx : it->second) fn(idx);
        }
  }

  const std::vector<Vec3>* points_ = nullptr;
  double cell_ = 1.0;
  double inv_cell_ = 1.0;
  std::unordered_map<std::int64_t, std::vector<int>> cells_;
};

}  // namespace evmo
