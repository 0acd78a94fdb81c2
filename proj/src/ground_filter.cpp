#include "evmo/ground_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace evmo {

GroundGrid build_height_grid(const ScanRecord& scan,
                             const GroundParams& params) {
  GroundGrid grid;
  grid.cell_size = params.cell_size;
  grid.slope_s = params.slope_s;
  const double inv = 1.0 / params.cell_size;
  for (std::size_t idx = 0; idx < scan.points.size(); ++idx) {
    const Vec3& p = scan.points[idx];
    const int i = static_cast<int>(std::floor(p.x() * inv));
    const int j = static_cast<int>(std::floor(p.y() * inv));
    auto [it, inserted] = grid.cells.try_emplace({i, j});
    CellStats& cell = it->second;
    if (inserted) {
      cell.h_max = p.z();
      cell.h_min = p.z();
    } else {
      cell.h_max = std::max(cell.h_max, p.z());
      cell.h_min = std::min(cell.h_min, p.z());
    }
    cell.point_indices.push_back(static_cast<int>(idx));
  }
  return grid;
}

namespace {

int chebyshev_ring(std::pair<int, int> cell, std::pair<int, int> seed) {
  return std::max(std::abs(cell.first - seed.first),
                  std::abs(cell.second - seed.second));
}

std::pair<int, int> pick_seed(const GroundGrid& grid) {
  // Cell (0,0) when populated, otherwise the populated cell whose center is
  // closest to the origin. Ties resolve to the smallest (i,j).
  const auto origin = std::make_pair(0, 0);
  if (grid.cells.count(origin)) return origin;
  double best = std::numeric_limits<double>::infinity();
  std::pair<int, int> best_cell{0, 0};
  for (const auto& [key, cell] : grid.cells) {
    const double cx = (key.first + 0.5) * grid.cell_size;
    const double cy = (key.second + 0.5) * grid.cell_size;
    const double d2 = cx * cx + cy * cy;
    if (d2 < best || (d2 == best && key < best_cell)) {
      best = d2;
      best_cell = key;
    }
  }
  return best_cell;
}

}  // namespace

namespace {

// Sparse fallback for degenerate extents: propagation runs over populated
// cells only, so estimates cannot jump gaps and disconnected cells are kept.
GroundGrid classify_sparse(GroundGrid grid, std::pair<int, int> seed) {
  const double s = grid.slope_s;
  std::vector<std::vector<std::pair<int, int>>> rings;
  for (const auto& [key, cell] : grid.cells) {
    const auto r = static_cast<std::size_t>(chebyshev_ring(key, seed));
    if (rings.size() <= r) rings.resize(r + 1);
    rings[r].push_back(key);
  }

  for (std::size_t ring = 0; ring < rings.size(); ++ring) {
    for (const auto& key : rings[ring]) {
      CellStats& cell = grid.cells.at(key);
      double propagated = 0.0;
      if (ring == 0) {
        // The sensor is assumed to sit above ground at the seed.
        propagated = cell.h_min;
        cell.visited = true;
      } else {
        bool any = false;
        for (int di = -1; di <= 1; ++di) {
          for (int dj = -1; dj <= 1; ++dj) {
            if (di == 0 && dj == 0) continue;
            const std::pair<int, int> nkey{key.first + di, key.second + dj};
            if (chebyshev_ring(nkey, seed) !=
                static_cast<int>(ring) - 1) {
              continue;
            }
            const auto it = grid.cells.find(nkey);
            if (it == grid.cells.end() || !it->second.visited) continue;
            propagated =
                any ? std::max(propagated, it->second.ground_height)
                    : it->second.ground_height;
            any = true;
          }
        }
        if (!any) {
          cell.visited = false;  // island: keep its points
          cell.is_ground = false;
          continue;
        }
        cell.visited = true;
      }
      cell.propagated = propagated;
      cell.is_ground =
          (cell.h_max - cell.h_min < s) && (cell.h_max < propagated + s);
      cell.ground_height = cell.is_ground ? cell.h_max : propagated;
    }
  }
  return grid;
}

}  // namespace

GroundGrid classify_cells(GroundGrid grid) {
  if (grid.cells.empty()) return grid;
  const auto seed = pick_seed(grid);

  int i_lo = seed.first;
  int i_hi = seed.first;
  int j_lo = seed.second;
  int j_hi = seed.second;
  for (const auto& [key, cell] : grid.cells) {
    i_lo = std::min(i_lo, key.first);
    i_hi = std::max(i_hi, key.first);
    j_lo = std::min(j_lo, key.second);
    j_hi = std::max(j_hi, key.second);
  }
  const auto width = static_cast<std::int64_t>(i_hi) - i_lo + 1;
  const auto height = static_cast<std::int64_t>(j_hi) - j_lo + 1;
  constexpr std::int64_t kDenseCellCap = std::int64_t{1} << 22;
  if (width * height > kDenseCellCap) {
    return classify_sparse(std::move(grid), seed);
  }

  // Dense propagation over the populated bounding box: empty tiles carry
  // the inner estimate outward, so rings of returns separated by beam gaps
  // still compare against a reference height. Every tile in the box has an
  // inner 8-neighbor, which keeps the whole box reachable from the seed.
  const double s = grid.slope_s;
  std::vector<double> height_of(static_cast<std::size_t>(width * height),
                                0.0);
  std::vector<char> visited(static_cast<std::size_t>(width * height), 0);
  const auto at = [&](int i, int j) {
    return static_cast<std::size_t>(
        (static_cast<std::int64_t>(j) - j_lo) * width + (i - i_lo));
  };
  const auto in_box = [&](int i, int j) {
    return i >= i_lo && i <= i_hi && j >= j_lo && j <= j_hi;
  };

  const auto visit = [&](int i, int j, int ring) {
    double propagated = 0.0;
    if (ring == 0) {
      // The sensor is assumed to sit above ground at the seed.
      propagated = grid.cells.at(seed).h_min;
    } else {
      bool any = false;
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const int ni = i + di;
          const int nj = j + dj;
          if (!in_box(ni, nj)) continue;
          if (chebyshev_ring({ni, nj}, seed) != ring - 1) continue;
          if (!visited[at(ni, nj)]) continue;
          const double h = height_of[at(ni, nj)];
          propagated = any ? std::max(propagated, h) : h;
          any = true;
        }
      }
      if (!any) return;  // ring clipped so hard the cell lost its inners
    }
    visited[at(i, j)] = 1;
    const auto it = grid.cells.find({i, j});
    if (it == grid.cells.end()) {
      height_of[at(i, j)] = propagated;
      return;
    }
    CellStats& cell = it->second;
    cell.visited = true;
    cell.propagated = propagated;
    cell.is_ground =
        (cell.h_max - cell.h_min < s) && (cell.h_max < propagated + s);
    cell.ground_height = cell.is_ground ? cell.h_max : propagated;
    height_of[at(i, j)] = cell.ground_height;
  };

  const int max_ring = std::max(
      std::max(seed.first - i_lo, i_hi - seed.first),
      std::max(seed.second - j_lo, j_hi - seed.second));
  visit(seed.first, seed.second, 0);
  for (int r = 1; r <= max_ring; ++r) {
    for (int i = seed.first - r; i <= seed.first + r; ++i) {
      if (in_box(i, seed.second - r)) visit(i, seed.second - r, r);
      if (in_box(i, seed.second + r)) visit(i, seed.second + r, r);
    }
    for (int j = seed.second - r + 1; j <= seed.second + r - 1; ++j) {
      if (in_box(seed.first - r, j)) visit(seed.first - r, j, r);
      if (in_box(seed.first + r, j)) visit(seed.first + r, j, r);
    }
  }
  return grid;
}

GroundStripResult strip_ground(const ScanRecord& scan,
                               const GroundGrid& grid) {
  GroundStripResult out;
  out.labels.assign(scan.points.size(), PointLabel::Static);
  for (const auto& [key, cell] : grid.cells) {
    if (!cell.is_ground) continue;
    for (int idx : cell.point_indices) {
      out.labels[static_cast<std::size_t>(idx)] = PointLabel::Ground;
    }
  }
  out.scan.frame_index = scan.frame_index;
  out.scan.sensor_origin = scan.sensor_origin;
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    if (out.labels[i] != PointLabel::Ground) {
      out.scan.points.push_back(scan.points[i]);
      out.scan.intensities.push_back(scan.intensities[i]);
      out.kept_indices.push_back(static_cast<int>(i));
    }
  }
  return out;
}

}  // namespace evmo
