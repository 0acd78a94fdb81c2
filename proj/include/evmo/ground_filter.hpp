#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "evmo/types.hpp"

namespace evmo {

struct GroundParams {
  double cell_size = 0.4;  // tile side, meters
  double slope_s = 0.09;   // max height step per tile, meters
};

/// Per-tile height statistics and propagated ground estimate.
struct CellStats {
  double h_max = 0.0;        // highest point in the tile
  double h_min = 0.0;        // lowest point in the tile
  double propagated = 0.0;   // ground height received from inner neighbors
  double ground_height = 0.0;
  bool is_ground = false;
  bool visited = false;      // reachable from the seed via inner rings
  std::vector<int> point_indices;
};

/// 2D tile grid over XY with per-cell height stats. Tile (i,j) covers
/// [i*cell, (i+1)*cell) x [j*cell, (j+1)*cell).
struct GroundGrid {
  double cell_size = 0.4;
  double slope_s = 0.09;
  std::map<std::pair<int, int>, CellStats> cells;
};

/// Bins a sensor-frame scan (X forward, Y left, Z up) into tiles and records
/// per-tile min/max heights. Empty tiles are absent.
GroundGrid build_height_grid(const ScanRecord& scan,
                             const GroundParams& params);

/// Propagates ground height outward from the seed cell ring by ring and
/// classifies each visited tile: ground iff the tile's height span stays
/// under slope_s and its top stays under the propagated height plus slope_s.
/// Tiles unreachable from the seed are left non-ground.
GroundGrid classify_cells(GroundGrid grid);

struct GroundStripResult {
  ScanRecord scan;                // points outside ground cells
  LabelArray labels;              // per input point: Ground or Static
  std::vector<int> kept_indices;  // original indices of surviving points
};

/// Removes the points of ground-classified cells and labels them Ground.
GroundStripResult strip_ground(const ScanRecord& scan, const GroundGrid& grid);

}  // namespace evmo
