#pragma once

#include <vector>

#include "evmo/types.hpp"

namespace evmo {

/// Mass assignment over {empty, occupied, unknown}. Masses are non-negative
/// and sum to 1.
struct Belief {
  double e = 0.0;
  double o = 0.0;
  double u = 1.0;

  static Belief vacuous() { return {0.0, 0.0, 1.0}; }

  /// Builds a belief from raw masses, clamping rounding residue so the
  /// invariant (e,o,u >= 0, e+o+u = 1) holds.
  static Belief make(double e, double o);

  bool is_valid(double tol = 1e-9) const;
};

struct OccupancyParams {
  double sigma_m = 0.05;           // measurement std, meters
  double sigma_r = 0.15;           // registration std, meters
  double theta_scale = 0.0035;     // angular scale of the rotation kernel, rad
  double range_kernel_scale = 1.0; // meters; unit of the occupied-side kernel
  double conv_table_step = 0.01;   // meters
  double conv_table_halfwidth = 5.0;  // meters
};

struct DiscretizeParams {
  double r_sup = 0.8;
  double r_inf = 0.6;
};

/// A beam from sensor origin to measured endpoint. Occupancy of a query
/// point P is parameterized by its projection P' onto the beam line:
/// the signed range residual is positive when P' lies between O and Q and
/// negative when P' lies beyond the hit point Q.
struct BeamGeometry {
  Vec3 origin = Vec3::Zero();
  Vec3 endpoint = Vec3::Zero();
};

/// Residual geometry of a query point against a beam.
struct BeamProjection {
  double range_residual = 0.0;  // signed distance |P'Q|, + before the hit
  double theta = 0.0;           // angle between OP and OQ, radians
};

/// Computes the projection residual and angle. Throws GeometryError for a
/// zero-length beam or when P coincides with the origin (undefined angle).
BeamProjection project_on_beam(const Vec3& point, const BeamGeometry& beam);

/// Sharp (noise-free) occupancy of a point due to one beam: the beam passing
/// through grants empty mass, a point behind the hit gains occupied mass
/// decaying with distance, both angle-weighted by a Gaussian in theta.
Belief beam_belief(const Vec3& point, const BeamGeometry& beam,
                   const OccupancyParams& params);

/// Precomputed 1D convolutions of the sharp occupancy kernels with the
/// combined measurement+registration noise N(0, sigma_m^2 + sigma_r^2),
/// sampled over the signed range residual. Lookups interpolate linearly and
/// saturate beyond the table ends.
class ConvTables {
 public:
  ConvTables() = default;

  double empty_at(double range_residual) const;
  double occupied_at(double range_residual) const;

  double step() const { return step_; }
  double halfwidth() const { return halfwidth_; }
  double sigma_f() const { return sigma_f_; }

  friend ConvTables build_smoothing_tables(const OccupancyParams& params);

 private:
  double interpolate(const std::vector<double>& table, double r) const;

  double step_ = 0.01;
  double halfwidth_ = 5.0;
  double sigma_f_ = 0.0;
  std::vector<double> empty_table_;
  std::vector<double> occupied_table_;
};

ConvTables build_smoothing_tables(const OccupancyParams& params);

/// Noise-smoothed occupancy for a precomputed beam projection.
Belief smoothed_projection_belief(const BeamProjection& proj,
                                  const OccupancyParams& params,
                                  const ConvTables& tables);

/// Noise-smoothed occupancy of a point due to one beam.
Belief smoothed_beam_belief(const Vec3& point, const BeamGeometry& beam,
                            const OccupancyParams& params,
                            const ConvTables& tables);

/// Dempster's combination rule. On total conflict (K = 1) the result is
/// vacuous and *total_conflict, when given, is set.
Belief fuse(const Belief& a, const Belief& b, bool* total_conflict = nullptr);

struct Comparison {
  double conflicting = 0.0;
  double consistent = 0.0;
  double uncertain = 0.0;
  bool moving = false;  // conflict strictly dominates the other two
};

/// Pairwise consistency of two beliefs.
Comparison compare(const Belief& a, const Belief& b);

/// Distance-decayed discretization weight: r_sup at the sensor, r_inf at the
/// farthest point. Throws GeometryError when farthest_norm is zero.
double depth_weight_l(const Vec3& point, double farthest_norm,
                      const Vec3& origin, const DiscretizeParams& params);

/// Snaps a belief to mass l on its strictly dominant hypothesis; ties are
/// vacuous.
Belief discretize(const Belief& b, double l);

}  // namespace evmo
