#include "evmo/evidential.hpp"

#include <algorithm>
#include <cmath>

namespace evmo {

Belief Belief::make(double e, double o) {
  e = std::clamp(e, 0.0, 1.0);
  o = std::clamp(o, 0.0, 1.0);
  const double sum = e + o;
  if (sum > 1.0) {
    e /= sum;
    o /= sum;
  }
  Belief b;
  b.e = e;
  b.o = o;
  b.u = 1.0 - e - o;
  if (b.u < 0.0) b.u = 0.0;
  return b;
}

bool Belief::is_valid(double tol) const {
  return e >= 0.0 && o >= 0.0 && u >= 0.0 &&
         std::abs(e + o + u - 1.0) <= tol;
}

BeamProjection project_on_beam(const Vec3& point, const BeamGeometry& beam) {
  const Vec3 d = beam.endpoint - beam.origin;
  const double beam_len = d.norm();
  if (beam_len <= 0.0) {
    throw GeometryError("project_on_beam: zero-length beam");
  }
  const Vec3 v = point - beam.origin;
  const double v_len = v.norm();
  if (v_len <= 0.0) {
    throw GeometryError("project_on_beam: point coincides with beam origin");
  }
  BeamProjection out;
  const double along = v.dot(d) / beam_len;  // distance of P' from O
  out.range_residual = beam_len - along;     // positive before the hit
  const double cosang = std::clamp(v.dot(d) / (v_len * beam_len), -1.0, 1.0);
  out.theta = std::acos(cosang);
  return out;
}

namespace {

double theta_weight(double theta, const OccupancyParams& params) {
  const double s = theta / params.theta_scale;
  return std::exp(-0.5 * s * s);
}

// Sharp occupied-side kernel over the signed residual: a one-sided Gaussian
// bump on and behind the hit point.
double sharp_occupied(double range_residual, double kernel_scale) {
  if (range_residual > 0.0) return 0.0;
  const double s = range_residual / kernel_scale;
  return std::exp(-0.5 * s * s);
}

double gauss_pdf(double x, double sigma) {
  const double s = x / sigma;
  return std::exp(-0.5 * s * s) / (sigma * std::sqrt(2.0 * M_PI));
}

double gauss_cdf(double x, double sigma) {
  return 0.5 * std::erfc(-x / (sigma * std::sqrt(2.0)));
}

}  // namespace

Belief beam_belief(const Vec3& point, const BeamGeometry& beam,
                   const OccupancyParams& params) {
  const BeamProjection proj = project_on_beam(point, beam);
  const double e_r = proj.range_residual > 0.0 ? 1.0 : 0.0;
  const double o_r =
      sharp_occupied(proj.range_residual, params.range_kernel_scale);
  return Belief::make(theta_weight(proj.theta, params) * e_r, o_r);
}

ConvTables build_smoothing_tables(const OccupancyParams& params) {
  ConvTables t;
  t.step_ = params.conv_table_step;
  t.halfwidth_ = params.conv_table_halfwidth;
  t.sigma_f_ = std::hypot(params.sigma_m, params.sigma_r);

  const auto n = static_cast<std::size_t>(
                     std::llround(2.0 * t.halfwidth_ / t.step_)) +
                 1;
  t.empty_table_.resize(n);
  t.occupied_table_.resize(n);

  // The noise kernel F = g(m) (x) g(r) is Gaussian with summed variances,
  // so the step kernel convolves to the Gaussian CDF in closed form. The
  // one-sided occupied kernel is convolved numerically; its integrand jumps
  // at s = r, so integration starts there and stays on the smooth side.
  const double support = 6.0 * t.sigma_f_;
  const double quad_step = std::min(t.step_ * 0.5, t.sigma_f_ / 50.0);

  for (std::size_t i = 0; i < n; ++i) {
    const double r = -t.halfwidth_ + static_cast<double>(i) * t.step_;
    t.empty_table_[i] = gauss_cdf(r, t.sigma_f_);
    const double lo = std::max(r, -support);
    if (lo >= support) {
      t.occupied_table_[i] = 0.0;
      continue;
    }
    const auto quad_n = static_cast<std::size_t>(
        std::ceil((support - lo) / quad_step));
    const double h = (support - lo) / static_cast<double>(quad_n);
    double acc = 0.0;
    for (std::size_t k = 0; k <= quad_n; ++k) {
      const double s = lo + static_cast<double>(k) * h;
      const double f = gauss_pdf(s, t.sigma_f_) *
                       sharp_occupied(r - s, params.range_kernel_scale);
      const bool edge = (k == 0 || k == quad_n);
      acc += (edge ? 0.5 : 1.0) * f;
    }
    t.occupied_table_[i] = acc * h;
  }
  return t;
}

double ConvTables::interpolate(const std::vector<double>& table,
                               double r) const {
  const double pos = (std::clamp(r, -halfwidth_, halfwidth_) + halfwidth_) /
                     step_;
  const auto i0 = static_cast<std::size_t>(pos);
  if (i0 + 1 >= table.size()) return table.back();
  const double frac = pos - static_cast<double>(i0);
  return table[i0] * (1.0 - frac) + table[i0 + 1] * frac;
}

double ConvTables::empty_at(double range_residual) const {
  return interpolate(empty_table_, range_residual);
}

double ConvTables::occupied_at(double range_residual) const {
  return interpolate(occupied_table_, range_residual);
}

Belief smoothed_projection_belief(const BeamProjection& proj,
                                  const OccupancyParams& params,
                                  const ConvTables& tables) {
  const double e = theta_weight(proj.theta, params) *
                   tables.empty_at(proj.range_residual);
  const double o = tables.occupied_at(proj.range_residual);
  return Belief::make(e, o);
}

Belief smoothed_beam_belief(const Vec3& point, const BeamGeometry& beam,
                            const OccupancyParams& params,
                            const ConvTables& tables) {
  return smoothed_projection_belief(project_on_beam(point, beam), params,
                                    tables);
}

Belief fuse(const Belief& a, const Belief& b, bool* total_conflict) {
  const double k = a.o * b.e + a.e * b.o;
  if (1.0 - k <= 1e-12) {
    if (total_conflict) *total_conflict = true;
    return Belief::vacuous();
  }
  const double inv = 1.0 / (1.0 - k);
  const double e = (a.e * b.e + a.e * b.u + a.u * b.e) * inv;
  const double o = (a.o * b.o + a.o * b.u + a.u * b.o) * inv;
  return Belief::make(e, o);
}

Comparison compare(const Belief& a, const Belief& b) {
  Comparison c;
  c.conflicting = a.e * b.o + a.o * b.e;
  c.consistent = a.e * b.e + a.o * b.o + a.u * b.u;
  c.uncertain = a.u * (b.e + b.o) + b.u * (a.e + a.o);
  c.moving = c.conflicting > c.consistent && c.conflicting > c.uncertain;
  return c;
}

double depth_weight_l(const Vec3& point, double farthest_norm,
                      const Vec3& origin, const DiscretizeParams& params) {
  if (farthest_norm <= 0.0) {
    throw GeometryError("depth_weight_l: degenerate scan (|OB| = 0)");
  }
  const double ratio = (point - origin).norm() / farthest_norm;
  const double l = params.r_sup - (params.r_sup - params.r_inf) * ratio;
  return std::clamp(l, params.r_inf, params.r_sup);
}

Belief discretize(const Belief& b, double l) {
  Belief out;
  if (b.e > b.o && b.e > b.u) {
    out.e = l;
  } else if (b.o > b.e && b.o > b.u) {
    out.o = l;
  }
  out.u = 1.0 - out.e - out.o;
  return out;
}

}  // namespace evmo
