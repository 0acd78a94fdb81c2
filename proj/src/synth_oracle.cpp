#include "evmo/synth_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "evmo/detail/rng.hpp"
#include "evmo/error.hpp"
#include "evmo/scan_io.hpp"

namespace evmo {

namespace {

constexpr double kEps = 1e-9;
constexpr double kPi = 3.14159265358979323846;

double ground_height_at(const GroundSpec& g, double x) {
  switch (g.kind) {
    case GroundKind::Flat:
      return 0.0;
    case GroundKind::Slope:
      return g.slope_percent * 0.01 * x;
    case GroundKind::Step:
      return x < g.step_x ? 0.0 : g.step_height;
  }
  return 0.0;
}

// Nearest intersection with one infinite plane n.p = c, accepted by `ok`.
template <typename Accept>
void plane_hit(const Vec3& n, double c, const Vec3& o, const Vec3& d,
               double max_t, const Accept& ok, double& best) {
  const double denom = n.dot(d);
  if (std::abs(denom) < kEps) return;
  const double t = (c - n.dot(o)) / denom;
  if (t <= kEps || t >= max_t || t >= best) return;
  if (ok(o + t * d)) best = t;
}

double intersect_ground(const GroundSpec& g, const Vec3& o, const Vec3& d,
                        double max_t) {
  double best = max_t;
  switch (g.kind) {
    case GroundKind::Flat:
      plane_hit(Vec3(0, 0, 1), 0.0, o, d, max_t,
                [](const Vec3&) { return true; }, best);
      break;
    case GroundKind::Slope: {
      const double m = g.slope_percent * 0.01;
      plane_hit(Vec3(-m, 0, 1), 0.0, o, d, max_t,
                [](const Vec3&) { return true; }, best);
      break;
    }
    case GroundKind::Step: {
      plane_hit(Vec3(0, 0, 1), 0.0, o, d, max_t,
                [&](const Vec3& p) { return p.x() < g.step_x; }, best);
      plane_hit(Vec3(0, 0, 1), g.step_height, o, d, max_t,
                [&](const Vec3& p) { return p.x() >= g.step_x; }, best);
      const double z_lo = std::min(0.0, g.step_height);
      const double z_hi = std::max(0.0, g.step_height);
      plane_hit(Vec3(1, 0, 0), g.step_x, o, d, max_t,
                [&](const Vec3& p) { return p.z() >= z_lo && p.z() <= z_hi; },
                best);
      break;
    }
  }
  return best < max_t ? best : -1.0;
}

double intersect_box(const Vec3& lo, const Vec3& hi, const Vec3& o,
                     const Vec3& d, double max_t) {
  double t0 = kEps;
  double t1 = max_t;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < kEps) {
      if (o[a] < lo[a] || o[a] > hi[a]) return -1.0;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return -1.0;
  }
  return t0;
}

Vec3 box_color_at(const BoxSpec& box, int frame, const Vec3& world_point) {
  if (!box.checker) return box.color;
  const Vec3 rel = world_point - box.center_at(frame);
  const Vec3 half = box.size * 0.5;
  // The surface pins the face-normal coordinate onto a cell boundary
  // whenever the half extent is a cell multiple, making its cell index
  // flip on rounding noise. Texture with the two in-face axes only.
  int face = 0;
  double pinned = -1.0;
  for (int a = 0; a < 3; ++a) {
    const double frac = half[a] > 0.0 ? std::abs(rel[a]) / half[a] : 0.0;
    if (frac > pinned) {
      pinned = frac;
      face = a;
    }
  }
  long long parity = 0;
  for (int a = 0; a < 3; ++a) {
    if (a == face) continue;
    parity += static_cast<long long>(std::floor(rel[a] / box.checker_cell));
  }
  return (parity & 1) != 0 ? box.color : box.color * 0.45;
}

double gaussian(detail::Rng& rng) {
  const double u1 = 1.0 - rng.next_double();  // (0, 1]
  const double u2 = rng.next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

std::string frame_path(const std::string& dir, const char* sub, int frame,
                       const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s/%06d.%s", sub, frame, ext);
  return dir + "/" + buf;
}

}  // namespace

RayHit cast_ray(const SceneSpec& spec, int frame, const Vec3& origin,
                const Vec3& dir, double max_t) {
  RayHit hit;
  double best = max_t;
  const double tg = intersect_ground(spec.ground, origin, dir, best);
  if (tg > 0.0) {
    best = tg;
    hit.t = tg;
    hit.box = -1;
  }
  for (std::size_t b = 0; b < spec.boxes.size(); ++b) {
    const BoxSpec& box = spec.boxes[b];
    const Vec3 c = box.center_at(frame);
    const Vec3 half = box.size * 0.5;
    const double tb = intersect_box(c - half, c + half, origin, dir, best);
    if (tb > 0.0 && tb < best) {
      best = tb;
      hit.t = tb;
      hit.box = static_cast<int>(b);
    }
  }
  return hit;
}

Sequence generate_sequence(const SceneSpec& spec, std::uint64_t seed) {
  if (!spec.is_valid()) {
    throw ConfigError("generate_sequence: invalid scene spec");
  }
  Sequence seq;
  seq.camera = spec.camera;
  for (std::size_t b = 0; b < spec.boxes.size(); ++b) {
    if (spec.boxes[b].is_moving()) {
      seq.moving_box_ids.push_back(static_cast<int>(b));
    }
  }

  const auto n_az = static_cast<int>(
      std::llround(2.0 * kPi / spec.lidar.azimuth_res));
  const bool render = spec.with_camera && spec.camera.width > 0;

  for (int f = 0; f < spec.frames; ++f) {
    FrameData frame;
    frame.pose = spec.sensor_path[static_cast<std::size_t>(f)];
    frame.scan.frame_index = f;
    frame.scan.sensor_origin = Vec3::Zero();
    const Pose& pose = frame.pose;
    const Pose world_to_sensor = pose.inverse();
    detail::Rng rng =
        detail::Rng(seed).fork(static_cast<std::uint64_t>(f) + 1);

    for (const double elev : spec.lidar.elevations) {
      const double ce = std::cos(elev);
      const double se = std::sin(elev);
      for (int i = 0; i < n_az; ++i) {
        const double az = static_cast<double>(i) * spec.lidar.azimuth_res;
        const Vec3 dir_sensor(ce * std::cos(az), ce * std::sin(az), se);
        const Vec3 dir_world = pose.rotation * dir_sensor;
        const RayHit hit =
            cast_ray(spec, f, pose.translation, dir_world, spec.lidar.max_range);
        if (!hit.valid()) continue;
        Vec3 p_world = pose.translation + hit.t * dir_world;
        if (spec.noise_sigma > 0.0) {
          p_world += spec.noise_sigma *
                     Vec3(gaussian(rng), gaussian(rng), gaussian(rng));
        }
        frame.scan.points.push_back(world_to_sensor.apply(p_world));
        float intensity = 0.3f;
        PointLabel label = PointLabel::Ground;
        if (hit.box >= 0) {
          const BoxSpec& box = spec.boxes[static_cast<std::size_t>(hit.box)];
          intensity = static_cast<float>(
              std::clamp(box.color.mean(), 0.0, 1.0));
          label = box.is_moving() ? PointLabel::Moving : PointLabel::Static;
        }
        frame.scan.intensities.push_back(intensity);
        frame.gt_labels.push_back(label);
      }
    }

    if (render) {
      const int w = spec.camera.width;
      const int h = spec.camera.height;
      frame.image = Raster::filled(w, h, 3, 0.0f);
      frame.gt_mask = Raster::filled(w, h, 1, 0.0f);
      frame.object_masks.assign(
          seq.moving_box_ids.size(), Raster::filled(w, h, 1, 0.0f));
      const Mat34& P = spec.camera.projection;
      const double fx = P(0, 0);
      const double fy = P(1, 1);
      const double cx = P(0, 2);
      const double cy = P(1, 2);
      const Pose cam_to_world =
          pose.compose(spec.camera.lidar_to_camera.inverse());
      for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
          const Vec3 dir_cam((u + 0.5 - cx) / fx, (v + 0.5 - cy) / fy, 1.0);
          const Vec3 dir_world =
              (cam_to_world.rotation * dir_cam).normalized();
          const RayHit hit = cast_ray(spec, f, cam_to_world.translation,
                                      dir_world, spec.lidar.max_range);
          Vec3 color = spec.background;
          if (hit.valid()) {
            if (hit.box < 0) {
              color = Vec3(0.35, 0.30, 0.25);
            } else {
              const Vec3 p = cam_to_world.translation + hit.t * dir_world;
              const BoxSpec& box =
                  spec.boxes[static_cast<std::size_t>(hit.box)];
              color = box_color_at(box, f, p);
              if (box.is_moving()) {
                frame.gt_mask.at(u, v) = 1.0f;
                for (std::size_t m = 0; m < seq.moving_box_ids.size(); ++m) {
                  if (seq.moving_box_ids[m] == hit.box) {
                    frame.object_masks[m].at(u, v) = 1.0f;
                  }
                }
              }
            }
          }
          for (int c = 0; c < 3; ++c) {
            frame.image.at(u, v, c) =
                static_cast<float>(std::clamp(color[c], 0.0, 1.0));
          }
        }
      }
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

void write_sequence(const Sequence& seq, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir + "/scans");
  fs::create_directories(dir + "/gt/labels");
  const bool with_images =
      !seq.frames.empty() && seq.frames.front().image.width > 0;
  if (with_images) {
    fs::create_directories(dir + "/images");
    fs::create_directories(dir + "/gt/masks");
    for (std::size_t m = 0; m < seq.moving_box_ids.size(); ++m) {
      char sub[32];
      std::snprintf(sub, sizeof(sub), "/gt/objects/%02d",
                    static_cast<int>(m));
      fs::create_directories(dir + sub);
    }
    write_camera_calib(dir + "/calib.txt", seq.camera);
  }

  std::vector<Pose> poses;
  poses.reserve(seq.frames.size());
  for (const FrameData& f : seq.frames) poses.push_back(f.pose);
  write_pose_file(dir + "/poses.txt", poses);

  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const FrameData& f = seq.frames[i];
    const int idx = static_cast<int>(i);
    write_scan(frame_path(dir, "scans", idx, "bin"), f.scan);
    write_label_file(frame_path(dir, "gt/labels", idx, "label"), f.gt_labels);
    if (with_images) {
      write_raster(frame_path(dir, "images", idx, "ppm"), f.image);
      write_raster(frame_path(dir, "gt/masks", idx, "pgm"), f.gt_mask);
      for (std::size_t m = 0; m < f.object_masks.size(); ++m) {
        char sub[32];
        std::snprintf(sub, sizeof(sub), "gt/objects/%02d",
                      static_cast<int>(m));
        write_raster(frame_path(dir, sub, idx, "pgm"), f.object_masks[m]);
      }
    }
  }
}

std::vector<Pose> make_linear_path(const Vec3& start, const Vec3& step,
                                   int frames) {
  std::vector<Pose> path;
  path.reserve(static_cast<std::size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    Pose p;
    p.translation = start + static_cast<double>(f) * step;
    path.push_back(p);
  }
  return path;
}

CameraCalib make_default_camera(int width, int height, double focal) {
  CameraCalib calib;
  calib.width = width;
  calib.height = height;
  calib.f_xy = focal;
  calib.projection.setZero();
  calib.projection(0, 0) = focal;
  calib.projection(1, 1) = focal;
  calib.projection(0, 2) = width * 0.5;
  calib.projection(1, 2) = height * 0.5;
  calib.projection(2, 2) = 1.0;
  // camera x = -lidar y (right), camera y = -lidar z (down),
  // camera z = +lidar x (forward)
  calib.lidar_to_camera.rotation << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  calib.lidar_to_camera.translation = Vec3::Zero();
  return calib;
}

SceneSpec preset_scene(const std::string& name, int frames,
                       double noise_sigma) {
  SceneSpec spec;
  spec.frames = frames;
  spec.noise_sigma = noise_sigma;
  spec.camera = make_default_camera(400, 300, 400.0);
  // Ring spacing on the ground grows with distance squared; 0.005 rad rings
  // from 1.5 m up keep the spacing under what the ground filter's step rule
  // tolerates out to the 22 m range cap.
  spec.lidar.azimuth_res = 0.005;
  for (int r = 0; r < 89; ++r) {
    spec.lidar.elevations.push_back(-0.42 + 0.005 * r);
  }
  spec.lidar.max_range = 22.0;

  const bool checker = name == "checker";
  const bool moving = name == "moving" || checker;
  const bool boxes = moving || name == "static";
  if (!boxes && name != "flat") {
    throw ConfigError("preset_scene: unknown preset '" + name + "'");
  }

  spec.ground.kind = name == "flat" ? GroundKind::Flat : GroundKind::Slope;
  spec.ground.slope_percent = name == "flat" ? 0.0 : 5.0;
  const auto ground_z = [&](double x) {
    return ground_height_at(spec.ground, x);
  };

  const double slope_m = spec.ground.slope_percent * 0.01;
  spec.sensor_path = make_linear_path(Vec3(0.0, 0.0, ground_z(0.0) + 1.5),
                                      Vec3(0.3, 0.0, 0.3 * slope_m), frames);

  if (boxes) {
    const auto add_box = [&](double x, double y, const Vec3& size,
                             const Vec3& color, const Vec3& vel) {
      BoxSpec box;
      box.center = Vec3(x, y, ground_z(x) + size.z() * 0.5);
      box.size = size;
      box.color = color;
      box.velocity = vel;
      box.checker = checker;
      if (checker) box.checker_cell = 0.15;
      spec.boxes.push_back(box);
    };
    if (moving) {
      // Extent along the motion axis stays below the 1 m/frame step, so the
      // mover never lands inside its own deduplication shadow.
      add_box(12.0, -6.0, Vec3(0.8, 0.8, 1.2), Vec3(0.85, 0.2, 0.2),
              Vec3(0.0, 1.0, 0.0));
    }
    // Backdrop wall: rays grazing past the mover return from it instead of
    // escaping past the range cap, which is what feeds pass-through
    // evidence to the points behind the mover's surface.
    {
      BoxSpec wall;
      wall.center = Vec3(17.0, 8.0, ground_z(17.0) + 1.25);
      wall.size = Vec3(0.4, 40.0, 2.5);
      wall.color = Vec3(0.7, 0.7, 0.7);
      wall.checker = checker;
      if (checker) wall.checker_cell = 0.15;
      spec.boxes.push_back(wall);
    }
    add_box(8.0, -3.0, Vec3(1.2, 1.2, 1.0), Vec3(0.2, 0.6, 0.85),
            Vec3::Zero());
    add_box(15.0, 4.0, Vec3(2.0, 1.5, 1.4), Vec3(0.3, 0.8, 0.3),
            Vec3::Zero());
    add_box(20.0, -5.0, Vec3(1.8, 1.8, 1.6), Vec3(0.8, 0.7, 0.2),
            Vec3::Zero());
    add_box(18.0, 1.0, Vec3(1.4, 1.0, 1.1), Vec3(0.6, 0.4, 0.8),
            Vec3::Zero());
  }
  return spec;
}

}  // namespace evmo
