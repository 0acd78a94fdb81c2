#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "evmo/error.hpp"
#include "evmo/evaluation.hpp"
#include "evmo/pipeline.hpp"
#include "evmo/scan_io.hpp"
#include "evmo/synth_oracle.hpp"
#include "evmo/visual_validation.hpp"

namespace fs = std::filesystem;
using namespace evmo;

namespace {

struct RunConfig {
  std::string input;
  std::string output;
  std::string labels_dir;
  PipelineParams pipe;
  bool no_validation = false;
  bool exhaustive = false;
  std::string mode = "discretized";
  int mask_dilation = 4;
  SweepSpec sweep;
  std::string preset = "moving";
  int frames = 30;
  double noise = 0.01;
  std::uint64_t seed = 0;
  bool no_camera = false;
  int frame = 0;
  bool objects = false;
};

std::string frame_file(const std::string& dir, int frame, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.%s", frame, ext);
  return dir + "/" + buf;
}

struct SequenceDir {
  std::string dir;
  int frames = 0;
  std::vector<Pose> poses;
  CameraCalib calib;  // width 0 when absent
  bool has_images = false;
  bool has_masks = false;

  std::string scan_path(int f) const {
    return frame_file(dir + "/scans", f, "bin");
  }
  std::string image_path(int f) const {
    return frame_file(dir + "/images", f, "ppm");
  }
  std::string mask_path(int f) const {
    return frame_file(dir + "/gt/masks", f, "pgm");
  }
};

SequenceDir load_sequence_dir(const std::string& dir, bool need_poses) {
  SequenceDir seq;
  seq.dir = dir;
  const fs::path scans = fs::path(dir) / "scans";
  if (!fs::is_directory(scans)) {
    throw ConfigError("no scans directory under " + dir);
  }
  int count = 0;
  while (fs::exists(frame_file(dir + "/scans", count, "bin"))) ++count;
  if (count == 0) {
    throw ConfigError("no scans named NNNNNN.bin under " + dir + "/scans");
  }
  seq.frames = count;

  const fs::path pose_file = fs::path(dir) / "poses.txt";
  if (fs::exists(pose_file)) {
    seq.poses = read_pose_file(pose_file.string());
    if (static_cast<int>(seq.poses.size()) < seq.frames) {
      throw ConfigError("poses.txt has fewer entries than scans");
    }
  } else if (need_poses) {
    throw ConfigError("poses.txt missing and ICP refinement is disabled");
  } else {
    seq.poses.assign(static_cast<std::size_t>(seq.frames), Pose{});
  }

  const fs::path calib_file = fs::path(dir) / "calib.txt";
  if (fs::exists(calib_file)) {
    seq.calib = read_camera_calib(calib_file.string());
  }
  seq.has_images = fs::exists(frame_file(dir + "/images", 0, "ppm"));
  seq.has_masks = fs::exists(frame_file(dir + "/gt/masks", 0, "pgm"));
  return seq;
}

void add_detect_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--crop-tau", cfg.pipe.preprocess.crop_tau,
                  "Per-axis far-point crop distance, meters");
  cmd->add_option("--dedup-window", cfg.pipe.preprocess.dedup_window,
                  "Recent clouds compared for deduplication");
  cmd->add_option("--dedup-radius", cfg.pipe.preprocess.dedup_radius,
                  "Deduplication radius, meters");
  cmd->add_flag("--icp", cfg.pipe.preprocess.icp_enabled,
                "Refine poses with point-to-point ICP");
  cmd->add_option("--icp-max-iter", cfg.pipe.preprocess.icp_max_iter,
                  "ICP iteration cap");
  cmd->add_option("--icp-corr-dist", cfg.pipe.preprocess.icp_corr_dist,
                  "ICP correspondence cutoff, meters");
  cmd->add_option("--cell-size", cfg.pipe.ground.cell_size,
                  "Ground grid tile size, meters");
  cmd->add_option("--slope-s", cfg.pipe.ground.slope_s,
                  "Ground height-span threshold, meters");
  cmd->add_option("--sigma-m", cfg.pipe.occupancy.sigma_m,
                  "Measurement noise std, meters");
  cmd->add_option("--sigma-r", cfg.pipe.occupancy.sigma_r,
                  "Registration noise std, meters");
  cmd->add_option("--theta-scale", cfg.pipe.occupancy.theta_scale,
                  "Angular kernel scale, radians");
  cmd->add_option("--r-sup", cfg.pipe.discretize.r_sup,
                  "Discretization mass near the sensor");
  cmd->add_option("--r-inf", cfg.pipe.discretize.r_inf,
                  "Discretization mass at the farthest return");
  cmd->add_option("--k-half", cfg.pipe.window.k_half,
                  "Half window size K (output delayed K scans)");
  cmd->add_option("--octree-resolution", cfg.pipe.window.octree_resolution,
                  "Octree leaf size, meters");
  cmd->add_option("--fraction", cfg.pipe.window.leaf_sample_fraction,
                  "Leaf sample fraction");
  cmd->add_option("--leaf-majority", cfg.pipe.window.leaf_majority,
                  "Dynamic fraction extending Moving to the leaf");
  cmd->add_option("--tau-np", cfg.pipe.window.tau_np,
                  "Leaves smaller than this are tested point by point");
  cmd->add_option("--neighbor-mult", cfg.pipe.window.neighbor_angle_mult,
                  "Candidate cone half-angle in units of the resolution");
  cmd->add_option("--neighbor-cap", cfg.pipe.window.neighbor_cap,
                  "Candidate beam cap per scan");
  cmd->add_option("--seed", cfg.seed, "Subsampling RNG seed");
  cmd->add_option("--mode", cfg.mode, "discretized | pairwise")
      ->check(CLI::IsMember({"discretized", "pairwise"}));
  cmd->add_flag("--exhaustive", cfg.exhaustive,
                "Classify every point (no leaf voting)");
  cmd->add_flag("--no-image-validation", cfg.no_validation,
                "Skip the image-based false positive filter");
  cmd->add_option("--patch-h", cfg.pipe.validation.patch_height_h,
                  "Physical patch height, meters");
  cmd->add_option("--ncc-tau", cfg.pipe.validation.ncc_tau,
                  "Color dissimilarity threshold");
  cmd->add_option("--uniform-std", cfg.pipe.validation.uniform_std,
                  "Patch uniformity threshold");
  cmd->add_option("--dilation", cfg.pipe.validation.dilation_radius,
                  "Depth-map dilation radius, pixels");
  cmd->add_option("--ncc-shift", cfg.pipe.validation.ncc_search_radius,
                  "Correlation search radius, pixels");
  cmd->add_option("--ssd-tau", cfg.pipe.validation.ssd_tau,
                  "Depth dissimilarity threshold");
  cmd->add_option("--threads", cfg.pipe.threads, "Worker threads (0 = auto)");
}

// EVIDENT_MOTION_THREADS caps the worker count; 0 leaves the choice to
// the --threads flag (where 0 again means hardware concurrency).
void apply_thread_cap(RunConfig& cfg) {
  const char* env = std::getenv("EVIDENT_MOTION_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const unsigned long cap = std::strtoul(env, &end, 10);
  if (end == env || *end != '\0') {
    throw ConfigError("EVIDENT_MOTION_THREADS must be a non-negative integer");
  }
  if (cap == 0) return;
  unsigned threads = cfg.pipe.threads;
  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
  }
  cfg.pipe.threads = std::min(threads, static_cast<unsigned>(cap));
}

void finalize_config(RunConfig& cfg) {
  cfg.pipe.window.seed = cfg.seed;
  cfg.pipe.window.mode = cfg.mode == "pairwise"
                             ? WindowParams::Mode::PairwiseConflict
                             : WindowParams::Mode::Discretized;
  if (cfg.exhaustive) cfg.pipe.window.leaf_sample_fraction = 1.0;
  cfg.pipe.use_validation = !cfg.no_validation;
  apply_thread_cap(cfg);
}

void write_timing_csv(const std::string& path,
                      const std::vector<FrameResult>& results) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw FormatError("cannot open " + path);
  std::fputs("frame,preprocess_s,ground_s,detect_s,validate_s,total_s\n", f);
  for (const FrameResult& r : results) {
    std::fprintf(f, "%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.frame_index,
                 r.timing.preprocess_s, r.timing.ground_s, r.timing.detect_s,
                 r.timing.validate_s, r.timing.total_s);
  }
  std::fclose(f);
}

int cmd_detect(RunConfig& cfg) {
  finalize_config(cfg);
  const SequenceDir seq =
      load_sequence_dir(cfg.input, !cfg.pipe.preprocess.icp_enabled);
  if (cfg.pipe.use_validation && (!seq.has_images || seq.calib.width <= 0)) {
    throw ConfigError(
        "image validation needs images/ and calib.txt; "
        "pass --no-image-validation to run without them");
  }
  fs::create_directories(fs::path(cfg.output) / "labels");

  Pipeline pipeline(cfg.pipe, seq.calib);
  std::vector<FrameResult> all;
  const auto consume = [&](std::vector<FrameResult> results) {
    for (FrameResult& r : results) {
      write_label_file(frame_file(cfg.output + "/labels", r.frame_index,
                                  "label"),
                       r.labels);
      std::size_t moving = 0;
      for (const PointLabel l : r.labels) {
        if (l == PointLabel::Moving) ++moving;
      }
      std::printf("frame %06d: %zu points, %zu moving (%.3fs)\n",
                  r.frame_index, r.labels.size(), moving, r.timing.total_s);
      all.push_back(std::move(r));
    }
  };
  for (int f = 0; f < seq.frames; ++f) {
    ScanRecord scan = read_scan(seq.scan_path(f), f);
    Raster image;
    if (cfg.pipe.use_validation) {
      image = read_raster(seq.image_path(f));
    }
    consume(pipeline.push_frame(scan, seq.poses[static_cast<std::size_t>(f)],
                                std::move(image)));
  }
  consume(pipeline.finish());
  write_timing_csv(cfg.output + "/timing.csv", all);
  return 0;
}

int cmd_eval(RunConfig& cfg) {
  const SequenceDir seq = load_sequence_dir(cfg.input, true);
  if (seq.calib.width <= 0 || !seq.has_masks) {
    throw ConfigError("eval needs calib.txt and gt/masks under " + cfg.input);
  }
  std::vector<MetricsRow> rows;
  std::vector<LabelArray> labels(static_cast<std::size_t>(seq.frames));
  std::vector<ScanRecord> worlds(static_cast<std::size_t>(seq.frames));
  std::vector<CameraFrame> cams(static_cast<std::size_t>(seq.frames));
  for (int f = 0; f < seq.frames; ++f) {
    const auto i = static_cast<std::size_t>(f);
    labels[i] = read_label_file(frame_file(cfg.labels_dir, f, "label"));
    const ScanRecord scan = read_scan(seq.scan_path(f), f);
    if (labels[i].size() != scan.points.size()) {
      throw ConfigError("label count mismatches scan at frame " +
                        std::to_string(f));
    }
    worlds[i] = apply_pose(scan, seq.poses[i]);
    cams[i].calib = seq.calib;
    cams[i].pose = seq.poses[i];
    const Raster gt_mask = read_raster(seq.mask_path(f));
    const FrameEval eval = prf_frame(labels[i], worlds[i], cams[i], gt_mask);
    MetricsRow row;
    row.frame = f;
    row.tp = eval.tp;
    row.fp = eval.fp;
    row.fn = eval.fn;
    row.precision = eval.precision;
    row.recall = eval.recall;
    rows.push_back(row);
  }
  write_metrics_csv(cfg.output, rows);
  std::printf("wrote %zu frame metrics to %s\n", rows.size(),
              cfg.output.c_str());

  if (cfg.objects) {
    int n_objects = 0;
    while (fs::is_directory(fs::path(cfg.input) / "gt" / "objects" /
                            (n_objects < 10
                                 ? "0" + std::to_string(n_objects)
                                 : std::to_string(n_objects)))) {
      ++n_objects;
    }
    std::vector<std::vector<Raster>> object_masks(
        static_cast<std::size_t>(seq.frames));
    std::vector<ObjectFrame> frames;
    for (int f = 0; f < seq.frames; ++f) {
      const auto i = static_cast<std::size_t>(f);
      for (int o = 0; o < n_objects; ++o) {
        char sub[32];
        std::snprintf(sub, sizeof(sub), "gt/objects/%02d", o);
        object_masks[i].push_back(
            read_raster(frame_file(cfg.input + "/" + sub, f, "pgm")));
      }
      ObjectFrame of;
      of.labels = &labels[i];
      of.scan = &worlds[i];
      of.frame = &cams[i];
      of.object_masks = &object_masks[i];
      frames.push_back(of);
    }
    const auto counts = object_counts(frames, n_objects, ObjectCountParams{});
    for (const ObjectCount& c : counts) {
      std::printf("object %02d: %s (%d/%d frames, %lld/%lld points)\n",
                  c.object,
                  c.detected ? "detected"
                             : (c.partially ? "partially detected"
                                            : "missed"),
                  c.detected_frames, c.visible_frames,
                  static_cast<long long>(c.moving_points),
                  static_cast<long long>(c.total_points));
    }
  }
  return 0;
}

int cmd_roc(RunConfig& cfg) {
  finalize_config(cfg);
  const SequenceDir seq = load_sequence_dir(cfg.input, true);
  if (seq.calib.width <= 0 || !seq.has_masks) {
    throw ConfigError("roc needs calib.txt and gt/masks under " + cfg.input);
  }
  if (cfg.pipe.use_validation && !seq.has_images) {
    throw ConfigError(
        "image validation needs images/; pass --no-image-validation");
  }

  std::vector<ScanRecord> scans;
  std::vector<Raster> images;
  std::vector<Raster> masks;
  for (int f = 0; f < seq.frames; ++f) {
    scans.push_back(read_scan(seq.scan_path(f), f));
    masks.push_back(read_raster(seq.mask_path(f)));
    if (cfg.pipe.use_validation) {
      images.push_back(read_raster(seq.image_path(f)));
    }
  }

  const auto run_cell = [&](double sigma_r, double theta) {
    PipelineParams cell = cfg.pipe;
    cell.occupancy.sigma_r = sigma_r;
    cell.occupancy.theta_scale = theta;
    Pipeline pipeline(cell, seq.calib);
    std::vector<FrameResult> results;
    const auto consume = [&](std::vector<FrameResult> part) {
      for (FrameResult& r : part) results.push_back(std::move(r));
    };
    for (int f = 0; f < seq.frames; ++f) {
      const auto i = static_cast<std::size_t>(f);
      consume(pipeline.push_frame(
          scans[i], seq.poses[i],
          cfg.pipe.use_validation ? images[i] : Raster{}));
    }
    consume(pipeline.finish());

    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    for (const FrameResult& r : results) {
      const auto i = static_cast<std::size_t>(r.frame_index);
      const ScanRecord world = apply_pose(scans[i], seq.poses[i]);
      CameraFrame cam;
      cam.calib = seq.calib;
      cam.pose = seq.poses[i];
      const Raster pred =
          labels_to_mask(r.labels, world, cam, cfg.mask_dilation);
      const FrameEval eval = prf_masks(pred, masks[i]);
      tp += eval.tp;
      fp += eval.fp;
      fn += eval.fn;
    }
    return make_frame_eval(tp, fp, fn);
  };

  const std::vector<RocRow> rows = roc_sweep(cfg.sweep, run_cell);
  write_roc_csv(cfg.output, rows);
  std::printf("wrote %zu sweep rows to %s\n", rows.size(),
              cfg.output.c_str());
  return 0;
}

int cmd_synth(RunConfig& cfg) {
  SceneSpec spec = preset_scene(cfg.preset, cfg.frames, cfg.noise);
  if (cfg.no_camera) spec.with_camera = false;
  const Sequence seq = generate_sequence(spec, cfg.seed);
  write_sequence(seq, cfg.output);
  std::printf("wrote %d synthetic frames to %s\n", cfg.frames,
              cfg.output.c_str());
  return 0;
}

int cmd_depthmap(RunConfig& cfg) {
  const SequenceDir seq = load_sequence_dir(cfg.input, true);
  if (seq.calib.width <= 0) {
    throw ConfigError("depthmap needs calib.txt under " + cfg.input);
  }
  if (cfg.frame < 0 || cfg.frame >= seq.frames) {
    throw ConfigError("frame " + std::to_string(cfg.frame) +
                      " outside the sequence");
  }
  const ScanRecord scan = read_scan(seq.scan_path(cfg.frame), cfg.frame);
  const FilterResult cropped = crop_far(scan, cfg.pipe.preprocess);
  const auto i = static_cast<std::size_t>(cfg.frame);
  const ScanRecord world = apply_pose(cropped.scan, seq.poses[i]);
  CameraFrame frame;
  frame.calib = seq.calib;
  frame.pose = seq.poses[i];
  try {
    const DepthMap dm = build_depthmap(world, frame, cfg.pipe.validation);
    write_raster(cfg.output, dm.raster);
    std::printf("frame %d depth map written to %s (d_max %.2f m)\n",
                cfg.frame, cfg.output.c_str(), dm.d_max);
  } catch (const GeometryError& e) {
    throw GeometryError("frame " + std::to_string(cfg.frame) + ": " +
                        e.what());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moving object detection in lidar scan sequences"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key=value configuration file");
  RunConfig cfg;

  CLI::App* detect =
      app.add_subcommand("detect", "Label moving points of a sequence");
  detect->add_option("--input", cfg.input, "Sequence directory")->required();
  detect->add_option("--output", cfg.output, "Output directory")->required();
  add_detect_options(detect, cfg);

  CLI::App* eval =
      app.add_subcommand("eval", "Score labels against ground-truth masks");
  eval->add_option("--input", cfg.input, "Sequence directory")->required();
  eval->add_option("--labels", cfg.labels_dir, "Directory with NNNNNN.label")
      ->required();
  eval->add_option("--output", cfg.output, "Metrics CSV path")->required();
  eval->add_flag("--objects", cfg.objects, "Also report per-object counts");

  CLI::App* roc = app.add_subcommand(
      "roc", "Sweep sigma_r and theta, scoring dilated prediction masks");
  roc->add_option("--input", cfg.input, "Sequence directory")->required();
  roc->add_option("--output", cfg.output, "Sweep CSV path")->required();
  roc->add_option("--sigma-r-lo", cfg.sweep.sigma_r_lo, "Sweep lower bound");
  roc->add_option("--sigma-r-hi", cfg.sweep.sigma_r_hi, "Sweep upper bound");
  roc->add_option("--theta-lo", cfg.sweep.theta_lo, "Sweep lower bound");
  roc->add_option("--theta-hi", cfg.sweep.theta_hi, "Sweep upper bound");
  roc->add_option("--steps", cfg.sweep.steps, "Grid steps per axis");
  roc->add_option("--mask-dilation", cfg.mask_dilation,
                  "Prediction mask dilation, pixels");
  add_detect_options(roc, cfg);

  CLI::App* synth =
      app.add_subcommand("synth", "Generate a labeled synthetic sequence");
  synth->add_option("--preset", cfg.preset,
                    "Scene preset: moving | checker | static | flat");
  synth->add_option("--frames", cfg.frames, "Frame count");
  synth->add_option("--noise", cfg.noise, "Point noise sigma, meters");
  synth->add_option("--seed", cfg.seed, "Noise RNG seed");
  synth->add_flag("--no-camera", cfg.no_camera, "Skip image rendering");
  synth->add_option("--output", cfg.output, "Output directory")->required();

  CLI::App* depthmap = app.add_subcommand(
      "depthmap", "Render one frame's dilated lidar depth map");
  depthmap->add_option("--input", cfg.input, "Sequence directory")
      ->required();
  depthmap->add_option("--frame", cfg.frame, "Frame index")->required();
  depthmap->add_option("--output", cfg.output, "Output PGM path")->required();
  depthmap->add_option("--dilation", cfg.pipe.validation.dilation_radius,
                       "Dilation radius, pixels");
  depthmap->add_option("--crop-tau", cfg.pipe.preprocess.crop_tau,
                       "Far-point crop distance, meters");

  try {
    app.parse(argc, argv);
    if (detect->parsed()) return cmd_detect(cfg);
    if (eval->parsed()) return cmd_eval(cfg);
    if (roc->parsed()) return cmd_roc(cfg);
    if (synth->parsed()) return cmd_synth(cfg);
    if (depthmap->parsed()) return cmd_depthmap(cfg);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
