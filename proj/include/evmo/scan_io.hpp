#pragma once

#include <string>
#include <vector>

#include "evmo/types.hpp"

namespace evmo {

/// File readers and writers for every on-disk format used by the pipeline.
/// All functions are pure and locale-independent; binary layouts are
/// little-endian regardless of host order.

/// Reads a binary scan: little-endian float32 quadruples (x, y, z, intensity).
/// A zero-byte file is a valid empty scan. Throws FormatError when the byte
/// size is not a multiple of 16 or any value is non-finite.
ScanRecord read_scan(const std::string& path, int frame_index);

/// Writes a scan in the same binary layout read_scan parses.
void write_scan(const std::string& path, const ScanRecord& scan);

/// Reads a pose file: one pose per line, 12 whitespace-separated numbers
/// forming a row-major 3x4 [R|t]. Rotations within 1e-3 of orthonormal are
/// re-orthonormalized; anything farther is rejected.
std::vector<Pose> read_pose_file(const std::string& path);

void write_pose_file(const std::string& path, const std::vector<Pose>& poses);

/// Reads a calibration file with keys "P" (3x4 projection), "Tr" (3x4
/// lidar-to-camera) and "size" (width height).
CameraCalib read_camera_calib(const std::string& path);

void write_camera_calib(const std::string& path, const CameraCalib& calib);

/// Reads a binary PGM (P5) or PPM (P6) raster, 8-bit, scaled to [0,1].
Raster read_raster(const std::string& path);

/// Writes P5 for single-channel rasters and P6 for RGB, maxval 255.
void write_raster(const std::string& path, const Raster& raster);

/// Label files are raw bytes, one per point.
LabelArray read_label_file(const std::string& path);

void write_label_file(const std::string& path, const LabelArray& labels);

/// One row of the per-frame metrics CSV.
struct MetricsRow {
  int frame = 0;
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Header: "frame,tp,fp,fn,precision,recall".
void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRow>& rows);

}  // namespace evmo
