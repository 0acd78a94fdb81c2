#include "evmo/scan_io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace evmo {

namespace {

std::vector<char> read_all_bytes(const std::string& path) {
  std::ifstream fs(path, std::ios::binary | std::ios::ate);
  if (!fs.is_open()) {
    throw FormatError("cannot open file: " + path);
  }
  const std::streamoff size = fs.tellg();
  fs.seekg(0, std::ios::beg);
  std::vector<char> bytes(static_cast<std::size_t>(size));
  if (size > 0 && !fs.read(bytes.data(), size)) {
    throw FormatError("short read: " + path);
  }
  return bytes;
}

float f32_from_le(const char* p) {
  std::uint32_t u;
  std::memcpy(&u, p, 4);
  if constexpr (std::endian::native == std::endian::big) {
    u = __builtin_bswap32(u);
  }
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void f32_to_le(float f, char* p) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  if constexpr (std::endian::native == std::endian::big) {
    u = __builtin_bswap32(u);
  }
  std::memcpy(p, &u, 4);
}

// Locale-independent number parsing over a whitespace-split line.
std::vector<double> parse_numbers(const std::string& line) {
  std::vector<double> out;
  std::istringstream ss(line);
  ss.imbue(std::locale::classic());
  std::string tok;
  while (ss >> tok) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw FormatError("not a number: '" + tok + "'");
    }
    if (used != tok.size()) {
      throw FormatError("not a number: '" + tok + "'");
    }
    out.push_back(v);
  }
  return out;
}

Pose pose_from_row_major(const std::vector<double>& v, std::size_t offset) {
  Pose pose;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      pose.rotation(r, c) = v[offset + 4 * r + c];
    }
    pose.translation(r) = v[offset + 4 * r + 3];
  }
  return pose;
}

Pose checked_pose(const std::vector<double>& v, std::size_t offset,
                  const std::string& context) {
  Pose pose = pose_from_row_major(v, offset);
  const double err = pose.orthonormality_error();
  const double det_err = std::abs(pose.rotation.determinant() - 1.0);
  if (err > 1e-3 || det_err > 1e-3) {
    throw FormatError("invalid pose (rotation not orthonormal) in " + context);
  }
  if (!pose.is_valid()) {
    pose.reorthonormalize();
  }
  return pose;
}

}  // namespace

ScanRecord read_scan(const std::string& path, int frame_index) {
  const std::vector<char> bytes = read_all_bytes(path);
  if (bytes.size() % 16 != 0) {
    throw FormatError("malformed scan (size " + std::to_string(bytes.size()) +
                      " not a multiple of 16): " + path);
  }
  ScanRecord scan;
  scan.frame_index = frame_index;
  const std::size_t n = bytes.size() / 16;
  scan.points.reserve(n);
  scan.intensities.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const char* p = bytes.data() + 16 * i;
    const float x = f32_from_le(p);
    const float y = f32_from_le(p + 4);
    const float z = f32_from_le(p + 8);
    const float intensity = f32_from_le(p + 12);
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) ||
        !std::isfinite(intensity)) {
      throw FormatError("malformed scan (non-finite value at point " +
                        std::to_string(i) + "): " + path);
    }
    scan.points.emplace_back(x, y, z);
    scan.intensities.push_back(intensity);
  }
  return scan;
}

void write_scan(const std::string& path, const ScanRecord& scan) {
  std::ofstream fs(path, std::ios::binary | std::ios::trunc);
  if (!fs.is_open()) {
    throw FormatError("cannot open file for writing: " + path);
  }
  char buf[16];
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    f32_to_le(static_cast<float>(scan.points[i].x()), buf);
    f32_to_le(static_cast<float>(scan.points[i].y()), buf + 4);
    f32_to_le(static_cast<float>(scan.points[i].z()), buf + 8);
    f32_to_le(scan.intensities[i], buf + 12);
    fs.write(buf, 16);
  }
}

std::vector<Pose> read_pose_file(const std::string& path) {
  std::ifstream fs(path);
  if (!fs.is_open()) {
    throw FormatError("cannot open pose file: " + path);
  }
  std::vector<Pose> poses;
  std::string line;
  int lineno = 0;
  while (std::getline(fs, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;  // blank line
    }
    const std::vector<double> v = parse_numbers(line);
    if (v.size() != 12) {
      throw FormatError("pose line " + std::to_string(lineno) + " has " +
                        std::to_string(v.size()) + " numbers, expected 12: " +
                        path);
    }
    poses.push_back(checked_pose(v, 0, path + ":" + std::to_string(lineno)));
  }
  return poses;
}

void write_pose_file(const std::string& path, const std::vector<Pose>& poses) {
  std::ofstream fs(path, std::ios::trunc);
  if (!fs.is_open()) {
    throw FormatError("cannot open file for writing: " + path);
  }
  char buf[32];
  for (const Pose& p : poses) {
    std::string line;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        const double v =
            c < 3 ? p.rotation(r, c) : p.translation(r);
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        if (!line.empty()) line += ' ';
        line += buf;
      }
    }
    fs << line << '\n';
  }
}

CameraCalib read_camera_calib(const std::string& path) {
  std::ifstream fs(path);
  if (!fs.is_open()) {
    throw FormatError("cannot open calib file: " + path);
  }
  CameraCalib calib;
  bool have_p = false, have_tr = false, have_size = false;
  std::string line;
  while (std::getline(fs, line)) {
    const std::size_t colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    const std::vector<double> v = parse_numbers(line.substr(colon + 1));
    if (key == "P") {
      if (v.size() != 12) {
        throw FormatError("calib key P needs 12 numbers: " + path);
      }
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) calib.projection(r, c) = v[4 * r + c];
      calib.f_xy = calib.projection(0, 0);
      have_p = true;
    } else if (key == "Tr") {
      if (v.size() != 12) {
        throw FormatError("calib key Tr needs 12 numbers: " + path);
      }
      calib.lidar_to_camera = checked_pose(v, 0, path + " (Tr)");
      have_tr = true;
    } else if (key == "size") {
      if (v.size() != 2) {
        throw FormatError("calib key size needs 2 numbers: " + path);
      }
      calib.width = static_cast<int>(v[0]);
      calib.height = static_cast<int>(v[1]);
      have_size = true;
    }
  }
  if (!have_p || !have_tr || !have_size) {
    throw FormatError("calib file missing P, Tr or size: " + path);
  }
  if (calib.f_xy <= 0 || calib.width <= 0 || calib.height <= 0) {
    throw FormatError("calib has non-positive focal length or size: " + path);
  }
  return calib;
}

void write_camera_calib(const std::string& path, const CameraCalib& calib) {
  std::ofstream fs(path, std::ios::trunc);
  if (!fs.is_open()) {
    throw FormatError("cannot open file for writing: " + path);
  }
  char buf[32];
  auto row_major = [&](const Mat3& r, const Vec3& t) {
    std::string line;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 4; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g",
                      j < 3 ? r(i, j) : t(i));
        line += ' ';
        line += buf;
      }
    }
    return line;
  };
  std::string pline = "P:";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", calib.projection(i, j));
      pline += ' ';
      pline += buf;
    }
  fs << pline << '\n';
  fs << "Tr:"
     << row_major(calib.lidar_to_camera.rotation,
                  calib.lidar_to_camera.translation)
     << '\n';
  fs << "size: " << calib.width << ' ' << calib.height << '\n';
}

namespace {

// Reads the next header token of a PNM file, skipping whitespace and
// '#' comments.
std::string pnm_token(const std::vector<char>& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() &&
         !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    tok += bytes[pos++];
  }
  return tok;
}

int pnm_int(const std::vector<char>& bytes, std::size_t& pos,
            const std::string& path) {
  const std::string tok = pnm_token(bytes, pos);
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError("bad PNM header field '" + tok + "': " + path);
  }
  return std::stoi(tok);
}

}  // namespace

Raster read_raster(const std::string& path) {
  const std::vector<char> bytes = read_all_bytes(path);
  std::size_t pos = 0;
  const std::string magic = pnm_token(bytes, pos);
  int channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw FormatError("unknown raster magic '" + magic + "': " + path);
  }
  Raster r;
  r.channels = channels;
  r.width = pnm_int(bytes, pos, path);
  r.height = pnm_int(bytes, pos, path);
  const int maxval = pnm_int(bytes, pos, path);
  if (r.width <= 0 || r.height <= 0 || maxval <= 0 || maxval > 255) {
    throw FormatError("unsupported raster geometry or depth: " + path);
  }
  ++pos;  // single whitespace byte after maxval
  const std::size_t need =
      static_cast<std::size_t>(r.width) * r.height * channels;
  if (bytes.size() - pos < need) {
    throw FormatError("truncated raster payload (" +
                      std::to_string(bytes.size() - pos) + " of " +
                      std::to_string(need) + " bytes): " + path);
  }
  r.samples.resize(need);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < need; ++i) {
    r.samples[i] =
        static_cast<float>(static_cast<unsigned char>(bytes[pos + i])) * scale;
  }
  return r;
}

void write_raster(const std::string& path, const Raster& raster) {
  if (raster.channels != 1 && raster.channels != 3) {
    throw FormatError("raster must have 1 or 3 channels");
  }
  std::ofstream fs(path, std::ios::binary | std::ios::trunc);
  if (!fs.is_open()) {
    throw FormatError("cannot open file for writing: " + path);
  }
  fs << (raster.channels == 1 ? "P5" : "P6") << '\n'
     << raster.width << ' ' << raster.height << '\n'
     << 255 << '\n';
  std::vector<char> payload(raster.samples.size());
  for (std::size_t i = 0; i < raster.samples.size(); ++i) {
    const float v = std::min(1.0f, std::max(0.0f, raster.samples[i]));
    payload[i] = static_cast<char>(
        static_cast<unsigned char>(std::lround(v * 255.0f)));
  }
  fs.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

LabelArray read_label_file(const std::string& path) {
  const std::vector<char> bytes = read_all_bytes(path);
  LabelArray labels;
  labels.reserve(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const auto v = static_cast<unsigned char>(bytes[i]);
    if (v > 3) {
      throw FormatError("label value " + std::to_string(v) + " at byte " +
                        std::to_string(i) + " out of range: " + path);
    }
    labels.push_back(static_cast<PointLabel>(v));
  }
  return labels;
}

void write_label_file(const std::string& path, const LabelArray& labels) {
  std::ofstream fs(path, std::ios::binary | std::ios::trunc);
  if (!fs.is_open()) {
    throw FormatError("cannot open file for writing: " + path);
  }
  static_assert(sizeof(PointLabel) == 1);
  fs.write(reinterpret_cast<const char*>(labels.data()),
           static_cast<std::streamsize>(labels.size()));
}

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRow>& rows) {
  std::ofstream fs(path, std::ios::trunc);
  if (!fs.is_open()) {
    throw FormatError("cannot open file for writing: " + path);
  }
  fs << "frame,tp,fp,fn,precision,recall\n";
  char buf[64];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%lld,%lld,%lld,%.6f,%.6f", r.frame,
                  r.tp, r.fp, r.fn, r.precision, r.recall);
    fs << buf << '\n';
  }
}

}  // namespace evmo
