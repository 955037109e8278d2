#include "ldr/kitti_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <Eigen/SVD>
#include <png.h>

#include "ldr/error.hpp"

namespace ldr::kitti {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string(), "cannot open file for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw FormatError(path.string(), "write failed");
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& tok, const std::string& where) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw FormatError(where, "invalid number '" + tok + "'");
  return v;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

void check_rotation(const Mat3& r, const std::string& what) {
  const double ortho = (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-3 || std::abs(r.determinant() - 1.0) > 1e-3) {
    throw CalibrationError(what + " is not orthonormal (deviation " + fmt6(ortho) + ")");
  }
}

}  // namespace

// ---------------------------------------------------------------- velodyne

std::vector<LidarPoint> read_velodyne(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() % 16 != 0) {
    throw FormatError(path.string() + " @byte " + std::to_string(bytes.size() - bytes.size() % 16),
                      "size " + std::to_string(bytes.size()) + " is not a multiple of 16");
  }
  std::vector<LidarPoint> points(bytes.size() / 16);
  if (!points.empty()) std::memcpy(points.data(), bytes.data(), bytes.size());
  return points;
}

void write_velodyne(const fs::path& path, std::span<const LidarPoint> points) {
  static_assert(sizeof(LidarPoint) == 16);
  write_bytes(path, points.data(), points.size_bytes());
}

// ---------------------------------------------------------------- calib

Calibration read_calibration(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "cannot open file");
  std::map<std::string, std::vector<double>> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    std::vector<double> values;
    for (const auto& tok : split_ws(line.substr(colon + 1))) {
      values.push_back(parse_double(tok, path.string() + ":" + std::to_string(line_no)));
    }
    entries[key] = std::move(values);
  }
  auto get = [&](std::initializer_list<const char*> keys, std::size_t count) -> const std::vector<double>& {
    for (const char* k : keys) {
      auto it = entries.find(k);
      if (it == entries.end()) continue;
      if (it->second.size() != count) {
        throw CalibrationError(path.string() + ": key " + k + " has " + std::to_string(it->second.size()) +
                               " values, expected " + std::to_string(count));
      }
      return it->second;
    }
    throw CalibrationError(path.string() + ": missing key " + std::string(*keys.begin()));
  };
  const auto& p2 = get({"P2"}, 12);
  const auto& r0 = get({"R0_rect", "R_rect"}, 9);
  const auto& tr = get({"Tr_velo_to_cam", "Tr_velo_cam"}, 12);

  Mat3 r0m;
  r0m << r0[0], r0[1], r0[2], r0[3], r0[4], r0[5], r0[6], r0[7], r0[8];
  Mat3 trr;
  trr << tr[0], tr[1], tr[2], tr[4], tr[5], tr[6], tr[8], tr[9], tr[10];
  const Vec3 trt(tr[3], tr[7], tr[11]);
  check_rotation(r0m, path.string() + ": R0_rect");
  check_rotation(trr, path.string() + ": Tr_velo_to_cam rotation");
  r0m = nearest_rotation(r0m);
  trr = nearest_rotation(trr);

  Calibration calib;
  calib.rect_from_lidar.rotation = r0m * trr;
  calib.rect_from_lidar.translation = r0m * trt;

  CameraModel& cam = calib.camera;
  cam.fx = p2[0];
  cam.fy = p2[5];
  cam.cx = p2[2];
  cam.cy = p2[6];
  if (!(cam.fx > 0) || !(cam.fy > 0)) throw CalibrationError(path.string() + ": P2 focal lengths must be positive");
  // P2 = K [I | t2]; recover t2 so that cam2 = rect + t2.
  const double tz = p2[11];
  const Vec3 t2((p2[3] - cam.cx * tz) / cam.fx, (p2[7] - cam.cy * tz) / cam.fy, tz);
  cam.cam_from_lidar.rotation = calib.rect_from_lidar.rotation;
  cam.cam_from_lidar.translation = calib.rect_from_lidar.translation + t2;

  if (auto it = entries.find("image_size"); it != entries.end()) {
    if (it->second.size() != 2) throw CalibrationError(path.string() + ": image_size needs 2 values");
    cam.image_w = static_cast<int>(it->second[0]);
    cam.image_h = static_cast<int>(it->second[1]);
  }
  cam.validate();
  return calib;
}

CameraModel read_calib(const fs::path& path) { return read_calibration(path).camera; }

Calibration calibration_from_camera(const CameraModel& cam) { return {cam, cam.cam_from_lidar}; }

void write_calib(const fs::path& path, const CameraModel& cam) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(path.string(), "cannot open file for writing");
  char buf[512];
  auto proj = [&](const char* key) {
    std::snprintf(buf, sizeof buf, "%s: %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e\n",
                  key, cam.fx, 0.0, cam.cx, 0.0, 0.0, cam.fy, cam.cy, 0.0, 0.0, 0.0, 1.0, 0.0);
    out << buf;
  };
  proj("P0");
  proj("P1");
  proj("P2");
  proj("P3");
  out << "R0_rect: 1 0 0 0 1 0 0 0 1\n";
  const Mat3& r = cam.cam_from_lidar.rotation;
  const Vec3& t = cam.cam_from_lidar.translation;
  std::snprintf(buf, sizeof buf,
                "Tr_velo_to_cam: %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", r(0, 0),
                r(0, 1), r(0, 2), t(0), r(1, 0), r(1, 1), r(1, 2), t(1), r(2, 0), r(2, 1), r(2, 2), t(2));
  out << buf;
  out << "Tr_imu_to_velo: 1 0 0 0 0 1 0 0 0 0 1 0\n";
  if (cam.image_w > 0 && cam.image_h > 0) out << "image_size: " << cam.image_w << " " << cam.image_h << "\n";
}

// ---------------------------------------------------------------- labels

KittiLabel parse_label_line(const std::string& line, const std::string& where) {
  const auto f = split_ws(line);
  if (f.size() != 15 && f.size() != 16) {
    throw FormatError(where, "expected 15 or 16 fields, got " + std::to_string(f.size()));
  }
  KittiLabel l;
  l.type = f[0];
  l.truncation = parse_double(f[1], where);
  const double occ = parse_double(f[2], where);
  l.occlusion = static_cast<int>(occ);
  if (static_cast<double>(l.occlusion) != occ) throw FormatError(where, "occlusion must be an integer");
  l.alpha = parse_double(f[3], where);
  l.left = parse_double(f[4], where);
  l.top = parse_double(f[5], where);
  l.right = parse_double(f[6], where);
  l.bottom = parse_double(f[7], where);
  l.height = parse_double(f[8], where);
  l.width = parse_double(f[9], where);
  l.length = parse_double(f[10], where);
  l.location = Vec3(parse_double(f[11], where), parse_double(f[12], where), parse_double(f[13], where));
  l.rotation_y = parse_double(f[14], where);
  if (f.size() == 16) l.score = parse_double(f[15], where);
  if (l.right < l.left || l.bottom < l.top) throw FormatError(where, "2D box has right < left or bottom < top");
  if (l.type != "DontCare" && !(l.height > 0 && l.width > 0 && l.length > 0)) {
    throw FormatError(where, "non-positive dimensions for type " + l.type);
  }
  return l;
}

std::string format_label_line(const KittiLabel& l) {
  std::string s = l.type;
  auto add = [&](double v) {
    s += ' ';
    s += fmt6(v);
  };
  add(l.truncation);
  s += ' ';
  s += std::to_string(l.occlusion);
  for (double v : {l.alpha, l.left, l.top, l.right, l.bottom, l.height, l.width, l.length, l.location.x(),
                   l.location.y(), l.location.z(), l.rotation_y}) {
    add(v);
  }
  if (l.score) add(*l.score);
  return s;
}

std::vector<KittiLabel> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "cannot open file");
  std::vector<KittiLabel> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_label_line(line, path.string() + ":" + std::to_string(line_no)));
  }
  return out;
}

void write_labels(const fs::path& path, std::span<const KittiLabel> labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(path.string(), "cannot open file for writing");
  for (const auto& l : labels) out << format_label_line(l) << '\n';
}

Box3D label_to_box(const KittiLabel& label, const Calibration& calib) {
  if (!label.evaluable()) throw std::invalid_argument("label_to_box: non-evaluable label type " + label.type);
  const RigidTransform& t = calib.rect_from_lidar;
  Box3D b;
  b.length = label.length;
  b.width = label.width;
  b.height = label.height;
  const Vec3 center_rect = label.location - Vec3(0.0, 0.5 * label.height, 0.0);
  b.center = t.apply_inverse(center_rect);
  const Vec3 heading_rect(std::cos(label.rotation_y), 0.0, -std::sin(label.rotation_y));
  const Vec3 heading = t.rotation.transpose() * heading_rect;
  b.yaw = wrap_angle(std::atan2(heading.y(), heading.x()));
  return b;
}

KittiLabel box_to_label(const Box3D& box, ObjectClass cls, const Calibration& calib) {
  const RigidTransform& t = calib.rect_from_lidar;
  KittiLabel l;
  l.type = std::string(class_name(cls));
  l.height = box.height;
  l.width = box.width;
  l.length = box.length;
  const Vec3 center_rect = t.apply(box.center);
  l.location = center_rect + Vec3(0.0, 0.5 * box.height, 0.0);
  const Vec3 heading = t.rotation * Vec3(std::cos(box.yaw), std::sin(box.yaw), 0.0);
  l.rotation_y = wrap_angle(std::atan2(-heading.z(), heading.x()));
  l.alpha = wrap_angle(l.rotation_y - std::atan2(l.location.x(), l.location.z()));

  const CameraModel& cam = calib.camera;
  double u0 = 1e18, v0 = 1e18, u1 = -1e18, v1 = -1e18;
  bool any = false;
  for (const Vec3& c : box_corners(box)) {
    if (auto px = project_lidar_to_image(c, cam)) {
      any = true;
      u0 = std::min(u0, px->u);
      v0 = std::min(v0, px->v);
      u1 = std::max(u1, px->u);
      v1 = std::max(v1, px->v);
    }
  }
  if (any) {
    if (cam.image_w > 0 && cam.image_h > 0) {
      const double wmax = cam.image_w - 1.0, hmax = cam.image_h - 1.0;
      u0 = std::clamp(u0, 0.0, wmax);
      u1 = std::clamp(u1, 0.0, wmax);
      v0 = std::clamp(v0, 0.0, hmax);
      v1 = std::clamp(v1, 0.0, hmax);
    }
    l.left = u0;
    l.top = v0;
    l.right = u1;
    l.bottom = v1;
  }
  return l;
}

KittiLabel detection_to_label(const Detection& det, const Calibration& calib) {
  KittiLabel l = box_to_label(det.box, det.object_class, calib);
  l.score = det.score;
  return l;
}

// ---------------------------------------------------------------- PNG

namespace {

struct PngDecoded {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
  int channels = 0;
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  char error[256] = {0};
  const std::vector<unsigned char>* src = nullptr;
  std::size_t offset = 0;
};

void png_on_error(png_structp png, png_const_charp msg) {
  auto* d = static_cast<PngDecoded*>(png_get_error_ptr(png));
  std::snprintf(d->error, sizeof d->error, "%s", msg);
  png_longjmp(png, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

void png_read_mem(png_structp png, png_bytep out, png_size_t count) {
  auto* d = static_cast<PngDecoded*>(png_get_io_ptr(png));
  if (d->offset + count > d->src->size()) png_error(png, "unexpected end of file");
  std::memcpy(out, d->src->data() + d->offset, count);
  d->offset += count;
}

// libpng reports errors by longjmp, so nothing with a destructor lives in this frame.
bool png_decode(PngDecoded* d) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, d, png_on_error, png_on_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, d, png_read_mem);
  png_read_info(png, info);
  d->width = png_get_image_width(png, info);
  d->height = png_get_image_height(png, info);
  d->bit_depth = png_get_bit_depth(png, info);
  d->color_type = png_get_color_type(png, info);
  if (d->color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (d->color_type == PNG_COLOR_TYPE_GRAY && d->bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  d->channels = png_get_channels(png, info);
  const png_size_t stride = png_get_rowbytes(png, info);
  d->pixels.resize(stride * d->height);
  d->rows.resize(d->height);
  for (png_uint_32 r = 0; r < d->height; ++r) d->rows[r] = d->pixels.data() + r * stride;
  png_read_image(png, d->rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

struct PngEncodeJob {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 8;
  int color_type = PNG_COLOR_TYPE_GRAY;
  std::vector<png_bytep> rows;
  FILE* file = nullptr;
  char error[256] = {0};
};

void png_on_write_error(png_structp png, png_const_charp msg) {
  auto* j = static_cast<PngEncodeJob*>(png_get_error_ptr(png));
  std::snprintf(j->error, sizeof j->error, "%s", msg);
  png_longjmp(png, 1);
}

bool png_encode(PngEncodeJob* j) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, j, png_on_write_error, png_on_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, j->file);
  png_set_IHDR(png, info, j->width, j->height, j->bit_depth, j->color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, j->rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

PngDecoded decode_png_file(const fs::path& path, std::vector<unsigned char>& bytes) {
  bytes = read_bytes(path);
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError(path.string(), "not a PNG file");
  PngDecoded d;
  d.src = &bytes;
  if (!png_decode(&d)) throw FormatError(path.string(), std::string("PNG decode failed: ") + d.error);
  return d;
}

void encode_png_file(const fs::path& path, PngEncodeJob& job) {
  job.file = std::fopen(path.string().c_str(), "wb");
  if (!job.file) throw FormatError(path.string(), "cannot open file for writing");
  const bool ok = png_encode(&job);
  std::fclose(job.file);
  if (!ok) throw FormatError(path.string(), std::string("PNG encode failed: ") + job.error);
}

}  // namespace

Image read_depth_png(const fs::path& path) {
  std::vector<unsigned char> bytes;
  const PngDecoded d = decode_png_file(path, bytes);
  if (d.bit_depth != 16 || d.channels != 1) {
    throw FormatError(path.string(), "depth PNG must be 16-bit single-channel (got " + std::to_string(d.bit_depth) +
                                         "-bit, " + std::to_string(d.channels) + " channels)");
  }
  Image depth(static_cast<int>(d.width), static_cast<int>(d.height), 1);
  for (png_uint_32 v = 0; v < d.height; ++v) {
    const unsigned char* row = d.rows[v];
    for (png_uint_32 u = 0; u < d.width; ++u) {
      const unsigned value = (static_cast<unsigned>(row[2 * u]) << 8) | row[2 * u + 1];
      depth.at(static_cast<int>(u), static_cast<int>(v)) = value / 256.0;
    }
  }
  return depth;
}

void write_depth_png(const fs::path& path, const Image& depth) {
  if (depth.channels != 1) throw ShapeError("write_depth_png: depth map must have one channel");
  std::vector<unsigned char> pixels(static_cast<std::size_t>(depth.width) * depth.height * 2);
  PngEncodeJob job;
  job.width = static_cast<png_uint_32>(depth.width);
  job.height = static_cast<png_uint_32>(depth.height);
  job.bit_depth = 16;
  job.color_type = PNG_COLOR_TYPE_GRAY;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const double d = depth.at(u, v);
      const double scaled = std::isfinite(d) && d > 0 ? std::round(d * 256.0) : 0.0;
      const auto value = static_cast<unsigned>(std::clamp(scaled, 0.0, 65535.0));
      const std::size_t o = (static_cast<std::size_t>(v) * depth.width + u) * 2;
      pixels[o] = static_cast<unsigned char>(value >> 8);
      pixels[o + 1] = static_cast<unsigned char>(value & 0xff);
    }
  }
  for (int v = 0; v < depth.height; ++v) job.rows.push_back(pixels.data() + static_cast<std::size_t>(v) * depth.width * 2);
  encode_png_file(path, job);
}

Image read_rgb_png(const fs::path& path) {
  std::vector<unsigned char> bytes;
  const PngDecoded d = decode_png_file(path, bytes);
  if (d.bit_depth != 8) throw FormatError(path.string(), "RGB PNG must be 8-bit");
  Image rgb(static_cast<int>(d.width), static_cast<int>(d.height), 3);
  for (png_uint_32 v = 0; v < d.height; ++v) {
    const unsigned char* row = d.rows[v];
    for (png_uint_32 u = 0; u < d.width; ++u) {
      for (int c = 0; c < 3; ++c) {
        const int src = d.channels >= 3 ? c : 0;
        rgb.at(static_cast<int>(u), static_cast<int>(v), c) = row[u * d.channels + src] / 255.0;
      }
    }
  }
  return rgb;
}

void write_rgb_png(const fs::path& path, const Image& rgb) {
  if (rgb.channels != 3) throw ShapeError("write_rgb_png: image must have three channels");
  std::vector<unsigned char> pixels(rgb.data.size());
  for (std::size_t i = 0; i < rgb.data.size(); ++i) {
    pixels[i] = static_cast<unsigned char>(std::clamp(std::round(rgb.data[i] * 255.0), 0.0, 255.0));
  }
  PngEncodeJob job;
  job.width = static_cast<png_uint_32>(rgb.width);
  job.height = static_cast<png_uint_32>(rgb.height);
  job.bit_depth = 8;
  job.color_type = PNG_COLOR_TYPE_RGB;
  for (int v = 0; v < rgb.height; ++v) job.rows.push_back(pixels.data() + static_cast<std::size_t>(v) * rgb.width * 3);
  encode_png_file(path, job);
}

// ---------------------------------------------------------------- f32grid

namespace {
constexpr char kGridMagic[4] = {'F', '3', '2', 'G'};
constexpr std::uint32_t kGridVersion = 1;
}  // namespace

Image read_f32grid(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kGridMagic, 4) != 0) {
    throw FormatError(path.string() + " @byte 0", "missing F32G header");
  }
  std::uint32_t header[4];
  std::memcpy(header, bytes.data() + 4, sizeof header);
  if (header[0] != kGridVersion) throw FormatError(path.string() + " @byte 4", "unsupported version");
  const std::uint64_t count = static_cast<std::uint64_t>(header[1]) * header[2] * header[3];
  if (header[3] == 0 || bytes.size() != 20 + count * 4) {
    throw FormatError(path.string() + " @byte 20", "payload size does not match header dims");
  }
  Image img(static_cast<int>(header[1]), static_cast<int>(header[2]), static_cast<int>(header[3]));
  std::vector<float> samples(count);
  if (count) std::memcpy(samples.data(), bytes.data() + 20, count * 4);
  std::copy(samples.begin(), samples.end(), img.data.begin());
  return img;
}

void write_f32grid(const fs::path& path, const Image& image) {
  std::vector<unsigned char> out(20 + image.data.size() * 4);
  std::memcpy(out.data(), kGridMagic, 4);
  const std::uint32_t header[4] = {kGridVersion, static_cast<std::uint32_t>(image.width),
                                   static_cast<std::uint32_t>(image.height),
                                   static_cast<std::uint32_t>(image.channels)};
  std::memcpy(out.data() + 4, header, sizeof header);
  std::vector<float> samples(image.data.begin(), image.data.end());
  if (!samples.empty()) std::memcpy(out.data() + 20, samples.data(), samples.size() * 4);
  write_bytes(path, out.data(), out.size());
}

Image read_depth(const fs::path& path) {
  if (path.extension() == ".png") return read_depth_png(path);
  if (path.extension() == ".f32grid") {
    Image img = read_f32grid(path);
    if (img.channels != 1) throw FormatError(path.string(), "depth grid must have one channel");
    return img;
  }
  throw FormatError(path.string(), "unknown depth format (expected .png or .f32grid)");
}

Image read_image(const fs::path& path) {
  if (path.extension() == ".png") return read_rgb_png(path);
  if (path.extension() == ".f32grid") {
    Image img = read_f32grid(path);
    if (img.channels != 3) throw FormatError(path.string(), "image grid must have three channels");
    return img;
  }
  throw FormatError(path.string(), "unknown image format (expected .png or .f32grid)");
}

}  // namespace ldr::kitti
