#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ldr/geometry.hpp"
#include "ldr/image.hpp"

namespace ldr::kitti {

namespace fs = std::filesystem;

struct LidarPoint {
  float x = 0.f;
  float y = 0.f;
  float z = 0.f;
  float intensity = 0.f;

  Vec3 position() const { return {x, y, z}; }
};

/// One line of a KITTI object label file. Location is the bottom-center of the
/// box in the rectified camera frame; dims are (h, w, l).
struct KittiLabel {
  std::string type = "DontCare";
  double truncation = 0.0;
  int occlusion = 0;
  double alpha = 0.0;
  double left = 0.0, top = 0.0, right = 0.0, bottom = 0.0;
  double height = -1.0, width = -1.0, length = -1.0;
  Vec3 location = Vec3::Zero();
  double rotation_y = 0.0;
  std::optional<double> score;

  std::optional<ObjectClass> object_class() const { return parse_class(type); }
  /// Car / Pedestrian / Cyclist rows; DontCare and other types are skipped by evaluation.
  bool evaluable() const { return object_class().has_value(); }
  double bbox_height() const { return bottom - top; }
};

std::vector<LidarPoint> read_velodyne(const fs::path& path);
void write_velodyne(const fs::path& path, std::span<const LidarPoint> points);

/// Full calibration: the pinhole model of the left color camera plus the
/// rectified reference frame in which KITTI labels live. The two differ by the
/// translation folded out of P2.
struct Calibration {
  CameraModel camera;
  RigidTransform rect_from_lidar;
};

/// Reads P2, R0_rect and Tr_velo_to_cam (Tr_velo_cam also accepted). Rotations
/// must be orthonormal within 1e-3 and are then projected onto SO(3). An
/// optional non-standard `image_size: W H` line sets the image dimensions.
Calibration read_calibration(const fs::path& path);
CameraModel read_calib(const fs::path& path);
/// Writes a KITTI-shaped calib file (P0..P3 identical, R0_rect = I).
void write_calib(const fs::path& path, const CameraModel& cam);

std::vector<KittiLabel> read_labels(const fs::path& path);
void write_labels(const fs::path& path, std::span<const KittiLabel> labels);
KittiLabel parse_label_line(const std::string& line, const std::string& where);
/// Six significant digits per float; score appended when present.
std::string format_label_line(const KittiLabel& label);

/// Camera-frame label to LiDAR-frame box. Throws std::invalid_argument on
/// non-evaluable labels.
Box3D label_to_box(const KittiLabel& label, const Calibration& calib);
/// LiDAR-frame detection to a 16-field label line, with the 2D box taken from
/// the projected corners clipped to the image.
KittiLabel detection_to_label(const Detection& det, const Calibration& calib);
KittiLabel box_to_label(const Box3D& box, ObjectClass cls, const Calibration& calib);
/// Calibration for a camera whose P2 carries no translation (synthetic rigs).
Calibration calibration_from_camera(const CameraModel& cam);

/// 16-bit single-channel PNG, meters = value / 256, 0 = invalid.
Image read_depth_png(const fs::path& path);
void write_depth_png(const fs::path& path, const Image& depth);

/// Raw grid: magic "F32G", uint32 version (1), width, height, channels, then
/// LE float32 samples row-major interleaved.
Image read_f32grid(const fs::path& path);
void write_f32grid(const fs::path& path, const Image& image);

/// Depth map from `.png` or `.f32grid` by extension.
Image read_depth(const fs::path& path);

/// 8-bit gray/RGB/RGBA PNG as a 3-channel image in [0,1].
Image read_rgb_png(const fs::path& path);
void write_rgb_png(const fs::path& path, const Image& rgb);
/// RGB image from `.png` or a 3-channel `.f32grid`.
Image read_image(const fs::path& path);

}  // namespace ldr::kitti
