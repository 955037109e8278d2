#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace ldr {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.transpose() * (p - translation); }
  RigidTransform inverse() const;
  /// (*this) after `inner`: x -> this(inner(x)).
  RigidTransform compose(const RigidTransform& inner) const;

  static RigidTransform yaw_about_z(double yaw, const Vec3& translation = Vec3::Zero());
};

/// Pinhole camera. `cam_from_lidar` maps LiDAR-frame points into the camera
/// frame (x right, y down, z forward).
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  RigidTransform cam_from_lidar;
  int image_w = 0;
  int image_h = 0;

  /// Throws CalibrationError on non-positive focal lengths or a rotation that
  /// is not orthonormal with determinant +1 (tolerance 1e-9).
  void validate() const;
};

struct PixelProjection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Returns nullopt when the point is behind the camera (z_c <= 1e-6).
std::optional<PixelProjection> project_lidar_to_image(const Vec3& p, const CameraModel& cam);

/// Inverse of project_lidar_to_image. Throws std::invalid_argument when depth is
/// not positive and finite.
Vec3 backproject_pixel(double u, double v, double depth, const CameraModel& cam);

enum class ObjectClass { car = 0, pedestrian = 1, cyclist = 2 };

inline constexpr std::array<ObjectClass, 3> kAllClasses = {ObjectClass::car, ObjectClass::pedestrian,
                                                           ObjectClass::cyclist};

std::string_view class_name(ObjectClass c);
/// Accepts KITTI type names ("Car", "Pedestrian", "Cyclist"); anything else is nullopt.
std::optional<ObjectClass> parse_class(std::string_view name);

/// Oriented box in the LiDAR frame. Yaw rotates about +z, zero along +x;
/// `length` runs along the heading, `width` across it.
struct Box3D {
  Vec3 center = Vec3::Zero();
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  double yaw = 0.0;

  double volume() const { return length * width * height; }
  double bottom() const { return center.z() - 0.5 * height; }
  double top() const { return center.z() + 0.5 * height; }
};

struct Detection {
  Box3D box;
  double score = 0.0;
  ObjectClass object_class = ObjectClass::car;
};

/// Corners 0-3 are the bottom face counter-clockwise starting at the local
/// (+x, +y) corner; corners 4-7 repeat the same order on the top face.
std::array<Vec3, 8> box_corners(const Box3D& b);
std::array<Vec2, 4> bev_corners(const Box3D& b);

/// Point expressed in the box frame (origin at center, axes along length/width/height).
Vec3 to_box_frame(const Vec3& p, const Box3D& b);
/// Closed containment test on the box grown by `margin` on every side.
bool point_in_box(const Vec3& p, const Box3D& b, double margin = 0.0);

Box3D transform_box(const Box3D& b, const RigidTransform& t_about_z);

double iou_bev(const Box3D& a, const Box3D& b);
double iou_3d(const Box3D& a, const Box3D& b);
/// Generalized IoU on the BEV footprints using the exact convex hull.
double giou_bev(const Box3D& a, const Box3D& b);
/// BEV hull area times the union z-span as enclosing volume.
double giou_3d(const Box3D& a, const Box3D& b);

/// Value and gradient of giou_3d with respect to (x, y, z, l, w, h, yaw) of `a`.
struct GiouGradient {
  double value = 0.0;
  std::array<double, 7> d_pred{};
};
GiouGradient giou_3d_with_gradient(const Box3D& pred, const Box3D& gt);

/// Greedy BEV NMS. Returns indices into `dets` in descending score order;
/// equal scores keep the lower input index first.
std::vector<std::size_t> nms_indices(std::span<const Detection> dets, double iou_thresh);
std::vector<Detection> nms(std::span<const Detection> dets, double iou_thresh);

}  // namespace ldr
