#include "ldr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include "ldr/detail/polygon.hpp"
#include "ldr/error.hpp"

namespace ldr {

double wrap_angle(double angle) {
  double a = std::fmod(angle, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::compose(const RigidTransform& inner) const {
  RigidTransform out;
  out.rotation = rotation * inner.rotation;
  out.translation = rotation * inner.translation + translation;
  return out;
}

RigidTransform RigidTransform::yaw_about_z(double yaw, const Vec3& translation) {
  RigidTransform t;
  t.rotation = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
  t.translation = translation;
  return t;
}

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw CalibrationError("focal lengths must be positive");
  const Mat3& r = cam_from_lidar.rotation;
  const double ortho = (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= 1e-9) || std::abs(r.determinant() - 1.0) > 1e-9) {
    throw CalibrationError("cam_from_lidar rotation is not a proper rotation");
  }
  if (!cam_from_lidar.translation.allFinite()) throw CalibrationError("non-finite translation");
}

std::optional<PixelProjection> project_lidar_to_image(const Vec3& p, const CameraModel& cam) {
  const Vec3 c = cam.cam_from_lidar.apply(p);
  if (c.z() <= 1e-6) return std::nullopt;
  return PixelProjection{cam.fx * c.x() / c.z() + cam.cx, cam.fy * c.y() / c.z() + cam.cy, c.z()};
}

Vec3 backproject_pixel(double u, double v, double depth, const CameraModel& cam) {
  if (!std::isfinite(depth) || depth <= 0.0) {
    throw std::invalid_argument("backproject_pixel: depth must be positive and finite");
  }
  const Vec3 c((u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth);
  return cam.cam_from_lidar.apply_inverse(c);
}

std::string_view class_name(ObjectClass c) {
  switch (c) {
    case ObjectClass::car:
      return "Car";
    case ObjectClass::pedestrian:
      return "Pedestrian";
    case ObjectClass::cyclist:
      return "Cyclist";
  }
  return "Car";
}

std::optional<ObjectClass> parse_class(std::string_view name) {
  for (ObjectClass c : kAllClasses) {
    if (class_name(c) == name) return c;
  }
  return std::nullopt;
}

std::array<Vec3, 8> box_corners(const Box3D& b) {
  const double sx[4] = {1, -1, -1, 1};
  const double sy[4] = {1, 1, -1, -1};
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  std::array<Vec3, 8> out;
  for (int face = 0; face < 2; ++face) {
    const double lz = (face == 0 ? -0.5 : 0.5) * b.height;
    for (int i = 0; i < 4; ++i) {
      const double lx = 0.5 * b.length * sx[i];
      const double ly = 0.5 * b.width * sy[i];
      out[face * 4 + i] = b.center + Vec3(lx * c - ly * s, lx * s + ly * c, lz);
    }
  }
  return out;
}

std::array<Vec2, 4> bev_corners(const Box3D& b) {
  const auto corners = box_corners(b);
  return {corners[0].head<2>(), corners[1].head<2>(), corners[2].head<2>(), corners[3].head<2>()};
}

Vec3 to_box_frame(const Vec3& p, const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const Vec3 d = p - b.center;
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z()};
}

bool point_in_box(const Vec3& p, const Box3D& b, double margin) {
  const Vec3 q = to_box_frame(p, b);
  return std::abs(q.x()) <= 0.5 * b.length + margin && std::abs(q.y()) <= 0.5 * b.width + margin &&
         std::abs(q.z()) <= 0.5 * b.height + margin;
}

Box3D transform_box(const Box3D& b, const RigidTransform& t) {
  Box3D out = b;
  out.center = t.apply(b.center);
  out.yaw = wrap_angle(b.yaw + std::atan2(t.rotation(1, 0), t.rotation(0, 0)));
  return out;
}

namespace {

detail::Poly<double> footprint(const Box3D& b) {
  return detail::rect(b.center.x(), b.center.y(), b.length, b.width, b.yaw);
}

double z_overlap(const Box3D& a, const Box3D& b) {
  return std::max(0.0, std::min(a.top(), b.top()) - std::max(a.bottom(), b.bottom()));
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

double iou_bev(const Box3D& a, const Box3D& b) {
  const auto o = detail::bev_overlap(footprint(a), footprint(b), false);
  if (o.inter_area <= 0.0) return 0.0;
  return clamp01(o.inter_area / (o.area_a + o.area_b - o.inter_area));
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double dz = z_overlap(a, b);
  if (dz <= 0.0) return 0.0;
  const auto o = detail::bev_overlap(footprint(a), footprint(b), false);
  const double inter = o.inter_area * dz;
  if (inter <= 0.0) return 0.0;
  return clamp01(inter / (a.volume() + b.volume() - inter));
}

double giou_bev(const Box3D& a, const Box3D& b) {
  const auto o = detail::bev_overlap(footprint(a), footprint(b), true);
  const double uni = o.area_a + o.area_b - o.inter_area;
  const double hull = std::max(o.hull_area, uni);
  const double iou = clamp01(o.inter_area / uni);
  return iou - (hull - uni) / hull;
}

double giou_3d(const Box3D& a, const Box3D& b) {
  const std::array<double, 7> pa{a.center.x(), a.center.y(), a.center.z(), a.length, a.width, a.height, a.yaw};
  const std::array<double, 7> pb{b.center.x(), b.center.y(), b.center.z(), b.length, b.width, b.height, b.yaw};
  return detail::giou_3d_generic(pa, pb);
}

GiouGradient giou_3d_with_gradient(const Box3D& pred, const Box3D& gt) {
  using Ad = Eigen::AutoDiffScalar<Eigen::Matrix<double, 7, 1>>;
  const double pv[7] = {pred.center.x(), pred.center.y(), pred.center.z(), pred.length,
                        pred.width,      pred.height,      pred.yaw};
  std::array<Ad, 7> pa;
  for (int i = 0; i < 7; ++i) pa[i] = Ad(pv[i], 7, i);
  const std::array<Ad, 7> pb{Ad(gt.center.x()), Ad(gt.center.y()), Ad(gt.center.z()), Ad(gt.length),
                             Ad(gt.width),      Ad(gt.height),      Ad(gt.yaw)};
  const Ad g = detail::giou_3d_generic(pa, pb);
  GiouGradient out;
  out.value = g.value();
  for (int i = 0; i < 7; ++i) out.d_pred[i] = g.derivatives()(i);
  return out;
}

std::vector<std::size_t> nms_indices(std::span<const Detection> dets, double iou_thresh) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (iou_bev(dets[idx].box, dets[k].box) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_thresh) {
  std::vector<Detection> out;
  for (std::size_t i : nms_indices(dets, iou_thresh)) out.push_back(dets[i]);
  return out;
}

}  // namespace ldr
