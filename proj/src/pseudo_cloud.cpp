#include "ldr/pseudo_cloud.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "ldr/error.hpp"

namespace ldr {

PseudoCloud depth_to_pseudo_cloud(const Image& depth, const Image& rgb, const CameraModel& cam) {
  if (depth.channels != 1) throw ShapeError("depth map must have one channel");
  if (!rgb.empty() && (rgb.width != depth.width || rgb.height != depth.height || rgb.channels != 3)) {
    throw ShapeError("image dims do not match depth map");
  }
  PseudoCloud cloud;
  cloud.width = depth.width;
  cloud.height = depth.height;
  cloud.pixel_index.assign(static_cast<std::size_t>(depth.width) * depth.height, -1);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const double d = depth.at(u, v);
      if (!std::isfinite(d) || d <= 0.0) continue;
      const Vec3 p = backproject_pixel(u, v, d, cam);
      PseudoPoint q;
      q.x = p.x();
      q.y = p.y();
      q.z = p.z();
      if (!rgb.empty()) {
        q.r = rgb.at(u, v, 0);
        q.g = rgb.at(u, v, 1);
        q.b = rgb.at(u, v, 2);
      }
      q.u = u;
      q.v = v;
      q.d = p.norm();
      cloud.pixel_index[static_cast<std::size_t>(v) * depth.width + u] = static_cast<int>(cloud.points.size());
      cloud.source_index.push_back(static_cast<int>(cloud.points.size()));
      cloud.points.push_back(q);
    }
  }
  return cloud;
}

namespace {

template <typename Keep>
PseudoCloud filter_cloud(const PseudoCloud& cloud, Keep keep) {
  PseudoCloud out;
  out.width = cloud.width;
  out.height = cloud.height;
  out.pixel_index.assign(cloud.pixel_index.size(), -1);
  for (std::size_t j = 0; j < cloud.points.size(); ++j) {
    const PseudoPoint& p = cloud.points[j];
    if (!keep(p)) continue;
    const int u = static_cast<int>(p.u), v = static_cast<int>(p.v);
    out.pixel_index[static_cast<std::size_t>(v) * out.width + u] = static_cast<int>(out.points.size());
    out.source_index.push_back(cloud.source_index.empty() ? static_cast<int>(j) : cloud.source_index[j]);
    out.points.push_back(p);
  }
  return out;
}

}  // namespace

PseudoCloud crop_roi(const PseudoCloud& cloud, const Box3D& roi, double margin) {
  if (margin < 0.0) throw std::invalid_argument("crop_roi: margin must be non-negative");
  return filter_cloud(cloud, [&](const PseudoPoint& p) { return point_in_box(p.position(), roi, margin); });
}

PseudoCloud crop_rois(const PseudoCloud& cloud, std::span<const Box3D> rois, double margin) {
  if (margin < 0.0) throw std::invalid_argument("crop_rois: margin must be non-negative");
  return filter_cloud(cloud, [&](const PseudoPoint& p) {
    for (const Box3D& roi : rois) {
      if (point_in_box(p.position(), roi, margin)) return true;
    }
    return false;
  });
}

std::vector<int> grid_neighbors(const PseudoCloud& cloud, int j, int radius) {
  if (radius < 1) throw std::invalid_argument("grid_neighbors: radius must be >= 1");
  if (j < 0 || static_cast<std::size_t>(j) >= cloud.points.size()) {
    throw std::out_of_range("grid_neighbors: point index out of range");
  }
  const PseudoPoint& c = cloud.points[j];
  const int u0 = static_cast<int>(c.u), v0 = static_cast<int>(c.v);
  std::vector<int> out;
  out.reserve(neighborhood_size(radius));
  out.push_back(j);
  for (int dv = -radius; dv <= radius; ++dv) {
    for (int du = -radius; du <= radius; ++du) {
      if (du == 0 && dv == 0) continue;
      const int k = cloud.index_at(u0 + du, v0 + dv);
      out.push_back(k >= 0 ? k : j);
    }
  }
  return out;
}

NeighborTable neighbor_table(const PseudoCloud& cloud, int radius) {
  NeighborTable t;
  t.count = static_cast<int>(cloud.points.size());
  t.per_point = neighborhood_size(radius);
  t.indices.reserve(static_cast<std::size_t>(t.count) * t.per_point);
  for (int j = 0; j < t.count; ++j) {
    const auto n = grid_neighbors(cloud, j, radius);
    t.indices.insert(t.indices.end(), n.begin(), n.end());
  }
  return t;
}

void write_pseudo_cloud(const std::filesystem::path& path, const PseudoCloud& cloud) {
  std::vector<float> buf;
  buf.reserve(cloud.points.size() * 9);
  for (const auto& p : cloud.points) {
    for (double v : {p.x, p.y, p.z, p.r, p.g, p.b, p.u, p.v, p.d}) buf.push_back(static_cast<float>(v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string(), "cannot open file for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

std::vector<PseudoPoint> read_pseudo_cloud(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open file");
  std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() % 36 != 0) {
    throw FormatError(path.string() + " @byte " + std::to_string(bytes.size() - bytes.size() % 36),
                      "size is not a multiple of 36");
  }
  std::vector<float> f(bytes.size() / 4);
  if (!f.empty()) std::memcpy(f.data(), bytes.data(), bytes.size());
  std::vector<PseudoPoint> out(f.size() / 9);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float* s = f.data() + i * 9;
    out[i] = PseudoPoint{s[0], s[1], s[2], s[3], s[4], s[5], s[6], s[7], s[8]};
  }
  return out;
}

}  // namespace ldr
