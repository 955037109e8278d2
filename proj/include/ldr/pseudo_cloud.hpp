#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "ldr/geometry.hpp"
#include "ldr/image.hpp"

namespace ldr {

/// Back-projected depth pixel: position (LiDAR frame), color, pixel, range.
struct PseudoPoint {
  double x = 0, y = 0, z = 0;
  double r = 0, g = 0, b = 0;
  double u = 0, v = 0;
  double d = 0;

  Vec3 position() const { return {x, y, z}; }
};

/// Pseudo points plus a dense pixel -> point lookup (-1 where no point exists).
struct PseudoCloud {
  std::vector<PseudoPoint> points;
  int width = 0;
  int height = 0;
  std::vector<int> pixel_index;
  /// Index of each point in the cloud it was cropped from (identity for fresh clouds).
  std::vector<int> source_index;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  int index_at(int u, int v) const {
    if (u < 0 || v < 0 || u >= width || v >= height) return -1;
    return pixel_index[static_cast<std::size_t>(v) * width + u];
  }
};

/// One point per pixel with positive finite depth, scanned row-major. `rgb` may
/// be empty (colors stay zero); otherwise it must match the depth dims.
PseudoCloud depth_to_pseudo_cloud(const Image& depth, const Image& rgb, const CameraModel& cam);

/// Points inside `roi` grown by `margin` on every dimension.
PseudoCloud crop_roi(const PseudoCloud& cloud, const Box3D& roi, double margin);
/// Points inside any of the grown RoIs; each point appears once.
PseudoCloud crop_rois(const PseudoCloud& cloud, std::span<const Box3D> rois, double margin);

inline int neighborhood_size(int radius) { return (2 * radius + 1) * (2 * radius + 1); }

/// Centroid first, then offsets (du, dv) in [-n, n]^2 \ {(0,0)} with dv as the
/// outer loop. Missing neighbors are replaced by the centroid itself.
std::vector<int> grid_neighbors(const PseudoCloud& cloud, int j, int radius);

/// grid_neighbors for every point, row j holding point j's neighborhood.
struct NeighborTable {
  int count = 0;
  int per_point = 0;
  std::vector<int> indices;

  int at(int j, int k) const { return indices[static_cast<std::size_t>(j) * per_point + k]; }
};
NeighborTable neighbor_table(const PseudoCloud& cloud, int radius);

/// 9 LE float32 per point in (x, y, z, r, g, b, u, v, d) order.
void write_pseudo_cloud(const std::filesystem::path& path, const PseudoCloud& cloud);
std::vector<PseudoPoint> read_pseudo_cloud(const std::filesystem::path& path);

}  // namespace ldr
