#pragma once

#include <array>
#include <span>
#include <vector>

#include "ldr/geometry.hpp"
#include "ldr/kitti_io.hpp"
#include "ldr/mlp.hpp"

namespace ldr {

struct GridConfig {
  double voxel_size = 0.2;
  Vec3 min_bound{0.0, -40.0, -3.0};
  Vec3 max_bound{80.0, 40.0, 2.0};
};

/// Sparse voxel grid: occupied voxels sorted by integer coordinate, each with
/// a feature column.
struct VoxelGrid {
  double voxel_size = 0.2;
  Vec3 origin = Vec3::Zero();
  std::vector<std::array<int, 3>> coords;
  std::vector<Vec3> centers;
  std::vector<int> counts;
  Matrix features;  // F x V
  /// Voxel of each input point, -1 when the point fell outside the extent.
  std::vector<int> point_voxel;

  std::size_t size() const { return centers.size(); }
  int feature_width() const { return static_cast<int>(features.rows()); }
};

inline constexpr int kLidarVoxelAttributes = 5;  // mean offset (3), mean intensity, normalized count
inline constexpr double kVoxelCountNorm = 8.0;

/// Raw per-voxel attributes of LiDAR points: mean offset from the voxel center
/// in voxel units, mean intensity and min(count / 8, 1).
VoxelGrid voxelize_lidar(std::span<const kitti::LidarPoint> points, const GridConfig& cfg);
/// voxelize_lidar followed by the shared voxel MLP.
VoxelGrid extract_spatial_features(std::span<const kitti::LidarPoint> points, const GridConfig& cfg,
                                   const Mlp& voxel_net);

/// Voxelizes arbitrary per-point payloads (F x N); each voxel feature is the
/// mean payload of its points.
VoxelGrid voxelize_features(std::span<const Vec3> positions, const Matrix& payload, const GridConfig& cfg);
/// Gradient of voxelize_features w.r.t. the payload.
Matrix voxelize_features_backward(const VoxelGrid& grid, const Matrix& d_voxel_features);

enum class FeatureSource { lidar, pseudo, fused };

struct RoiFeature {
  Vector values;
  FeatureSource source = FeatureSource::lidar;
};

/// Voxel indices per sub-cell; cell (ix, iy, iz) sits at (ix * G + iy) * G + iz
/// with x along the box length.
using RoiCells = std::vector<std::vector<int>>;

RoiCells roi_pool_cells(const VoxelGrid& grid, const Box3D& roi, int subdivisions);
/// Concatenated per-cell mean features, zeros for empty cells.
Vector pool_cells(const VoxelGrid& grid, const RoiCells& cells);
void pool_cells_backward(const RoiCells& cells, const Vector& d_pooled, Matrix& d_voxel_features);
RoiFeature roi_pool(const VoxelGrid& grid, const Box3D& roi, int subdivisions, FeatureSource source);

/// BEV objectness grid; bilinear between cell centers, clamped at the border.
struct BevClassMap {
  double x0 = 0.0;
  double y0 = 0.0;
  double resolution = 0.4;
  int nx = 0;
  int ny = 0;
  std::vector<double> values;  // row ix * ny + iy

  double at(int ix, int iy) const { return values[static_cast<std::size_t>(ix) * ny + iy]; }
  double& at(int ix, int iy) { return values[static_cast<std::size_t>(ix) * ny + iy]; }
  double sample(double x, double y) const;
};

struct BevMapConfig {
  double x_min = 0.0, x_max = 80.0;
  double y_min = -40.0, y_max = 40.0;
  double resolution = 0.4;
  /// Points below this height are treated as ground and ignored.
  double min_height = -1.4;
  double saturation = 3.0;
};

/// Stand-in for the RPN classification map: 1 - exp(-n / saturation) over
/// the above-ground point count n of each cell.
BevClassMap make_bev_class_map(std::span<const kitti::LidarPoint> points, const BevMapConfig& cfg);

/// Mean of the map over G x G symmetric samples of the rotated footprint.
double psw_score(const BevClassMap& map, const Box3D& box, int samples);

/// (dx, dy, dz, log dl, log dw, log dh, dyaw): center offsets over the anchor
/// BEV diagonal (z over anchor height), log size ratios, raw yaw difference.
using BoxResidual = std::array<double, 7>;
inline constexpr double kMaxLogRatio = 4.0;

BoxResidual encode_box(const Box3D& target, const Box3D& anchor);
Box3D decode_box(const BoxResidual& r, const Box3D& anchor);
/// d(x, y, z, l, w, h, yaw) / d residual; the codec is separable so this is a diagonal.
std::array<double, 7> decode_box_jacobian(const BoxResidual& r, const Box3D& anchor);

double sigmoid(double x);

struct HeadOutput {
  double logit = 0.0;
  BoxResidual residual{};

  double probability() const { return sigmoid(logit); }
};

/// Classification (1 logit) and regression (7 residuals) MLPs over one RoI feature.
struct DetectionHead {
  Mlp cls;
  Mlp reg;

  DetectionHead() = default;
  DetectionHead(int in_width, int hidden, Rng& rng, double output_gain);

  int input_width() const { return cls.input_width(); }
  HeadOutput forward(const Vector& feature) const;
  void zero_grad();
  void collect_parameters(std::vector<ParamTensor>& out, const std::string& prefix);
  void scale_input(double s);
};

struct RefineConfig {
  int subdivisions = 6;
  int psw_samples = 4;
};

struct Proposal {
  Box3D box;
  ObjectClass object_class = ObjectClass::car;
};

/// First-stage detections d^L, index-aligned with `proposals`.
std::vector<Detection> stage1_refine(const VoxelGrid& lidar_grid, std::span<const Proposal> proposals,
                                     const BevClassMap& map, const DetectionHead& head, const RefineConfig& cfg);

/// Concatenation (pseudo, LiDAR) through the shared fusion MLP.
RoiFeature fuse_roi_features(const RoiFeature& pseudo, const RoiFeature& lidar, const Mlp& fusion);

/// Second-stage detections d^M, index-aligned with `rois` (the stage-1 output).
std::vector<Detection> stage2_refine(const VoxelGrid& lidar_grid, const VoxelGrid& pseudo_grid,
                                     std::span<const Detection> rois, const DetectionHead& head, const Mlp& fusion,
                                     const RefineConfig& cfg);

}  // namespace ldr
