#include "ldr/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ldr/error.hpp"

namespace ldr {

namespace {

struct KeyedPoint {
  std::int64_t key;
  int index;
};

bool in_extent(const Vec3& p, const GridConfig& cfg) {
  return p.x() >= cfg.min_bound.x() && p.y() >= cfg.min_bound.y() && p.z() >= cfg.min_bound.z() &&
         p.x() < cfg.max_bound.x() && p.y() < cfg.max_bound.y() && p.z() < cfg.max_bound.z();
}

/// Groups points by voxel, voxels in ascending key order and points within a
/// voxel in input order.
template <typename PositionAt>
VoxelGrid group_points(std::size_t n, PositionAt position_at, const GridConfig& cfg,
                       std::vector<std::vector<int>>& members) {
  if (!(cfg.voxel_size > 0.0)) throw ConfigError("voxel size must be positive");
  VoxelGrid grid;
  grid.voxel_size = cfg.voxel_size;
  grid.origin = cfg.min_bound;
  grid.point_voxel.assign(n, -1);
  const Vec3 span = cfg.max_bound - cfg.min_bound;
  const std::int64_t ny = static_cast<std::int64_t>(std::ceil(span.y() / cfg.voxel_size)) + 1;
  const std::int64_t nz = static_cast<std::int64_t>(std::ceil(span.z() / cfg.voxel_size)) + 1;
  std::vector<KeyedPoint> keyed;
  keyed.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = position_at(i);
    if (!p.allFinite() || !in_extent(p, cfg)) continue;
    const Vec3 rel = (p - cfg.min_bound) / cfg.voxel_size;
    const std::int64_t ix = static_cast<std::int64_t>(std::floor(rel.x()));
    const std::int64_t iy = static_cast<std::int64_t>(std::floor(rel.y()));
    const std::int64_t iz = static_cast<std::int64_t>(std::floor(rel.z()));
    keyed.push_back({(ix * ny + iy) * nz + iz, static_cast<int>(i)});
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const KeyedPoint& a, const KeyedPoint& b) { return a.key < b.key; });
  members.clear();
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    if (i == 0 || keyed[i].key != keyed[i - 1].key) {
      const std::int64_t key = keyed[i].key;
      const int iz = static_cast<int>(key % nz);
      const int iy = static_cast<int>((key / nz) % ny);
      const int ix = static_cast<int>(key / (nz * ny));
      grid.coords.push_back({ix, iy, iz});
      grid.centers.push_back(cfg.min_bound + (Vec3(ix, iy, iz) + Vec3::Constant(0.5)) * cfg.voxel_size);
      members.emplace_back();
    }
    members.back().push_back(keyed[i].index);
    grid.point_voxel[keyed[i].index] = static_cast<int>(grid.centers.size()) - 1;
  }
  grid.counts.resize(members.size());
  for (std::size_t v = 0; v < members.size(); ++v) grid.counts[v] = static_cast<int>(members[v].size());
  return grid;
}

}  // namespace

VoxelGrid voxelize_lidar(std::span<const kitti::LidarPoint> points, const GridConfig& cfg) {
  std::vector<std::vector<int>> members;
  VoxelGrid grid = group_points(
      points.size(), [&](std::size_t i) { return points[i].position(); }, cfg, members);
  grid.features = Matrix::Zero(kLidarVoxelAttributes, static_cast<Eigen::Index>(grid.size()));
  for (std::size_t v = 0; v < members.size(); ++v) {
    Vec3 offset = Vec3::Zero();
    double intensity = 0.0;
    for (int i : members[v]) {
      offset += (points[i].position() - grid.centers[v]) / cfg.voxel_size;
      intensity += points[i].intensity;
    }
    const double n = static_cast<double>(members[v].size());
    grid.features.col(v) << offset.x() / n, offset.y() / n, offset.z() / n, intensity / n,
        std::min(n / kVoxelCountNorm, 1.0);
  }
  return grid;
}

VoxelGrid extract_spatial_features(std::span<const kitti::LidarPoint> points, const GridConfig& cfg,
                                   const Mlp& voxel_net) {
  VoxelGrid grid = voxelize_lidar(points, cfg);
  if (grid.size() == 0) {
    grid.features = Matrix::Zero(voxel_net.output_width(), 0);
  } else {
    grid.features = voxel_net.forward(grid.features);
  }
  return grid;
}

VoxelGrid voxelize_features(std::span<const Vec3> positions, const Matrix& payload, const GridConfig& cfg) {
  if (payload.cols() != static_cast<Eigen::Index>(positions.size())) {
    throw ShapeError("voxelize_features: payload columns must match point count");
  }
  std::vector<std::vector<int>> members;
  VoxelGrid grid = group_points(
      positions.size(), [&](std::size_t i) { return positions[i]; }, cfg, members);
  grid.features = Matrix::Zero(payload.rows(), static_cast<Eigen::Index>(grid.size()));
  for (std::size_t v = 0; v < members.size(); ++v) {
    for (int i : members[v]) grid.features.col(v) += payload.col(i);
    grid.features.col(v) /= static_cast<double>(members[v].size());
  }
  return grid;
}

Matrix voxelize_features_backward(const VoxelGrid& grid, const Matrix& d_voxel_features) {
  Matrix d_payload = Matrix::Zero(d_voxel_features.rows(), static_cast<Eigen::Index>(grid.point_voxel.size()));
  for (std::size_t i = 0; i < grid.point_voxel.size(); ++i) {
    const int v = grid.point_voxel[i];
    if (v < 0) continue;
    d_payload.col(i) = d_voxel_features.col(v) / static_cast<double>(grid.counts[v]);
  }
  return d_payload;
}

RoiCells roi_pool_cells(const VoxelGrid& grid, const Box3D& roi, int subdivisions) {
  if (subdivisions < 1) throw std::invalid_argument("roi_pool: subdivisions must be >= 1");
  const int g = subdivisions;
  RoiCells cells(static_cast<std::size_t>(g) * g * g);
  const double reach = 0.5 * std::sqrt(roi.length * roi.length + roi.width * roi.width + roi.height * roi.height);
  for (std::size_t v = 0; v < grid.size(); ++v) {
    const Vec3& c = grid.centers[v];
    if ((c - roi.center).squaredNorm() > reach * reach) continue;
    const Vec3 q = to_box_frame(c, roi);
    const double fx = (q.x() / roi.length + 0.5) * g;
    const double fy = (q.y() / roi.width + 0.5) * g;
    const double fz = (q.z() / roi.height + 0.5) * g;
    if (fx < 0 || fy < 0 || fz < 0 || fx > g || fy > g || fz > g) continue;
    const int ix = std::min(static_cast<int>(fx), g - 1);
    const int iy = std::min(static_cast<int>(fy), g - 1);
    const int iz = std::min(static_cast<int>(fz), g - 1);
    cells[(static_cast<std::size_t>(ix) * g + iy) * g + iz].push_back(static_cast<int>(v));
  }
  return cells;
}

Vector pool_cells(const VoxelGrid& grid, const RoiCells& cells) {
  const int f = grid.feature_width();
  Vector out = Vector::Zero(static_cast<Eigen::Index>(cells.size()) * f);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (cells[c].empty()) continue;
    auto seg = out.segment(static_cast<Eigen::Index>(c) * f, f);
    for (int v : cells[c]) seg += grid.features.col(v);
    seg /= static_cast<double>(cells[c].size());
  }
  return out;
}

void pool_cells_backward(const RoiCells& cells, const Vector& d_pooled, Matrix& d_voxel_features) {
  const Eigen::Index f = d_voxel_features.rows();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (cells[c].empty()) continue;
    const Vector share = d_pooled.segment(static_cast<Eigen::Index>(c) * f, f) / static_cast<double>(cells[c].size());
    for (int v : cells[c]) d_voxel_features.col(v) += share;
  }
}

RoiFeature roi_pool(const VoxelGrid& grid, const Box3D& roi, int subdivisions, FeatureSource source) {
  return {pool_cells(grid, roi_pool_cells(grid, roi, subdivisions)), source};
}

double BevClassMap::sample(double x, double y) const {
  if (nx == 0 || ny == 0) return 0.0;
  const double fx = std::clamp((x - x0) / resolution - 0.5, 0.0, nx - 1.0);
  const double fy = std::clamp((y - y0) / resolution - 0.5, 0.0, ny - 1.0);
  const int ix = std::min(static_cast<int>(fx), std::max(nx - 2, 0));
  const int iy = std::min(static_cast<int>(fy), std::max(ny - 2, 0));
  const int ix1 = std::min(ix + 1, nx - 1), iy1 = std::min(iy + 1, ny - 1);
  const double tx = fx - ix, ty = fy - iy;
  return (1 - tx) * (1 - ty) * at(ix, iy) + tx * (1 - ty) * at(ix1, iy) + (1 - tx) * ty * at(ix, iy1) +
         tx * ty * at(ix1, iy1);
}

BevClassMap make_bev_class_map(std::span<const kitti::LidarPoint> points, const BevMapConfig& cfg) {
  BevClassMap map;
  map.x0 = cfg.x_min;
  map.y0 = cfg.y_min;
  map.resolution = cfg.resolution;
  map.nx = static_cast<int>(std::ceil((cfg.x_max - cfg.x_min) / cfg.resolution));
  map.ny = static_cast<int>(std::ceil((cfg.y_max - cfg.y_min) / cfg.resolution));
  std::vector<int> counts(static_cast<std::size_t>(map.nx) * map.ny, 0);
  for (const auto& p : points) {
    if (p.z < cfg.min_height) continue;
    const int ix = static_cast<int>(std::floor((p.x - cfg.x_min) / cfg.resolution));
    const int iy = static_cast<int>(std::floor((p.y - cfg.y_min) / cfg.resolution));
    if (ix < 0 || iy < 0 || ix >= map.nx || iy >= map.ny) continue;
    ++counts[static_cast<std::size_t>(ix) * map.ny + iy];
  }
  map.values.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) map.values[i] = 1.0 - std::exp(-counts[i] / cfg.saturation);
  return map;
}

double psw_score(const BevClassMap& map, const Box3D& box, int samples) {
  if (samples < 1) throw std::invalid_argument("psw_score: samples must be >= 1");
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  double acc = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double lx = ((i + 0.5) / samples - 0.5) * box.length;
    for (int j = 0; j < samples; ++j) {
      const double ly = ((j + 0.5) / samples - 0.5) * box.width;
      acc += map.sample(box.center.x() + lx * c - ly * s, box.center.y() + lx * s + ly * c);
    }
  }
  return std::clamp(acc / (samples * samples), 0.0, 1.0);
}

BoxResidual encode_box(const Box3D& t, const Box3D& a) {
  const double diag = std::hypot(a.length, a.width);
  return {(t.center.x() - a.center.x()) / diag,
          (t.center.y() - a.center.y()) / diag,
          (t.center.z() - a.center.z()) / a.height,
          std::log(t.length / a.length),
          std::log(t.width / a.width),
          std::log(t.height / a.height),
          wrap_angle(t.yaw - a.yaw)};
}

Box3D decode_box(const BoxResidual& r, const Box3D& a) {
  const double diag = std::hypot(a.length, a.width);
  Box3D b;
  b.center = Vec3(a.center.x() + r[0] * diag, a.center.y() + r[1] * diag, a.center.z() + r[2] * a.height);
  b.length = a.length * std::exp(std::clamp(r[3], -kMaxLogRatio, kMaxLogRatio));
  b.width = a.width * std::exp(std::clamp(r[4], -kMaxLogRatio, kMaxLogRatio));
  b.height = a.height * std::exp(std::clamp(r[5], -kMaxLogRatio, kMaxLogRatio));
  b.yaw = wrap_angle(a.yaw + r[6]);
  return b;
}

std::array<double, 7> decode_box_jacobian(const BoxResidual& r, const Box3D& a) {
  const double diag = std::hypot(a.length, a.width);
  const Box3D b = decode_box(r, a);
  auto size_term = [](double ri, double out) { return std::abs(ri) < kMaxLogRatio ? out : 0.0; };
  return {diag, diag, a.height, size_term(r[3], b.length), size_term(r[4], b.width), size_term(r[5], b.height), 1.0};
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

DetectionHead::DetectionHead(int in_width, int hidden, Rng& rng, double output_gain)
    : cls({in_width, hidden, 1}, Activation::relu, Activation::identity, rng, output_gain),
      reg({in_width, hidden, 7}, Activation::relu, Activation::identity, rng, output_gain) {}

HeadOutput DetectionHead::forward(const Vector& feature) const {
  HeadOutput out;
  out.logit = cls.forward(feature)(0, 0);
  const Matrix r = reg.forward(feature);
  for (int k = 0; k < 7; ++k) out.residual[k] = r(k, 0);
  return out;
}

void DetectionHead::scale_input(double s) {
  cls.scale_input(s);
  reg.scale_input(s);
}

void DetectionHead::zero_grad() {
  cls.zero_grad();
  reg.zero_grad();
}

void DetectionHead::collect_parameters(std::vector<ParamTensor>& out, const std::string& prefix) {
  cls.collect_parameters(out, prefix + ".cls");
  reg.collect_parameters(out, prefix + ".reg");
}

std::vector<Detection> stage1_refine(const VoxelGrid& lidar_grid, std::span<const Proposal> proposals,
                                     const BevClassMap& map, const DetectionHead& head, const RefineConfig& cfg) {
  std::vector<Detection> out;
  out.reserve(proposals.size());
  for (const Proposal& p : proposals) {
    const RoiFeature f = roi_pool(lidar_grid, p.box, cfg.subdivisions, FeatureSource::lidar);
    const HeadOutput h = head.forward(f.values);
    Detection d;
    d.box = decode_box(h.residual, p.box);
    d.score = 0.5 * (h.probability() + psw_score(map, d.box, cfg.psw_samples));
    d.object_class = p.object_class;
    out.push_back(d);
  }
  return out;
}

RoiFeature fuse_roi_features(const RoiFeature& pseudo, const RoiFeature& lidar, const Mlp& fusion) {
  if (pseudo.source != FeatureSource::pseudo || lidar.source != FeatureSource::lidar) {
    throw std::invalid_argument("fuse_roi_features: expects one pseudo and one LiDAR feature");
  }
  Vector cat(pseudo.values.size() + lidar.values.size());
  cat << pseudo.values, lidar.values;
  return {fusion.forward(cat), FeatureSource::fused};
}

std::vector<Detection> stage2_refine(const VoxelGrid& lidar_grid, const VoxelGrid& pseudo_grid,
                                     std::span<const Detection> rois, const DetectionHead& head, const Mlp& fusion,
                                     const RefineConfig& cfg) {
  std::vector<Detection> out;
  out.reserve(rois.size());
  for (const Detection& roi : rois) {
    const RoiFeature fc = roi_pool(pseudo_grid, roi.box, cfg.subdivisions, FeatureSource::pseudo);
    const RoiFeature fl = roi_pool(lidar_grid, roi.box, cfg.subdivisions, FeatureSource::lidar);
    const HeadOutput h = head.forward(fuse_roi_features(fc, fl, fusion).values);
    Detection d;
    d.box = decode_box(h.residual, roi.box);
    d.score = h.probability();
    d.object_class = roi.object_class;
    out.push_back(d);
  }
  return out;
}

}  // namespace ldr
