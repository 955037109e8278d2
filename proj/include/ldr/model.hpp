#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ldr/detector.hpp"
#include "ldr/hpr.hpp"
#include "ldr/pseudo_cloud.hpp"

namespace ldr {

struct ModelConfig {
  HprConfig hpr;
  GridConfig grid;
  RefineConfig refine;
  BevMapConfig bev;
  int voxel_hidden = 16;
  int voxel_width = 8;
  int head_hidden = 32;
  int fusion_width = 64;
  double crop_margin = 0.5;
  /// Init gain of every head's output layer.
  double head_output_gain = 1.0;
  /// Input multiplier of the nets reading pooled RoI vectors (see
  /// Mlp::scale_input); sets how fast their first layers move under SGD.
  double roi_input_scale = 1.0;

  int lidar_feature_width() const;
  int pseudo_feature_width() const;
  void validate() const;
  /// key = value lines, all values printed round-trip exact.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
};

/// Every trainable network of the two-stage detector.
struct Model {
  ModelConfig config;
  Mlp voxel_net;
  HprParams hpr;
  DetectionHead stage1_head;
  Mlp fusion;
  DetectionHead stage2_head;
  /// Single-modality auxiliary heads on f^{L'} and f^C.
  DetectionHead lidar_aux_head;
  DetectionHead pseudo_aux_head;

  Model() = default;
  Model(const ModelConfig& cfg, std::uint64_t seed);

  /// Views into this object, in checkpoint order. Invalidated by copies/moves.
  std::vector<ParamTensor> parameters();
  std::size_t parameter_count();
  void zero_grad();
};

/// S^L for a point set.
VoxelGrid lidar_feature_grid(const Model& model, std::span<const kitti::LidarPoint> points);
/// S^C: HPR over the union crop around `rois`, voxelized with the point
/// encodings as payload.
VoxelGrid pseudo_feature_grid(const Model& model, const PseudoCloud& cloud, std::span<const Detection> rois);
/// Pseudo points as zero-intensity LiDAR points.
std::vector<kitti::LidarPoint> merge_points(std::span<const kitti::LidarPoint> real, const PseudoCloud& pseudo);

/// Magic "LDRCKPT\0", u32 version, config echo, then per tensor its name,
/// element count and LE float64 values.
void save_checkpoint(const std::filesystem::path& path, Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace ldr
