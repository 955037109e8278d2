#include "ldr/cascade.hpp"

#include <cmath>

#include "ldr/error.hpp"

namespace ldr {

std::string_view mode_name(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::stage1: return "stage1";
    case PipelineMode::stage2: return "stage2";
    case PipelineMode::cascade: return "cascade";
    case PipelineMode::pseudo: return "pseudo";
  }
  return "?";
}

std::optional<PipelineMode> parse_mode(std::string_view name) {
  for (auto m : {PipelineMode::stage1, PipelineMode::stage2, PipelineMode::cascade, PipelineMode::pseudo}) {
    if (name == mode_name(m)) return m;
  }
  return std::nullopt;
}

void PipelineConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(nms_threshold > 0.0 && nms_threshold <= 1.0)) throw ConfigError("nms_threshold must lie in (0, 1]");
  if (!(score_floor >= 0.0 && score_floor <= 1.0)) throw ConfigError("score_floor must lie in [0, 1]");
}

namespace {

double fuse_yaw(double yaw_l, double yaw_m, double alpha) {
  if (alpha == 1.0 || yaw_l == yaw_m) return yaw_l;
  if (alpha == 0.0) return yaw_m;
  const double c = alpha * std::cos(yaw_l) + (1.0 - alpha) * std::cos(yaw_m);
  const double s = alpha * std::sin(yaw_l) + (1.0 - alpha) * std::sin(yaw_m);
  if (std::hypot(c, s) < 1e-12) return yaw_l;
  return wrap_angle(std::atan2(s, c));
}

}  // namespace

std::vector<Detection> fuse_instances(std::span<const Detection> d_l, std::span<const Detection> d_m, double alpha) {
  if (d_l.size() != d_m.size()) {
    throw std::invalid_argument("fuse_instances: " + std::to_string(d_l.size()) + " stage-1 vs " +
                                std::to_string(d_m.size()) + " stage-2 detections");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("fuse_instances: alpha outside [0, 1]");
  std::vector<Detection> out(d_l.size());
  for (std::size_t i = 0; i < d_l.size(); ++i) {
    const Detection& l = d_l[i];
    const Detection& m = d_m[i];
    Detection& f = out[i];
    // lerp is exact at both endpoints and when the two sides agree.
    f.score = std::lerp(m.score, l.score, alpha);
    for (int k = 0; k < 3; ++k) f.box.center[k] = std::lerp(m.box.center[k], l.box.center[k], alpha);
    f.box.length = std::lerp(m.box.length, l.box.length, alpha);
    f.box.width = std::lerp(m.box.width, l.box.width, alpha);
    f.box.height = std::lerp(m.box.height, l.box.height, alpha);
    f.box.yaw = fuse_yaw(l.box.yaw, m.box.yaw, alpha);
    f.object_class = l.object_class;
  }
  return out;
}

StageOutputs run_stages(const FrameInput& frame, const Model& model, const PipelineConfig& cfg) {
  cfg.validate();
  const bool needs_pseudo = cfg.mode != PipelineMode::stage1;
  if (needs_pseudo && !frame.pseudo) {
    throw ConfigError(std::string("mode '") + std::string(mode_name(cfg.mode)) + "' needs a pseudo point cloud");
  }
  StageOutputs out;
  std::vector<kitti::LidarPoint> merged;
  std::span<const kitti::LidarPoint> stage1_points = frame.points;
  if (cfg.mode == PipelineMode::pseudo) {
    merged = merge_points(frame.points, *frame.pseudo);
    stage1_points = merged;
  }
  const VoxelGrid lidar = lidar_feature_grid(model, stage1_points);
  const BevClassMap map = make_bev_class_map(stage1_points, model.config.bev);
  out.stage1 = stage1_refine(lidar, frame.proposals, map, model.stage1_head, model.config.refine);
  if (!needs_pseudo) return out;

  const VoxelGrid pseudo = pseudo_feature_grid(model, *frame.pseudo, out.stage1);
  out.stage2 = stage2_refine(lidar, pseudo, out.stage1, model.stage2_head, model.fusion, model.config.refine);
  if (cfg.mode != PipelineMode::stage2) out.fused = fuse_instances(out.stage1, out.stage2, cfg.alpha);
  return out;
}

std::vector<Detection> postprocess(std::span<const Detection> dets, const PipelineConfig& cfg) {
  std::vector<Detection> out;
  for (ObjectClass c : kAllClasses) {
    std::vector<Detection> same;
    for (const auto& d : dets) {
      if (d.object_class == c) same.push_back(d);
    }
    for (const auto& d : nms(same, cfg.nms_threshold)) {
      if (d.score >= cfg.score_floor) out.push_back(d);
    }
  }
  return out;
}

std::vector<Detection> run_pipeline(const FrameInput& frame, const Model& model, const PipelineConfig& cfg) {
  const StageOutputs stages = run_stages(frame, model, cfg);
  switch (cfg.mode) {
    case PipelineMode::stage1: return postprocess(stages.stage1, cfg);
    case PipelineMode::stage2: return postprocess(stages.stage2, cfg);
    default: return postprocess(stages.fused, cfg);
  }
}

}  // namespace ldr
