#include "ldr/training.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "ldr/error.hpp"

namespace ldr {

void TrainConfig::validate() const {
  if (scenes < 1 || steps < 0 || batch < 1 || monitor_scenes < 0) throw ConfigError("bad training sizes");
  if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(positive_iou > 0.0 && positive_iou <= 1.0)) throw ConfigError("positive_iou must lie in (0, 1]");
  scene.validate();
  noise.validate();
}

TrainingSample training_sample(const SynthFrame& frame) {
  return {frame.input(true), frame.scene.boxes, frame.scene.classes};
}

TrainingSample training_sample(const TrainConfig& cfg, int index) {
  SceneSpec spec = cfg.scene;
  spec.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(index));
  return training_sample(make_synth_frame(spec, cfg.noise, cfg.proposals, frame_name(index)));
}

namespace {

struct HeadPass {
  Mlp::Cache cls;
  Mlp::Cache reg;
  std::vector<HeadOutput> out;
};

HeadPass run_head(const DetectionHead& head, const Matrix& features) {
  HeadPass p;
  const Matrix logits = head.cls.forward(features, &p.cls);
  const Matrix res = head.reg.forward(features, &p.reg);
  p.out.resize(features.cols());
  for (Eigen::Index i = 0; i < features.cols(); ++i) {
    p.out[i].logit = logits(0, i);
    for (int k = 0; k < 7; ++k) p.out[i].residual[k] = res(k, i);
  }
  return p;
}

/// Returns d loss / d features.
Matrix backward_head(DetectionHead& head, const HeadPass& pass, const HeadLoss& loss, std::size_t offset) {
  const Eigen::Index r = static_cast<Eigen::Index>(pass.out.size());
  Matrix dl(1, r), dr(7, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    dl(0, i) = loss.d_logit[offset + i];
    for (int k = 0; k < 7; ++k) dr(k, i) = loss.d_residual[offset + i][k];
  }
  Matrix d = head.cls.backward(pass.cls, dl);
  d += head.reg.backward(pass.reg, dr);
  return d;
}

Matrix pool_all(const VoxelGrid& grid, const std::vector<RoiCells>& cells, int width) {
  Matrix out(width, static_cast<Eigen::Index>(cells.size()));
  for (std::size_t i = 0; i < cells.size(); ++i) out.col(i) = pool_cells(grid, cells[i]);
  return out;
}

void pool_all_backward(const std::vector<RoiCells>& cells, const Matrix& d_pooled, Matrix& d_voxels) {
  for (std::size_t i = 0; i < cells.size(); ++i) pool_cells_backward(cells[i], d_pooled.col(i), d_voxels);
}

struct FramePass {
  // stage 1
  Mlp::Cache voxel_cache;
  VoxelGrid lidar;
  std::vector<RoiCells> cells1;
  HeadPass head1;
  std::vector<Box3D> rois;
  // stage 2
  bool has_stage2 = false;
  HprEncodeCache hpr_cache;
  bool has_points = false;
  VoxelGrid pseudo;
  std::vector<RoiCells> cells_c;
  std::vector<RoiCells> cells_l;
  Mlp::Cache fusion_cache;
  HeadPass head2;
  HeadPass aux_l;
  HeadPass aux_c;
};

FramePass forward_frame(const Model& model, const TrainingSample& s, const TrainConfig& cfg,
                        const std::vector<Box3D>* fixed_rois) {
  const ModelConfig& mc = model.config;
  FramePass f;
  std::vector<kitti::LidarPoint> merged;
  std::span<const kitti::LidarPoint> points = s.input.points;
  if (cfg.pseudo_stage1) {
    if (!s.input.pseudo) throw ConfigError("pseudo stage-1 training needs a pseudo cloud");
    merged = merge_points(s.input.points, *s.input.pseudo);
    points = merged;
  }
  f.lidar = voxelize_lidar(points, mc.grid);
  f.lidar.features = model.voxel_net.forward(f.lidar.features, &f.voxel_cache);

  const int g = mc.refine.subdivisions;
  for (const auto& p : s.input.proposals) f.cells1.push_back(roi_pool_cells(f.lidar, p.box, g));
  f.head1 = run_head(model.stage1_head, pool_all(f.lidar, f.cells1, mc.lidar_feature_width()));
  if (fixed_rois) {
    f.rois = *fixed_rois;
  } else {
    for (std::size_t i = 0; i < s.input.proposals.size(); ++i) {
      f.rois.push_back(decode_box(f.head1.out[i].residual, s.input.proposals[i].box));
    }
  }
  if (f.rois.size() != s.input.proposals.size()) throw ShapeError("fixed RoIs must align with the proposals");
  if (!s.input.pseudo || f.rois.empty()) return f;

  f.has_stage2 = true;
  const PseudoCloud crop = crop_rois(*s.input.pseudo, f.rois, mc.crop_margin);
  const HprFeatures enc = hpr_encode(crop, mc.hpr, model.hpr, &f.hpr_cache);
  f.has_points = !crop.empty();
  std::vector<Vec3> positions;
  positions.reserve(crop.size());
  for (const auto& p : crop.points) positions.push_back(p.position());
  f.pseudo = voxelize_features(positions, enc.features, mc.grid);
  for (const Box3D& r : f.rois) {
    f.cells_c.push_back(roi_pool_cells(f.pseudo, r, g));
    f.cells_l.push_back(roi_pool_cells(f.lidar, r, g));
  }
  const Matrix fc = pool_all(f.pseudo, f.cells_c, mc.pseudo_feature_width());
  const Matrix fl = pool_all(f.lidar, f.cells_l, mc.lidar_feature_width());
  Matrix cat(fc.rows() + fl.rows(), fc.cols());
  cat << fc, fl;
  const Matrix fused = model.fusion.forward(cat, &f.fusion_cache);
  f.head2 = run_head(model.stage2_head, fused);
  f.aux_l = run_head(model.lidar_aux_head, fl);
  f.aux_c = run_head(model.pseudo_aux_head, fc);
  return f;
}

void backward_frame(Model& model, const FramePass& f, const TotalLoss& loss, std::size_t off1, std::size_t off2) {
  const ModelConfig& mc = model.config;
  Matrix d_lidar = Matrix::Zero(f.lidar.features.rows(), f.lidar.features.cols());
  if (!f.head1.out.empty()) {
    pool_all_backward(f.cells1, backward_head(model.stage1_head, f.head1, loss.stage1, off1), d_lidar);
  }
  if (f.has_stage2) {
    const Matrix d_fused = backward_head(model.stage2_head, f.head2, loss.fused, off2);
    const Matrix d_cat = model.fusion.backward(f.fusion_cache, d_fused);
    const int wc = mc.pseudo_feature_width();
    Matrix d_fc = d_cat.topRows(wc);
    Matrix d_fl = d_cat.bottomRows(d_cat.rows() - wc);
    d_fl += backward_head(model.lidar_aux_head, f.aux_l, loss.lidar_aux, off2);
    d_fc += backward_head(model.pseudo_aux_head, f.aux_c, loss.pseudo_aux, off2);
    pool_all_backward(f.cells_l, d_fl, d_lidar);
    if (f.has_points) {
      Matrix d_pseudo = Matrix::Zero(f.pseudo.features.rows(), f.pseudo.features.cols());
      pool_all_backward(f.cells_c, d_fc, d_pseudo);
      hpr_encode_backward(mc.hpr, f.hpr_cache, voxelize_features_backward(f.pseudo, d_pseudo), model.hpr);
    }
  }
  if (d_lidar.cols() > 0) model.voxel_net.backward(f.voxel_cache, d_lidar, false);
}

std::vector<ObjectClass> proposal_classes(const TrainingSample& s) {
  std::vector<ObjectClass> c;
  for (const auto& p : s.input.proposals) c.push_back(p.object_class);
  return c;
}

}  // namespace

BatchLoss batch_loss(Model& model, std::span<const TrainingSample> batch, const TrainConfig& cfg, bool accumulate,
                     const RoiSets* fixed_rois) {
  if (fixed_rois && fixed_rois->size() != batch.size()) throw ShapeError("one RoI set per frame expected");
  std::vector<FramePass> passes;
  LossInputs in;
  std::vector<std::size_t> off1, off2;
  BatchLoss result;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TrainingSample& s = batch[i];
    passes.push_back(forward_frame(model, s, cfg, fixed_rois ? &(*fixed_rois)[i] : nullptr));
    const FramePass& f = passes.back();
    const auto classes = proposal_classes(s);
    std::vector<Box3D> anchors;
    for (const auto& p : s.input.proposals) anchors.push_back(p.box);
    off1.push_back(in.stage1.size());
    off2.push_back(in.fused.size());
    const auto t1 = assign_targets(anchors, classes, s.gt_boxes, s.gt_classes, cfg.positive_iou);
    in.stage1.insert(in.stage1.end(), f.head1.out.begin(), f.head1.out.end());
    in.stage1_targets.insert(in.stage1_targets.end(), t1.begin(), t1.end());
    if (f.has_stage2) {
      const auto t2 = assign_targets(f.rois, classes, s.gt_boxes, s.gt_classes, cfg.positive_iou);
      in.fused.insert(in.fused.end(), f.head2.out.begin(), f.head2.out.end());
      in.lidar_aux.insert(in.lidar_aux.end(), f.aux_l.out.begin(), f.aux_l.out.end());
      in.pseudo_aux.insert(in.pseudo_aux.end(), f.aux_c.out.begin(), f.aux_c.out.end());
      in.stage2_targets.insert(in.stage2_targets.end(), t2.begin(), t2.end());
    }
    result.rois.push_back(f.rois);
  }
  const TotalLoss loss = total_loss(in, cfg.weights, cfg.head);
  result.breakdown = loss.breakdown;
  if (accumulate) {
    for (std::size_t i = 0; i < passes.size(); ++i) backward_frame(model, passes[i], loss, off1[i], off2[i]);
  }
  return result;
}

TrainResult train(Model& model, const TrainConfig& cfg, std::ostream* csv) {
  cfg.validate();
  TrainResult result;
  std::vector<TrainingSample> monitor;
  for (int i = 0; i < std::min(cfg.monitor_scenes, cfg.scenes); ++i) monitor.push_back(training_sample(cfg, i));
  if (!monitor.empty()) result.monitor_before = batch_loss(model, monitor, cfg, false).breakdown;

  Rng order_rng(mix_seed(cfg.seed, 0x0de7));
  std::vector<int> order(cfg.scenes);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  if (csv) *csv << "step,L_RPN,L_L,L_Laux,L_Caux,L_M,total\n";
  char buf[256];
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<TrainingSample> batch;
    for (int b = 0; b < cfg.batch; ++b) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      batch.push_back(training_sample(cfg, order[cursor++]));
    }
    model.zero_grad();
    const BatchLoss loss = batch_loss(model, batch, cfg, true);
    sgd_step(model.parameters(), cfg.lr);
    result.log.push_back({step, loss.breakdown});
    if (csv) {
      const LossBreakdown& l = loss.breakdown;
      std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", step, l.rpn, l.stage1, l.lidar_aux,
                    l.pseudo_aux, l.fused, l.total);
      *csv << buf;
    }
  }
  model.zero_grad();
  if (!monitor.empty()) result.monitor_after = batch_loss(model, monitor, cfg, false).breakdown;
  return result;
}

}  // namespace ldr
