#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "ldr/losses.hpp"
#include "ldr/model.hpp"
#include "ldr/synth.hpp"

namespace ldr {

struct TrainConfig {
  int scenes = 500;
  int steps = 200;
  double lr = 1e-3;
  int batch = 4;
  std::uint64_t seed = 7;
  SceneSpec scene;
  NoiseModel noise;
  ProposalConfig proposals;
  LossWeights weights;
  HeadLossConfig head;
  /// 3D IoU at which an RoI becomes a positive.
  double positive_iou = 0.5;
  /// Feed real + pseudo points to stage 1 (the both-stages-pseudo variant).
  bool pseudo_stage1 = false;
  /// Size of the fixed batch whose loss is reported before and after training.
  int monitor_scenes = 8;

  void validate() const;
};

/// One training frame: pipeline input (pseudo cloud included) plus ground truth.
struct TrainingSample {
  FrameInput input;
  std::vector<Box3D> gt_boxes;
  std::vector<ObjectClass> gt_classes;
};

/// Scene `index` of the deterministic training set.
TrainingSample training_sample(const TrainConfig& cfg, int index);
TrainingSample training_sample(const SynthFrame& frame);

/// Stage-2 RoIs per frame; when supplied they replace the stage-1 output so a
/// loss can be probed with the RoIs held fixed.
using RoiSets = std::vector<std::vector<Box3D>>;

struct BatchLoss {
  LossBreakdown breakdown;
  RoiSets rois;
};

/// Loss of one batch; with `accumulate` the parameter gradients of the total
/// are added into the model (stage-2 RoIs are treated as constants).
BatchLoss batch_loss(Model& model, std::span<const TrainingSample> batch, const TrainConfig& cfg, bool accumulate,
                     const RoiSets* fixed_rois = nullptr);

struct TrainLogRow {
  int step = 0;
  LossBreakdown loss;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  LossBreakdown monitor_before;
  LossBreakdown monitor_after;
};

/// Plain SGD. Writes `step,L_RPN,L_L,L_Laux,L_Caux,L_M,total` rows to `csv`
/// when given (the header first).
TrainResult train(Model& model, const TrainConfig& cfg, std::ostream* csv = nullptr);

}  // namespace ldr
