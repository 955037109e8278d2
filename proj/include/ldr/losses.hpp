#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ldr/detector.hpp"
#include "ldr/mlp.hpp"

namespace ldr {

struct ScalarGrad {
  double value = 0.0;
  double grad = 0.0;
};

inline constexpr double kFocalEpsilon = 1e-7;

/// Gradient w.r.t. p; zero where p had to be clamped into [eps, 1 - eps].
ScalarGrad focal_loss(double p, int y, double alpha_f = 0.25, double gamma = 2.0);
/// Same loss on sigmoid(logit), gradient w.r.t. the logit.
ScalarGrad focal_loss_logit(double logit, int y, double alpha_f = 0.25, double gamma = 2.0);
ScalarGrad smooth_l1(double x, double beta = 1.0);

struct BoxLoss {
  double value = 0.0;
  std::array<double, 7> d_pred{};  // (x, y, z, l, w, h, yaw)
};
/// 1 - giou_3d(pred, gt).
BoxLoss giou_loss(const Box3D& pred, const Box3D& gt);

struct LossWeights {
  double stage1 = 1.0;  // lambda_1
  double aux = 0.5;     // lambda_2
  double fused = 1.0;   // lambda_3
};

struct LossBreakdown {
  double rpn = 0.0;
  double stage1 = 0.0;
  double lidar_aux = 0.0;
  double pseudo_aux = 0.0;
  double fused = 0.0;
  double total = 0.0;

  static LossBreakdown combine(double rpn, double stage1, double lidar_aux, double pseudo_aux, double fused,
                               const LossWeights& w);
  double recompute_total(const LossWeights& w) const;
};

struct HeadLossConfig {
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double smooth_l1_beta = 1.0;
};

/// Target of one RoI; `gt` and `residual` are meaningful for positives only.
struct RoiTarget {
  bool positive = false;
  Box3D anchor;
  Box3D gt;
  BoxResidual residual{};
};

/// Assigns each anchor the same-class GT of highest 3D IoU; positive at >= iou_threshold.
std::vector<RoiTarget> assign_targets(std::span<const Box3D> anchors, std::span<const ObjectClass> anchor_classes,
                                      std::span<const Box3D> gts, std::span<const ObjectClass> gt_classes,
                                      double iou_threshold);

struct HeadLoss {
  double value = 0.0;
  double classification = 0.0;
  double regression = 0.0;
  double giou = 0.0;
  std::vector<double> d_logit;
  std::vector<BoxResidual> d_residual;
};

/// Focal over all RoIs plus smooth-L1 (and optionally GIoU on the decoded box)
/// over positives, each divided by max(1, normalizer).
HeadLoss head_loss(std::span<const HeadOutput> outputs, std::span<const RoiTarget> targets, bool with_giou,
                   double normalizer, const HeadLossConfig& cfg = {});

/// Head outputs of a batch, index-aligned with the targets.
struct LossInputs {
  std::vector<HeadOutput> stage1;
  std::vector<RoiTarget> stage1_targets;
  std::vector<HeadOutput> fused;
  std::vector<HeadOutput> lidar_aux;
  std::vector<HeadOutput> pseudo_aux;
  std::vector<RoiTarget> stage2_targets;
};

/// Breakdown plus per-head gradients already scaled by their lambda.
struct TotalLoss {
  LossBreakdown breakdown;
  HeadLoss stage1;
  HeadLoss lidar_aux;
  HeadLoss pseudo_aux;
  HeadLoss fused;
};

/// L_RPN is identically zero: proposals come from outside the model.
TotalLoss total_loss(const LossInputs& in, const LossWeights& w = {}, const HeadLossConfig& cfg = {});

/// p <- p - lr * g in tensor order. Every gradient is checked before any
/// update; a non-finite entry throws NonFiniteGradient naming the tensor.
void sgd_step(std::span<const ParamTensor> params, double lr);

struct GradCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error.
  double floor = 1e-6;
  /// Entries probed per tensor, chosen at random; 0 probes every entry.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Entries whose one-sided slopes differ by more than this (relative to
  /// max(1, |numeric|)) straddle a kink of `f`; they are counted and compared
  /// against a stencil of h/100 instead. 0 disables the test.
  double kink_tolerance = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;
  bool passed = true;
};

/// Central differences of `f` against the gradients already stored in
/// `params`. Values are restored afterwards. `f` must be deterministic.
GradCheckReport grad_check(const std::function<double()>& f, std::span<const ParamTensor> params,
                           const GradCheckOptions& opt = {});

}  // namespace ldr
