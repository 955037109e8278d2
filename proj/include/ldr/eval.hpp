#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ldr/geometry.hpp"
#include "ldr/kitti_io.hpp"

namespace ldr {

enum class Difficulty { easy = 0, moderate = 1, hard = 2 };
inline constexpr std::array<Difficulty, 3> kAllDifficulties = {Difficulty::easy, Difficulty::moderate,
                                                               Difficulty::hard};
std::string_view difficulty_name(Difficulty d);

enum class MetricSpace { box3d, bev };
std::string_view space_name(MetricSpace s);

enum class RecallMode { r11, r40 };

/// Easiest KITTI level the label satisfies, nullopt when below hard.
std::optional<Difficulty> assign_difficulty(const kitti::KittiLabel& label);
/// Synthetic truths: easy under 20 m with >= 50 real points, moderate under
/// 40 m with >= 20, hard otherwise.
Difficulty assign_difficulty_proxy(double distance, int real_points);

struct GroundTruth {
  Box3D box;
  ObjectClass object_class = ObjectClass::car;
  /// Easiest level, nullopt if ignored at every level.
  std::optional<Difficulty> level;

  /// Counted at evaluation level `d` (levels are cumulative).
  bool counts_at(Difficulty d) const { return level && static_cast<int>(*level) <= static_cast<int>(d); }
};

enum class MatchOutcome { tp, fp, ignored };

struct MatchResult {
  std::vector<MatchOutcome> outcomes;  // per detection, input order
  int false_negatives = 0;
  int num_positives = 0;
};

/// Single class, single frame. `gt_ignored[j]` marks GTs that must neither be
/// missed nor turn their matches into false positives.
MatchResult match_detections(std::span<const Detection> dets, std::span<const Box3D> gts,
                             const std::vector<bool>& gt_ignored, double iou_thresh, MetricSpace space);

struct PrSample {
  double score = 0.0;
  int tp = 0;
  int fp = 0;
};

/// Cumulative counts along the descending-score sweep.
struct PrCurve {
  std::vector<PrSample> samples;
  int num_positives = 0;

  int true_positives() const { return samples.empty() ? 0 : samples.back().tp; }
  int false_positives() const { return samples.empty() ? 0 : samples.back().fp; }
  int false_negatives() const { return num_positives - true_positives(); }
};

/// Every scored (score, is_tp) pair from all frames; stable-sorted by score.
PrCurve build_curve(std::vector<std::pair<double, bool>> scored, int num_positives);
/// Interpolated AP; recall points are compared exactly as tp * D >= i * npos.
double average_precision(const PrCurve& curve, RecallMode mode);

struct EvalConfig {
  /// Indexed by ObjectClass.
  std::array<double, 3> iou_thresholds = {0.7, 0.7, 0.5};
  std::vector<MetricSpace> spaces = {MetricSpace::box3d, MetricSpace::bev};

  double threshold(ObjectClass c) const { return iou_thresholds[static_cast<int>(c)]; }
  void validate() const;
};

struct FrameDetections {
  std::string id;
  std::vector<Detection> detections;
};

struct FrameTruth {
  std::string id;
  std::vector<GroundTruth> objects;
};

struct ApEntry {
  ObjectClass object_class = ObjectClass::car;
  Difficulty difficulty = Difficulty::easy;
  MetricSpace space = MetricSpace::box3d;
  int num_gt = 0;
  int tp = 0;
  int fp = 0;
  double ap_r11 = 0.0;
  double ap_r40 = 0.0;

  /// False when no ground truth exists at this level; such entries leave the means.
  bool valid() const { return num_gt > 0; }
};

struct ClassMean {
  ObjectClass object_class = ObjectClass::car;
  MetricSpace space = MetricSpace::box3d;
  std::optional<double> map_r11;
  std::optional<double> map_r40;
};

struct ApTable {
  std::vector<ApEntry> entries;     // space-major, then class, then difficulty
  std::vector<ClassMean> class_means;
  /// Mean of the valid class means, per space (same order as cfg.spaces).
  std::vector<std::optional<double>> overall_r11;
  std::vector<std::optional<double>> overall_r40;
  std::vector<MetricSpace> spaces;

  const ApEntry& at(ObjectClass c, Difficulty d, MetricSpace s) const;
  std::string to_json() const;
  std::string to_csv() const;
};

/// Frame ids must match one to one; otherwise throws listing the offenders.
ApTable evaluate(std::span<const FrameDetections> dets, std::span<const FrameTruth> gts, const EvalConfig& cfg = {});

}  // namespace ldr
