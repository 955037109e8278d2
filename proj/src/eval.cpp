#include "ldr/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ldr/error.hpp"

namespace ldr {

std::string_view difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::moderate: return "moderate";
    case Difficulty::hard: return "hard";
  }
  return "?";
}

std::string_view space_name(MetricSpace s) { return s == MetricSpace::box3d ? "3d" : "bev"; }

std::optional<Difficulty> assign_difficulty(const kitti::KittiLabel& label) {
  struct Level {
    double min_height;
    int max_occlusion;
    double max_truncation;
  };
  static constexpr std::array<Level, 3> kLevels = {{{40.0, 0, 0.15}, {25.0, 1, 0.30}, {25.0, 2, 0.50}}};
  const double h = label.bbox_height();
  for (std::size_t i = 0; i < kLevels.size(); ++i) {
    const Level& l = kLevels[i];
    if (h >= l.min_height && label.occlusion <= l.max_occlusion && label.truncation <= l.max_truncation) {
      return static_cast<Difficulty>(i);
    }
  }
  return std::nullopt;
}

Difficulty assign_difficulty_proxy(double distance, int real_points) {
  if (distance < 20.0 && real_points >= 50) return Difficulty::easy;
  if (distance < 40.0 && real_points >= 20) return Difficulty::moderate;
  return Difficulty::hard;
}

MatchResult match_detections(std::span<const Detection> dets, std::span<const Box3D> gts,
                             const std::vector<bool>& gt_ignored, double iou_thresh, MetricSpace space) {
  if (gt_ignored.size() != gts.size()) throw ShapeError("match_detections: one ignore flag per GT expected");
  MatchResult out;
  out.outcomes.assign(dets.size(), MatchOutcome::fp);
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t i : order) {
    double best = -1.0;
    int best_j = -1;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[j]) continue;
      const double iou = space == MetricSpace::box3d ? iou_3d(dets[i].box, gts[j]) : iou_bev(dets[i].box, gts[j]);
      if (iou > iou_thresh && iou > best) {
        best = iou;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j < 0) continue;
    taken[best_j] = true;
    out.outcomes[i] = gt_ignored[best_j] ? MatchOutcome::ignored : MatchOutcome::tp;
  }
  for (std::size_t j = 0; j < gts.size(); ++j) {
    if (gt_ignored[j]) continue;
    ++out.num_positives;
    if (!taken[j]) ++out.false_negatives;
  }
  return out;
}

PrCurve build_curve(std::vector<std::pair<double, bool>> scored, int num_positives) {
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  PrCurve curve;
  curve.num_positives = num_positives;
  int tp = 0, fp = 0;
  for (const auto& [score, is_tp] : scored) {
    (is_tp ? tp : fp) += 1;
    curve.samples.push_back({score, tp, fp});
  }
  return curve;
}

double average_precision(const PrCurve& curve, RecallMode mode) {
  const long long npos = curve.num_positives;
  if (npos <= 0) return 0.0;
  const int divisions = mode == RecallMode::r11 ? 10 : 40;
  const int first = mode == RecallMode::r11 ? 0 : 1;
  double sum = 0.0;
  for (int i = first; i <= divisions; ++i) {
    double best = 0.0;
    for (const PrSample& s : curve.samples) {
      if (static_cast<long long>(s.tp) * divisions >= static_cast<long long>(i) * npos) {
        best = std::max(best, static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp));
      }
    }
    sum += best;
  }
  return sum / static_cast<double>(divisions - first + 1);
}

void EvalConfig::validate() const {
  for (double t : iou_thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("IoU thresholds must lie in (0, 1]");
  }
  if (spaces.empty()) throw ConfigError("at least one metric space is required");
}

const ApEntry& ApTable::at(ObjectClass c, Difficulty d, MetricSpace s) const {
  for (const auto& e : entries) {
    if (e.object_class == c && e.difficulty == d && e.space == s) return e;
  }
  throw std::out_of_range("ApTable: no such entry");
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::string ApTable::to_json() const {
  nlohmann::ordered_json root;
  nlohmann::ordered_json& results = root["results"];
  for (ObjectClass c : kAllClasses) {
    for (Difficulty d : kAllDifficulties) {
      for (MetricSpace s : spaces) {
        const ApEntry& e = at(c, d, s);
        nlohmann::ordered_json cell;
        cell["ap_r11"] = e.valid() ? nlohmann::json(e.ap_r11) : nlohmann::json();
        cell["ap_r40"] = e.valid() ? nlohmann::json(e.ap_r40) : nlohmann::json();
        cell["num_gt"] = e.num_gt;
        cell["tp"] = e.tp;
        cell["fp"] = e.fp;
        results[std::string(class_name(c))][std::string(difficulty_name(d))][std::string(space_name(s))] = cell;
      }
    }
  }
  nlohmann::ordered_json& means = root["mAP"];
  for (const ClassMean& m : class_means) {
    means[std::string(class_name(m.object_class))][std::string(space_name(m.space))] = {
        {"r11", optional_json(m.map_r11)}, {"r40", optional_json(m.map_r40)}};
  }
  for (std::size_t i = 0; i < spaces.size(); ++i) {
    means["overall"][std::string(space_name(spaces[i]))] = {{"r11", optional_json(overall_r11[i])},
                                                            {"r40", optional_json(overall_r40[i])}};
  }
  return root.dump(2) + "\n";
}

std::string ApTable::to_csv() const {
  std::ostringstream os;
  os << "class,difficulty,space,num_gt,tp,fp,ap_r11,ap_r40\n";
  char buf[64];
  for (const auto& e : entries) {
    os << class_name(e.object_class) << ',' << difficulty_name(e.difficulty) << ',' << space_name(e.space) << ','
       << e.num_gt << ',' << e.tp << ',' << e.fp << ',';
    if (e.valid()) {
      std::snprintf(buf, sizeof buf, "%.6f,%.6f", e.ap_r11, e.ap_r40);
      os << buf << '\n';
    } else {
      os << ",\n";
    }
  }
  return os.str();
}

ApTable evaluate(std::span<const FrameDetections> dets, std::span<const FrameTruth> gts, const EvalConfig& cfg) {
  cfg.validate();
  std::map<std::string, const FrameDetections*> det_by_id;
  std::map<std::string, const FrameTruth*> gt_by_id;
  for (const auto& f : dets) {
    if (!det_by_id.emplace(f.id, &f).second) throw Error("duplicate detection frame id '" + f.id + "'");
  }
  for (const auto& f : gts) {
    if (!gt_by_id.emplace(f.id, &f).second) throw Error("duplicate ground-truth frame id '" + f.id + "'");
  }
  std::vector<std::string> missing;
  for (const auto& [id, _] : det_by_id) {
    if (!gt_by_id.count(id)) missing.push_back(id + " (no ground truth)");
  }
  for (const auto& [id, _] : gt_by_id) {
    if (!det_by_id.count(id)) missing.push_back(id + " (no detections)");
  }
  if (!missing.empty()) {
    std::string msg = "frame ids do not match:";
    for (const auto& m : missing) msg += " " + m;
    throw Error(msg);
  }

  ApTable table;
  table.spaces = cfg.spaces;
  for (MetricSpace space : cfg.spaces) {
    std::vector<double> class_r11, class_r40;
    for (ObjectClass c : kAllClasses) {
      std::vector<double> diff_r11, diff_r40;
      for (Difficulty d : kAllDifficulties) {
        std::vector<std::pair<double, bool>> scored;
        int npos = 0;
        for (const auto& [id, truth] : gt_by_id) {
          std::vector<Detection> frame_dets;
          for (const auto& det : det_by_id.at(id)->detections) {
            if (det.object_class == c) frame_dets.push_back(det);
          }
          std::vector<Box3D> boxes;
          std::vector<bool> ignored;
          for (const auto& g : truth->objects) {
            if (g.object_class != c) continue;
            boxes.push_back(g.box);
            ignored.push_back(!g.counts_at(d));
          }
          const MatchResult m = match_detections(frame_dets, boxes, ignored, cfg.threshold(c), space);
          npos += m.num_positives;
          for (std::size_t i = 0; i < frame_dets.size(); ++i) {
            if (m.outcomes[i] == MatchOutcome::ignored) continue;
            scored.emplace_back(frame_dets[i].score, m.outcomes[i] == MatchOutcome::tp);
          }
        }
        const PrCurve curve = build_curve(std::move(scored), npos);
        ApEntry e;
        e.object_class = c;
        e.difficulty = d;
        e.space = space;
        e.num_gt = npos;
        e.tp = curve.true_positives();
        e.fp = curve.false_positives();
        e.ap_r11 = average_precision(curve, RecallMode::r11);
        e.ap_r40 = average_precision(curve, RecallMode::r40);
        if (e.valid()) {
          diff_r11.push_back(e.ap_r11);
          diff_r40.push_back(e.ap_r40);
        }
        table.entries.push_back(e);
      }
      ClassMean cm{c, space, mean_of(diff_r11), mean_of(diff_r40)};
      if (cm.map_r11) class_r11.push_back(*cm.map_r11);
      if (cm.map_r40) class_r40.push_back(*cm.map_r40);
      table.class_means.push_back(cm);
    }
    table.overall_r11.push_back(mean_of(class_r11));
    table.overall_r40.push_back(mean_of(class_r40));
  }
  return table;
}

}  // namespace ldr
