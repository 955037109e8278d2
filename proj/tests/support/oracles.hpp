#pragma once

// Independent reference implementations used by the unit and acceptance tests.
// Nothing here calls into the code it is meant to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ldr/eval.hpp"
#include "ldr/geometry.hpp"

namespace oracle {

using ldr::Box3D;
using ldr::Vec3;

inline bool inside(const Box3D& b, double x, double y, double z) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = x - b.center.x(), dy = y - b.center.y();
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.length && std::abs(ly) <= 0.5 * b.width &&
         std::abs(z - b.center.z()) <= 0.5 * b.height;
}

/// Samples uniformly inside `a` and counts hits in `b`; the intersection
/// volume follows from the exact volume of `a`.
inline double monte_carlo_iou(const Box3D& a, const Box3D& b, bool bev, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const double c = std::cos(a.yaw), s = std::sin(a.yaw);
  int hits = 0;
  for (int i = 0; i < samples; ++i) {
    const double lx = u(rng) * a.length, ly = u(rng) * a.width, lz = u(rng) * a.height;
    const double x = a.center.x() + c * lx - s * ly;
    const double y = a.center.y() + s * lx + c * ly;
    const double z = bev ? b.center.z() : a.center.z() + lz;
    if (inside(b, x, y, z)) ++hits;
  }
  const double va = bev ? a.length * a.width : a.volume();
  const double vb = bev ? b.length * b.width : b.volume();
  const double inter = va * hits / samples;
  return inter / (va + vb - inter);
}

inline Box3D random_box(std::mt19937_64& rng, double spread = 2.0) {
  std::uniform_real_distribution<double> pos(-spread, spread), dim(0.5, 4.0), yaw(-3.14159, 3.14159);
  Box3D b;
  b.center = Vec3(pos(rng), pos(rng), 0.5 * pos(rng));
  b.length = dim(rng);
  b.width = dim(rng);
  b.height = dim(rng);
  b.yaw = yaw(rng);
  return b;
}

// ---------------------------------------------------------------- naive evaluator

struct NaiveEntry {
  int npos = 0;
  int tp = 0;
  int fp = 0;
  double r11 = 0.0;
  double r40 = 0.0;
};

inline double naive_ap(const std::vector<int>& tp_prefix, const std::vector<int>& n_prefix, int npos, int divisions,
                       int first) {
  if (npos == 0) return 0.0;
  double sum = 0.0;
  for (int i = first; i <= divisions; ++i) {
    double best = 0.0;
    for (std::size_t k = 0; k < tp_prefix.size(); ++k) {
      // recall tp/npos >= i/divisions, compared in integers
      if (1LL * tp_prefix[k] * divisions < 1LL * i * npos) continue;
      best = std::max(best, static_cast<double>(tp_prefix[k]) / static_cast<double>(n_prefix[k]));
    }
    sum += best;
  }
  return sum / (divisions - first + 1);
}

/// Greedy in descending score over all frames at once; each frame keeps its
/// own used-GT set.
inline NaiveEntry naive_evaluate(const std::vector<ldr::FrameDetections>& dets,
                                 const std::vector<ldr::FrameTruth>& gts, ldr::ObjectClass cls,
                                 ldr::Difficulty diff, ldr::MetricSpace space, double thresh) {
  struct Item {
    double score;
    std::size_t frame;
    Box3D box;
  };
  std::map<std::string, std::size_t> frame_of;
  for (std::size_t f = 0; f < gts.size(); ++f) frame_of[gts[f].id] = f;
  std::vector<std::size_t> order;
  for (std::size_t f = 0; f < gts.size(); ++f) order.push_back(f);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return gts[a].id < gts[b].id; });

  std::vector<Item> items;
  for (std::size_t f : order) {
    for (const auto& fd : dets) {
      if (fd.id != gts[f].id) continue;
      for (const auto& d : fd.detections) {
        if (d.object_class == cls) items.push_back({d.score, f, d.box});
      }
    }
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score > b.score; });

  NaiveEntry e;
  std::vector<std::vector<bool>> used(gts.size());
  for (std::size_t f = 0; f < gts.size(); ++f) {
    used[f].assign(gts[f].objects.size(), false);
    for (const auto& g : gts[f].objects) {
      if (g.object_class == cls && g.level && static_cast<int>(*g.level) <= static_cast<int>(diff)) ++e.npos;
    }
  }
  std::vector<int> tp_prefix, n_prefix;
  int tp = 0, n = 0;
  for (const Item& it : items) {
    const auto& objs = gts[it.frame].objects;
    int best = -1;
    double best_iou = thresh;
    for (std::size_t j = 0; j < objs.size(); ++j) {
      if (objs[j].object_class != cls || used[it.frame][j]) continue;
      const double iou = space == ldr::MetricSpace::bev ? ldr::iou_bev(it.box, objs[j].box)
                                                        : ldr::iou_3d(it.box, objs[j].box);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) {
      used[it.frame][best] = true;
      const auto& g = objs[best];
      const bool counted = g.level && static_cast<int>(*g.level) <= static_cast<int>(diff);
      if (!counted) continue;
      ++tp;
    }
    ++n;
    tp_prefix.push_back(tp);
    n_prefix.push_back(n);
  }
  e.tp = tp;
  e.fp = n - tp;
  e.r11 = naive_ap(tp_prefix, n_prefix, e.npos, 10, 0);
  e.r40 = naive_ap(tp_prefix, n_prefix, e.npos, 40, 1);
  return e;
}

/// Random micro-instance: up to `max_frames` frames with up to `max_boxes`
/// objects each; detections are jittered copies plus strays.
inline void random_eval_instance(std::mt19937_64& rng, int max_frames, int max_boxes,
                                 std::vector<ldr::FrameDetections>& dets, std::vector<ldr::FrameTruth>& gts) {
  std::uniform_int_distribution<int> nf(1, max_frames), nb(0, max_boxes), cls(0, 2), lvl(-1, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0), jit(-0.25, 0.25);
  dets.clear();
  gts.clear();
  const int frames = nf(rng);
  for (int f = 0; f < frames; ++f) {
    ldr::FrameTruth t;
    ldr::FrameDetections d;
    t.id = d.id = "f" + std::to_string(f);
    const int n = nb(rng);
    for (int i = 0; i < n; ++i) {
      ldr::GroundTruth g;
      g.box.center = Vec3(8.0 * i + 4.0 * unit(rng), 10.0 * unit(rng), 0.0);
      g.box.length = 2.0 + 2.0 * unit(rng);
      g.box.width = 1.0 + unit(rng);
      g.box.height = 1.5;
      g.box.yaw = jit(rng) * 4;
      g.object_class = static_cast<ldr::ObjectClass>(cls(rng));
      const int l = lvl(rng);
      if (l >= 0) g.level = static_cast<ldr::Difficulty>(l);
      t.objects.push_back(g);
      const int copies = static_cast<int>(unit(rng) * 3);  // 0, 1 or 2 detections on this object
      for (int k = 0; k < copies; ++k) {
        ldr::Detection det;
        det.box = g.box;
        det.box.center += Vec3(jit(rng), jit(rng), 0.5 * jit(rng));
        det.box.yaw += 0.3 * jit(rng);
        det.score = unit(rng);
        det.object_class = unit(rng) < 0.85 ? g.object_class : static_cast<ldr::ObjectClass>(cls(rng));
        d.detections.push_back(det);
      }
    }
    if (unit(rng) < 0.5 && max_boxes > 0) {
      ldr::Detection stray;
      stray.box.center = Vec3(-20.0 - 10 * unit(rng), 0.0, 0.0);
      stray.box.length = 3.0;
      stray.box.width = stray.box.height = 1.5;
      stray.score = unit(rng);
      stray.object_class = static_cast<ldr::ObjectClass>(cls(rng));
      d.detections.push_back(stray);
    }
    while (static_cast<int>(d.detections.size()) > max_boxes) d.detections.pop_back();
    gts.push_back(std::move(t));
    dets.push_back(std::move(d));
  }
}

}  // namespace oracle
