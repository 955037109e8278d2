#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string_view>
#include <thread>
#include <vector>

#include "ldr/model.hpp"

namespace ldr {

/// stage1: LiDAR-only refinement. stage2: the second-stage output d^M alone.
/// cascade: stage 1 on real points, stage 2 with pseudo points, instance fusion.
/// pseudo: like cascade but real and pseudo points feed both stages.
enum class PipelineMode { stage1, stage2, cascade, pseudo };

std::string_view mode_name(PipelineMode mode);
std::optional<PipelineMode> parse_mode(std::string_view name);

struct PipelineConfig {
  PipelineMode mode = PipelineMode::cascade;
  double alpha = 0.5;
  /// BEV IoU above which a lower-scored box of the same class is dropped.
  double nms_threshold = 0.1;
  double score_floor = 0.05;

  void validate() const;
};

/// Index-aligned convex combination of both stages. Yaw averages unit vectors;
/// an exactly zero weight passes the other side through untouched.
std::vector<Detection> fuse_instances(std::span<const Detection> d_l, std::span<const Detection> d_m, double alpha);

struct FrameInput {
  std::vector<kitti::LidarPoint> points;
  std::optional<PseudoCloud> pseudo;
  std::vector<Proposal> proposals;
};

/// Everything before NMS; `stage2` and `fused` stay empty in stage1 mode.
struct StageOutputs {
  std::vector<Detection> stage1;
  std::vector<Detection> stage2;
  std::vector<Detection> fused;
};

StageOutputs run_stages(const FrameInput& frame, const Model& model, const PipelineConfig& cfg);
/// Per-class NMS (classes in declaration order) followed by the score floor.
std::vector<Detection> postprocess(std::span<const Detection> dets, const PipelineConfig& cfg);
std::vector<Detection> run_pipeline(const FrameInput& frame, const Model& model, const PipelineConfig& cfg);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; results keep index order.
/// The first exception (lowest index) is rethrown after all workers finish.
template <typename Fn>
auto parallel_map(std::size_t n, int jobs, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<std::optional<R>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= n) return;
        i = next++;
      }
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(jobs < 1 ? 1 : static_cast<std::size_t>(jobs), 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace ldr
