#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ldr/losses.hpp"
#include "ldr/model.hpp"
#include "ldr/training.hpp"

namespace ldr {

struct GradCase {
  std::string name;
  std::uint64_t seed = 0;
  double tolerance = 0.0;
  GradCheckReport report;
};

struct GradSuiteReport {
  std::vector<GradCase> cases;
  double seconds = 0.0;

  bool passed() const;
  /// Worst case per operation, then one line per failing case.
  std::string summary() const;
};

/// Small networks and a tiny synthetic frame used by the composite checks.
ModelConfig tiny_model_config();
TrainConfig tiny_train_config(std::uint64_t seed);

/// Central-difference checks (h = 1e-5) of mlp_apply, fuse_roi_features,
/// hpr_step, hpr_encode, focal, smooth-L1, GIoU, total_loss on head outputs and
/// the full model loss, each on `seeds` seeds.
GradSuiteReport run_gradient_suite(int seeds, std::uint64_t base_seed = 0);

}  // namespace ldr
