#pragma once

#include <array>
#include <vector>

#include "ldr/mlp.hpp"
#include "ldr/pseudo_cloud.hpp"

namespace ldr {

inline constexpr int kHprAttributeWidth = 6;  // x, y, z, u, v, red
inline constexpr int kHprPositionWidth = 5;   // x, y, z, u, v

struct HprConfig {
  int steps = 3;
  int radius = 1;
  /// Output width of each step, C_1..C_T.
  std::vector<int> widths = {16, 16, 32};
  /// Width of the initial per-point encoding s^0.
  int initial_width = 16;
  int encoder_hidden = 16;
  int theta_hidden = 16;
  /// Multipliers applied to (x, y, z, u, v, red) before the initial encoder.
  std::array<double, kHprAttributeWidth> attribute_scale = {0.1, 0.1, 0.1, 0.01, 0.01, 1.0};

  int neighbors() const { return neighborhood_size(radius); }
  /// C_t for t in [0, steps]; C_0 is the initial width.
  int width_at(int t) const { return t == 0 ? initial_width : widths.at(t - 1); }
  int output_width() const;
  /// Throws ConfigError unless steps, radius and all widths are >= 1 and
  /// widths.size() == steps.
  void validate() const;
};

/// Networks of the encoder: the initial attribute MLP, then per step the
/// positional reweighting net M_theta (5 -> 2 C_t) and the neighborhood
/// aggregator M_gamma ((K+1) 2 C_t -> C_{t+1}).
struct HprParams {
  Mlp encoder;
  std::vector<Mlp> theta;
  std::vector<Mlp> gamma;

  HprParams() = default;
  HprParams(const HprConfig& cfg, Rng& rng);

  void zero_grad();
  void collect_parameters(std::vector<ParamTensor>& out, const std::string& prefix);
};

/// Initial attributes (6 x N), already scaled, and raw positions (5 x N).
struct HprInputs {
  Matrix attributes;
  Matrix positions;
};
HprInputs hpr_inputs(const PseudoCloud& cloud, const HprConfig& cfg);

/// p_k - p_0 for every (point, neighbor) pair; column j*(K+1)+k.
Matrix positional_residuals(const Matrix& positions, const NeighborTable& nbrs);

struct HprStepCache {
  Matrix concat;   // (s_k - s_0, s_k), 2C x N(K+1)
  Matrix weights;  // M_theta output, same shape
  Mlp::Cache theta;
  Mlp::Cache gamma;
};

/// One residual step: features (C_t x N) -> (C_{t+1} x N).
Matrix hpr_step(int t, const Matrix& features, const NeighborTable& nbrs, const Matrix& positions,
                const HprParams& params, HprStepCache* cache = nullptr);
/// Accumulates M_theta / M_gamma gradients and returns d/d features.
Matrix hpr_step_backward(int t, const HprStepCache& cache, const Matrix& d_out, const NeighborTable& nbrs,
                         HprParams& params);

/// Per-point encoding s_{i,j} (sum of step widths x N) plus the buffers needed
/// for the backward pass.
struct HprFeatures {
  Matrix features;
};

struct HprEncodeCache {
  NeighborTable nbrs;
  HprInputs inputs;
  Mlp::Cache encoder;
  std::vector<Matrix> step_inputs;  // s^0 .. s^{T-1}
  std::vector<HprStepCache> steps;
};

/// An empty cloud yields an empty (width x 0) feature matrix.
HprFeatures hpr_encode(const PseudoCloud& cloud, const HprConfig& cfg, const HprParams& params,
                       HprEncodeCache* cache = nullptr);
void hpr_encode_backward(const HprConfig& cfg, const HprEncodeCache& cache, const Matrix& d_features,
                         HprParams& params);

}  // namespace ldr
