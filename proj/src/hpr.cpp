#include "ldr/hpr.hpp"

#include <numeric>

#include "ldr/error.hpp"

namespace ldr {

int HprConfig::output_width() const { return std::accumulate(widths.begin(), widths.end(), 0); }

void HprConfig::validate() const {
  if (steps < 1) throw ConfigError("hpr steps must be >= 1");
  if (radius < 1) throw ConfigError("hpr radius must be >= 1");
  if (static_cast<int>(widths.size()) != steps) throw ConfigError("hpr widths must list one width per step");
  if (initial_width < 1 || encoder_hidden < 1 || theta_hidden < 1) throw ConfigError("hpr widths must be >= 1");
  for (int w : widths) {
    if (w < 1) throw ConfigError("hpr widths must be >= 1");
  }
}

HprParams::HprParams(const HprConfig& cfg, Rng& rng) {
  cfg.validate();
  encoder = Mlp({kHprAttributeWidth, cfg.encoder_hidden, cfg.initial_width}, Activation::relu, Activation::identity,
                rng);
  const int k1 = cfg.neighbors();
  for (int t = 0; t < cfg.steps; ++t) {
    const int c = cfg.width_at(t);
    // Bounded weights: the reweighting multiplies features, and unbounded
    // factors compound over the T steps. The hidden layer is smooth too since
    // every self residual is exactly zero and would sit on a relu kink.
    theta.emplace_back(std::vector<int>{kHprPositionWidth, cfg.theta_hidden, 2 * c}, Activation::tanh,
                       Activation::tanh, rng);
    gamma.emplace_back(std::vector<int>{k1 * 2 * c, cfg.width_at(t + 1)}, Activation::relu, Activation::relu, rng);
  }
}

void HprParams::zero_grad() {
  encoder.zero_grad();
  for (auto& m : theta) m.zero_grad();
  for (auto& m : gamma) m.zero_grad();
}

void HprParams::collect_parameters(std::vector<ParamTensor>& out, const std::string& prefix) {
  encoder.collect_parameters(out, prefix + ".encoder");
  for (std::size_t t = 0; t < theta.size(); ++t) {
    theta[t].collect_parameters(out, prefix + ".theta" + std::to_string(t));
    gamma[t].collect_parameters(out, prefix + ".gamma" + std::to_string(t));
  }
}

HprInputs hpr_inputs(const PseudoCloud& cloud, const HprConfig& cfg) {
  const int n = static_cast<int>(cloud.size());
  HprInputs in{Matrix(kHprAttributeWidth, n), Matrix(kHprPositionWidth, n)};
  for (int j = 0; j < n; ++j) {
    const PseudoPoint& p = cloud.points[j];
    const double attrs[kHprAttributeWidth] = {p.x, p.y, p.z, p.u, p.v, p.r};
    for (int a = 0; a < kHprAttributeWidth; ++a) in.attributes(a, j) = attrs[a] * cfg.attribute_scale[a];
    in.positions.col(j) << p.x, p.y, p.z, p.u, p.v;
  }
  return in;
}

Matrix positional_residuals(const Matrix& positions, const NeighborTable& nbrs) {
  const int k1 = nbrs.per_point;
  Matrix res(positions.rows(), static_cast<Eigen::Index>(nbrs.count) * k1);
  for (int j = 0; j < nbrs.count; ++j) {
    for (int k = 0; k < k1; ++k) res.col(j * k1 + k) = positions.col(nbrs.at(j, k)) - positions.col(j);
  }
  return res;
}

Matrix hpr_step(int t, const Matrix& features, const NeighborTable& nbrs, const Matrix& positions,
                const HprParams& params, HprStepCache* cache) {
  if (t < 0 || static_cast<std::size_t>(t) >= params.theta.size()) throw ShapeError("hpr_step: step out of range");
  const Mlp& theta = params.theta[t];
  const Mlp& gamma = params.gamma[t];
  const int n = nbrs.count;
  const int k1 = nbrs.per_point;
  const int c = static_cast<int>(features.rows());
  if (features.cols() != n || positions.cols() != n || positions.rows() != kHprPositionWidth) {
    throw ShapeError("hpr_step: features, positions and neighborhoods disagree on point count");
  }
  if (theta.output_width() != 2 * c || gamma.input_width() != 2 * c * k1) {
    throw ShapeError("hpr_step: feature width does not match the step networks");
  }
  Matrix concat(2 * c, static_cast<Eigen::Index>(n) * k1);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < k1; ++k) {
      const int nb = nbrs.at(j, k);
      const Eigen::Index col = static_cast<Eigen::Index>(j) * k1 + k;
      concat.col(col).head(c) = features.col(nb) - features.col(j);
      concat.col(col).tail(c) = features.col(nb);
    }
  }
  HprStepCache local;
  HprStepCache& cc = cache ? *cache : local;
  cc.weights = theta.forward(positional_residuals(positions, nbrs), cache ? &cc.theta : nullptr);
  Matrix weighted = concat.cwiseProduct(cc.weights);
  // Column j*(K+1)+k of `weighted` is v_k of point j, so the memory already
  // holds each point's concatenation over k as one column of height (K+1) 2C.
  Eigen::Map<const Matrix> stacked(weighted.data(), static_cast<Eigen::Index>(2 * c) * k1, n);
  Matrix out = gamma.forward(stacked, cache ? &cc.gamma : nullptr);
  if (cache) cc.concat = std::move(concat);
  return out;
}

Matrix hpr_step_backward(int t, const HprStepCache& cache, const Matrix& d_out, const NeighborTable& nbrs,
                         HprParams& params) {
  const int n = nbrs.count;
  const int k1 = nbrs.per_point;
  const int two_c = static_cast<int>(cache.concat.rows());
  const int c = two_c / 2;
  Matrix d_stacked = params.gamma[t].backward(cache.gamma, d_out);
  Eigen::Map<const Matrix> d_weighted(d_stacked.data(), two_c, static_cast<Eigen::Index>(n) * k1);
  const Matrix d_weights = d_weighted.cwiseProduct(cache.concat);
  const Matrix d_concat = d_weighted.cwiseProduct(cache.weights);
  params.theta[t].backward(cache.theta, d_weights, false);
  Matrix d_features = Matrix::Zero(c, n);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < k1; ++k) {
      const int nb = nbrs.at(j, k);
      const Eigen::Index col = static_cast<Eigen::Index>(j) * k1 + k;
      const auto d_res = d_concat.col(col).head(c);
      d_features.col(nb) += d_res + d_concat.col(col).tail(c);
      d_features.col(j) -= d_res;
    }
  }
  return d_features;
}

HprFeatures hpr_encode(const PseudoCloud& cloud, const HprConfig& cfg, const HprParams& params,
                       HprEncodeCache* cache) {
  cfg.validate();
  const int n = static_cast<int>(cloud.size());
  HprFeatures out{Matrix::Zero(cfg.output_width(), n)};
  if (n == 0) return out;
  HprEncodeCache local;
  HprEncodeCache& cc = cache ? *cache : local;
  cc.nbrs = neighbor_table(cloud, cfg.radius);
  cc.inputs = hpr_inputs(cloud, cfg);
  Matrix s = params.encoder.forward(cc.inputs.attributes, cache ? &cc.encoder : nullptr);
  cc.step_inputs.clear();
  cc.steps.assign(cfg.steps, HprStepCache{});
  int row = 0;
  for (int t = 0; t < cfg.steps; ++t) {
    Matrix next = hpr_step(t, s, cc.nbrs, cc.inputs.positions, params, cache ? &cc.steps[t] : nullptr);
    out.features.middleRows(row, next.rows()) = next;
    row += static_cast<int>(next.rows());
    if (cache) cc.step_inputs.push_back(std::move(s));
    s = std::move(next);
  }
  return out;
}

void hpr_encode_backward(const HprConfig& cfg, const HprEncodeCache& cache, const Matrix& d_features,
                         HprParams& params) {
  if (d_features.cols() == 0) return;
  if (cache.steps.size() != static_cast<std::size_t>(cfg.steps) || cache.step_inputs.size() != cache.steps.size()) {
    throw ShapeError("hpr_encode_backward: cache was not filled by hpr_encode");
  }
  int row = cfg.output_width();
  Matrix d_s;  // gradient w.r.t. s^{t+1} flowing from later steps
  for (int t = cfg.steps - 1; t >= 0; --t) {
    const int w = cfg.width_at(t + 1);
    row -= w;
    Matrix d_out = d_features.middleRows(row, w);
    if (d_s.size() > 0) d_out += d_s;
    d_s = hpr_step_backward(t, cache.steps[t], d_out, cache.nbrs, params);
  }
  params.encoder.backward(cache.encoder, d_s, false);
}

}  // namespace ldr
