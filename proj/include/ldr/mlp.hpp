#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ldr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

enum class Activation { identity, relu, tanh };

/// A named view of one parameter tensor and its gradient accumulator.
struct ParamTensor {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
  Activation activation = Activation::identity;
  Matrix weight_grad;
  Vector bias_grad;
};

/// Dense network over column batches (one sample per column). Gradients
/// accumulate into the layers until zero_grad().
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> outputs;
  };

  Mlp() = default;
  /// `widths` = {in, hidden..., out}. Weights are He-normal scaled by
  /// `output_gain` on the last layer; biases start at zero.
  Mlp(const std::vector<int>& widths, Activation hidden, Activation output, Rng& rng, double output_gain = 1.0);
  explicit Mlp(std::vector<DenseLayer> layers);

  int input_width() const;
  int output_width() const;
  bool empty() const { return layers_.empty(); }

  /// Throws ShapeError when x.rows() != input_width().
  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients for upstream `dy`; returns d/dx unless
  /// `want_input_grad` is false (then an empty matrix).
  Matrix backward(const Cache& cache, const Matrix& dy, bool want_input_grad = true);

  void zero_grad();
  void collect_parameters(std::vector<ParamTensor>& out, const std::string& prefix);
  std::size_t parameter_count() const;

  /// Multiplies every input by `s` before the first layer and divides the
  /// first-layer weights by `s`, so the function is unchanged but SGD sees the
  /// smaller input norm. Wide pooled RoI vectors need this to stay stable.
  void scale_input(double s);
  double input_scale() const { return input_scale_; }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

 private:
  std::vector<DenseLayer> layers_;
  double input_scale_ = 1.0;
};

struct MlpApplyResult {
  Vector y;
  /// Takes d loss / d y, accumulates parameter gradients into the net and
  /// returns d loss / d x.
  std::function<Vector(const Vector&)> backward;
};

MlpApplyResult mlp_apply(Mlp& net, const Vector& x);

}  // namespace ldr
