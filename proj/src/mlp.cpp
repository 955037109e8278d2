#include "ldr/mlp.hpp"

#include <cmath>
#include <memory>

#include "ldr/error.hpp"

namespace ldr {

Mlp::Mlp(const std::vector<int>& widths, Activation hidden, Activation output, Rng& rng, double output_gain) {
  if (widths.size() < 2) throw ShapeError("Mlp needs at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l], out = widths[l + 1];
    if (in < 1 || out < 1) throw ShapeError("Mlp widths must be positive");
    const bool last = l + 2 == widths.size();
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / in) * (last ? output_gain : 1.0));
    DenseLayer layer;
    layer.weight.resize(out, in);
    for (int c = 0; c < in; ++c) {
      for (int r = 0; r < out; ++r) layer.weight(r, c) = normal(rng);
    }
    layer.bias = Vector::Zero(out);
    layer.activation = last ? output : hidden;
    layer.weight_grad = Matrix::Zero(out, in);
    layer.bias_grad = Vector::Zero(out);
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    if (layer.bias.size() != layer.weight.rows()) throw ShapeError("Mlp layer bias does not match weight rows");
    if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
      throw ShapeError("Mlp layer widths are inconsistent");
    }
    layer.weight_grad = Matrix::Zero(layer.weight.rows(), layer.weight.cols());
    layer.bias_grad = Vector::Zero(layer.bias.size());
  }
}

int Mlp::input_width() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }
int Mlp::output_width() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }

Matrix Mlp::forward(const Matrix& x, Cache* cache) const {
  if (x.rows() != input_width()) {
    throw ShapeError("Mlp input width " + std::to_string(x.rows()) + " != " + std::to_string(input_width()));
  }
  if (cache) {
    cache->inputs.resize(layers_.size());
    cache->outputs.resize(layers_.size());
  }
  Matrix a = input_scale_ == 1.0 ? x : Matrix(x * input_scale_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& layer = layers_[l];
    Matrix z = layer.weight * a;
    z.colwise() += layer.bias;
    if (layer.activation == Activation::relu) z = z.cwiseMax(0.0);
    if (layer.activation == Activation::tanh) z = z.array().tanh().matrix();
    if (cache) cache->inputs[l] = std::move(a);
    a = std::move(z);
    if (cache) cache->outputs[l] = a;
  }
  return a;
}

Matrix Mlp::backward(const Cache& cache, const Matrix& dy, bool want_input_grad) {
  if (cache.inputs.size() != layers_.size()) throw ShapeError("Mlp backward called with a foreign cache");
  Matrix g = dy;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    DenseLayer& layer = layers_[l];
    if (layer.activation == Activation::relu) {
      g = g.cwiseProduct((cache.outputs[l].array() > 0.0).cast<double>().matrix());
    } else if (layer.activation == Activation::tanh) {
      g = g.cwiseProduct((1.0 - cache.outputs[l].array().square()).matrix());
    }
    layer.weight_grad.noalias() += g * cache.inputs[l].transpose();
    layer.bias_grad += g.rowwise().sum();
    if (l > 0 || want_input_grad) {
      Matrix next = layer.weight.transpose() * g;
      g = std::move(next);
    } else {
      return Matrix();
    }
  }
  if (input_scale_ != 1.0) g *= input_scale_;
  return g;
}

void Mlp::scale_input(double s) {
  if (!(s > 0.0) || layers_.empty()) throw ShapeError("Mlp::scale_input needs s > 0 and a non-empty net");
  layers_.front().weight /= s;
  input_scale_ *= s;
}

void Mlp::zero_grad() {
  for (auto& layer : layers_) {
    layer.weight_grad.setZero();
    layer.bias_grad.setZero();
  }
}

void Mlp::collect_parameters(std::vector<ParamTensor>& out, const std::string& prefix) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    const std::string base = prefix + ".layer" + std::to_string(l);
    out.push_back({base + ".weight", {layer.weight.data(), static_cast<std::size_t>(layer.weight.size())},
                   {layer.weight_grad.data(), static_cast<std::size_t>(layer.weight_grad.size())}});
    out.push_back({base + ".bias", {layer.bias.data(), static_cast<std::size_t>(layer.bias.size())},
                   {layer.bias_grad.data(), static_cast<std::size_t>(layer.bias_grad.size())}});
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

MlpApplyResult mlp_apply(Mlp& net, const Vector& x) {
  auto cache = std::make_shared<Mlp::Cache>();
  Vector y = net.forward(x, cache.get());
  return {std::move(y), [&net, cache](const Vector& dy) -> Vector { return net.backward(*cache, dy); }};
}

}  // namespace ldr
