#pragma once

#include <cstddef>
#include <vector>

namespace ldr {

/// Row-major interleaved multi-channel grid of doubles (depth maps, RGB proxies).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c = 1, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return data.empty(); }
  bool in_bounds(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }
  double& at(int u, int v, int c = 0) {
    return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
  }
  double at(int u, int v, int c = 0) const {
    return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
  }
};

}  // namespace ldr
