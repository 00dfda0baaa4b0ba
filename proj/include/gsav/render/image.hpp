#pragma once

// Row-major float image container shared by the rasterizer, losses and I/O.

#include <stdexcept>
#include <vector>

namespace gsav {

struct ImageF {
  int width = 0, height = 0, channels = 0;
  std::vector<double> data;  // [y][x][c]

  ImageF() = default;
  ImageF(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int y, int x, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool same_shape(const ImageF& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

inline void require_same_shape(const ImageF& a, const ImageF& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": image shape mismatch");
}

}  // namespace gsav
