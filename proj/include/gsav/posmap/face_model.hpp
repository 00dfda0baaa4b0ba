#pragma once

// Canonical face model: per-pixel averaging of head attribute grids across
// frames and grid densification by separable linear interpolation.

#include "gsav/core/gaussian.hpp"

namespace gsav {

// H x W x C attribute grid with a coverage mask (uncovered pixels are
// excluded from reductions and hold zeros).
struct AttributeGrid {
  int width = 0, height = 0, channels = 0;
  std::vector<double> data;           // [y][x][c]
  std::vector<std::uint8_t> coverage;  // [y][x]

  AttributeGrid() = default;
  AttributeGrid(int w, int h, int c)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, 0.0),
        coverage(static_cast<std::size_t>(w) * h, 1) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool covered(int y, int x) const { return coverage[static_cast<std::size_t>(y) * width + x] != 0; }
  void set_covered(int y, int x, bool v) {
    coverage[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
  }
};

struct CanonicalFaceModel {
  AttributeGrid averaged;   // per-pixel mean over the dataset
  AttributeGrid densified;  // after interpolation
  int densify_factor = 1;
};

// Per-pixel arithmetic mean over frames (batch formulation). Coverage of the
// output is the intersection of the inputs' coverage.
inline AttributeGrid average_grids_batch(const std::vector<AttributeGrid>& grids) {
  if (grids.empty()) throw std::invalid_argument("average: empty frame sequence");
  const auto& g0 = grids[0];
  for (const auto& g : grids)
    if (g.width != g0.width || g.height != g0.height || g.channels != g0.channels)
      throw std::invalid_argument("average: grid shape mismatch");
  AttributeGrid out(g0.width, g0.height, g0.channels);
  for (int y = 0; y < g0.height; ++y)
    for (int x = 0; x < g0.width; ++x) {
      bool cov = true;
      for (const auto& g : grids) cov = cov && g.covered(y, x);
      out.set_covered(y, x, cov);
      if (!cov) continue;
      for (int c = 0; c < g0.channels; ++c) {
        double sum = 0;
        for (const auto& g : grids) sum += g.at(y, x, c);
        out.at(y, x, c) = sum / static_cast<double>(grids.size());
      }
    }
  return out;
}

// Streaming (running-mean) formulation; agrees with the batch mean to 1e-12.
class StreamingGridMean {
 public:
  void accumulate(const AttributeGrid& g) {
    if (count_ == 0) {
      mean_ = g;
    } else {
      if (g.width != mean_.width || g.height != mean_.height || g.channels != mean_.channels)
        throw std::invalid_argument("average: grid shape mismatch");
      for (std::size_t i = 0; i < mean_.coverage.size(); ++i)
        mean_.coverage[i] = mean_.coverage[i] && g.coverage[i];
      for (std::size_t i = 0; i < mean_.data.size(); ++i)
        mean_.data[i] += (g.data[i] - mean_.data[i]) / static_cast<double>(count_ + 1);
    }
    ++count_;
  }

  AttributeGrid finish() const {
    if (count_ == 0) throw std::invalid_argument("average: empty frame sequence");
    AttributeGrid out = mean_;
    // Zero out data under uncovered pixels (they are excluded from reductions).
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        if (!out.covered(y, x))
          for (int c = 0; c < out.channels; ++c) out.at(y, x, c) = 0;
    return out;
  }

 private:
  AttributeGrid mean_;
  std::size_t count_ = 0;
};

// Separable linear interpolation per channel. The output grid is node-aligned:
// size factor*(H-1)+1 so that every source node maps exactly onto an output
// node (output index factor*i) and interpolation stays convex.
inline AttributeGrid densify_grid(const AttributeGrid& grid, int factor) {
  if (factor < 1) throw std::invalid_argument("densify: factor must be >= 1");
  if (factor == 1) return grid;
  const int H = grid.height, W = grid.width;
  const int oh = factor * (H - 1) + 1, ow = factor * (W - 1) + 1;
  AttributeGrid out(ow, oh, grid.channels);
  for (int y = 0; y < oh; ++y) {
    const double sy = static_cast<double>(y) / factor;
    const int y0 = std::min(static_cast<int>(sy), H - 2);
    const double fy = sy - y0;
    for (int x = 0; x < ow; ++x) {
      const double sx = static_cast<double>(x) / factor;
      const int x0 = std::min(static_cast<int>(sx), W - 2);
      const double fx = sx - x0;
      // Only corners with nonzero interpolation weight count for coverage.
      const bool cov = ((1 - fx) * (1 - fy) == 0.0 || grid.covered(y0, x0)) &&
                       (fx * (1 - fy) == 0.0 || grid.covered(y0, x0 + 1)) &&
                       ((1 - fx) * fy == 0.0 || grid.covered(y0 + 1, x0)) &&
                       (fx * fy == 0.0 || grid.covered(y0 + 1, x0 + 1));
      out.set_covered(y, x, cov);
      if (!cov) continue;
      for (int c = 0; c < grid.channels; ++c) {
        const double v0 = (1 - fx) * grid.at(y0, x0, c) + fx * grid.at(y0, x0 + 1, c);
        const double v1 = (1 - fx) * grid.at(y0 + 1, x0, c) + fx * grid.at(y0 + 1, x0 + 1, c);
        out.at(y, x, c) = (1 - fy) * v0 + fy * v1;
      }
    }
  }
  // Source nodes reproduce bit-for-bit even when a neighbor is uncovered.
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      out.set_covered(factor * y, factor * x, grid.covered(y, x));
      for (int c = 0; c < grid.channels; ++c)
        out.at(factor * y, factor * x, c) = grid.at(y, x, c);
    }
  return out;
}

inline CanonicalFaceModel build_canonical_face_model(const std::vector<AttributeGrid>& frames,
                                                     int densify_factor) {
  CanonicalFaceModel model;
  model.averaged = average_grids_batch(frames);
  model.densified = densify_grid(model.averaged, densify_factor);
  model.densify_factor = densify_factor;
  return model;
}

}  // namespace gsav
