#pragma once

// Orthographic positional maps of the skinned template. The canonical
// template faces +y; the front map looks along -y, the back map along +y.
// Each covered pixel stores the canonical-space surface point of the nearest
// (depth-buffered) posed surface sample; uncovered pixels hold (0,0,0) with
// coverage false.

#include "gsav/anim/template_model.hpp"
#include "gsav/render/camera.hpp"

#include <limits>

namespace gsav {

enum class MapSide { front, back };

struct PositionalMap {
  MapSide side = MapSide::front;
  int width = 0, height = 0;
  std::vector<Vec3> positions;       // row-major, canonical meters
  std::vector<std::uint8_t> coverage;
  CameraModel camera;                // orthographic camera used to render

  Vec3& position(int y, int x) { return positions[static_cast<std::size_t>(y) * width + x]; }
  const Vec3& position(int y, int x) const {
    return positions[static_cast<std::size_t>(y) * width + x];
  }
  bool covered(int y, int x) const { return coverage[static_cast<std::size_t>(y) * width + x] != 0; }

  std::size_t covered_count() const {
    std::size_t n = 0;
    for (auto c : coverage) n += c;
    return n;
  }
};

// Viewing rotation for a map side (world -> camera, camera looks along +z_cam).
inline Mat3 posmap_view_rotation(MapSide side) {
  Mat3 R;
  if (side == MapSide::front)
    R << -1, 0, 0, 0, 0, -1, 0, -1, 0;  // looks along -y, up is +z
  else
    R << 1, 0, 0, 0, 0, -1, 0, 1, 0;    // looks along +y
  return R;
}

// Optional explicit window: bounds of the mapped region in camera-plane
// coordinates (meters). When absent, the mesh bounds plus margin are used.
struct OrthoWindow {
  double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
};

inline PositionalMap render_positional_map(const SkinnedTemplate& tmpl, const Pose& pose,
                                           MapSide side, int resolution,
                                           const OrthoWindow* window = nullptr,
                                           const std::vector<std::uint8_t>* vertex_mask = nullptr) {
  PositionalMap map;
  map.side = side;
  map.width = map.height = resolution;
  map.positions.assign(static_cast<std::size_t>(resolution) * resolution, Vec3::Zero());
  map.coverage.assign(static_cast<std::size_t>(resolution) * resolution, 0);

  const Eigen::MatrixXd canon = tmpl.shaped_vertices();
  const Eigen::MatrixXd posed = lbs_vertices(tmpl, pose);
  const Mat3 R = posmap_view_rotation(side);

  OrthoWindow win;
  if (window) {
    win = *window;
  } else {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (Eigen::Index i = 0; i < posed.rows(); ++i) {
      const Vec3 pc = R * posed.row(i).transpose();
      x0 = std::min(x0, pc.x()); x1 = std::max(x1, pc.x());
      y0 = std::min(y0, pc.y()); y1 = std::max(y1, pc.y());
    }
    const double mx = 0.05 * (x1 - x0), my = 0.05 * (y1 - y0);
    win = {x0 - mx, x1 + mx, y0 - my, y1 + my};
  }
  // Square pixels over the window (isotropic scale, window centered).
  const double span = std::max(win.x_max - win.x_min, win.y_max - win.y_min);
  const double scale = resolution / span;  // px per meter
  map.camera.mode = CameraMode::orthographic;
  map.camera.fx = map.camera.fy = scale;
  map.camera.cx = resolution / 2.0 - scale * 0.5 * (win.x_min + win.x_max);
  map.camera.cy = resolution / 2.0 - scale * 0.5 * (win.y_min + win.y_max);
  map.camera.rotation = R;
  map.camera.translation = Vec3::Zero();
  map.camera.width = map.camera.height = resolution;

  std::vector<double> zbuf(static_cast<std::size_t>(resolution) * resolution,
                           std::numeric_limits<double>::infinity());

  for (Eigen::Index f = 0; f < tmpl.faces.rows(); ++f) {
    const int ia = tmpl.faces(f, 0), ib = tmpl.faces(f, 1), ic = tmpl.faces(f, 2);
    if (vertex_mask && !((*vertex_mask)[ia] && (*vertex_mask)[ib] && (*vertex_mask)[ic])) continue;
    const Vec3 pa = map.camera.to_camera(posed.row(ia).transpose());
    const Vec3 pb = map.camera.to_camera(posed.row(ib).transpose());
    const Vec3 pc = map.camera.to_camera(posed.row(ic).transpose());
    const Vec2 a = map.camera.project_cam(pa), b = map.camera.project_cam(pb),
               c = map.camera.project_cam(pc);
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (std::abs(area) < 1e-12) continue;
    const int px0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) - 0.5)));
    const int px1 = std::min(resolution - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
    const int py0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) - 0.5)));
    const int py1 = std::min(resolution - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
    for (int y = py0; y <= py1; ++y) {
      for (int x = px0; x <= px1; ++x) {
        const Vec2 p(x + 0.5, y + 0.5);
        const double w0 = ((b - p).x() * (c - p).y() - (b - p).y() * (c - p).x()) / area;
        const double w1 = ((c - p).x() * (a - p).y() - (c - p).y() * (a - p).x()) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double depth = w0 * pa.z() + w1 * pb.z() + w2 * pc.z();
        const std::size_t idx = static_cast<std::size_t>(y) * resolution + x;
        if (depth >= zbuf[idx]) continue;
        zbuf[idx] = depth;
        map.positions[idx] = w0 * canon.row(ia).transpose() + w1 * canon.row(ib).transpose() +
                             w2 * canon.row(ic).transpose();
        map.coverage[idx] = 1;
      }
    }
  }
  return map;
}

inline PositionalMap render_positional_map(const SkinnedTemplate& tmpl, MapSide side,
                                           int resolution, const OrthoWindow* window = nullptr,
                                           const std::vector<std::uint8_t>* vertex_mask = nullptr) {
  return render_positional_map(tmpl, Pose::identity(tmpl.joint_count()), side, resolution, window,
                               vertex_mask);
}

// Vertices bound to the head joint above `threshold` total weight.
inline std::vector<std::uint8_t> head_vertex_mask(const SkinnedTemplate& tmpl,
                                                  double threshold = 0.5) {
  std::vector<std::uint8_t> mask(tmpl.vertex_count());
  for (Eigen::Index i = 0; i < tmpl.vertex_count(); ++i)
    mask[i] = tmpl.weights(i, tmpl.head_joint) > threshold ? 1 : 0;
  return mask;
}

// Camera-plane window over the head-bound canonical vertices, with margin.
inline OrthoWindow head_window(const SkinnedTemplate& tmpl, MapSide side, double margin = 0.15) {
  const auto mask = head_vertex_mask(tmpl);
  const Eigen::MatrixXd V = tmpl.shaped_vertices();
  const Mat3 R = posmap_view_rotation(side);
  OrthoWindow w{1e30, -1e30, 1e30, -1e30};
  for (Eigen::Index i = 0; i < V.rows(); ++i) {
    if (!mask[i]) continue;
    const Vec3 pc = R * V.row(i).transpose();
    w.x_min = std::min(w.x_min, pc.x()); w.x_max = std::max(w.x_max, pc.x());
    w.y_min = std::min(w.y_min, pc.y()); w.y_max = std::max(w.y_max, pc.y());
  }
  const double mx = margin * (w.x_max - w.x_min), my = margin * (w.y_max - w.y_min);
  return {w.x_min - mx, w.x_max + mx, w.y_min - my, w.y_max + my};
}

}  // namespace gsav
