#pragma once

// Tiled differentiable splatting: screen-space projection of 3D Gaussians,
// front-to-back alpha compositing, and analytic gradients for every
// pre-activation primitive attribute.
//
// The effective per-pixel opacity is alpha' = opacity * exp(-m/2) where m is
// the 2D Mahalanobis distance, zero beyond cutoff_maha2. Compositing stops
// once transmittance drops below term_transmittance; remaining transmittance
// multiplies the background. Depth ties break by primitive index so output is
// bit-identical across runs.

#include "gsav/core/gaussian.hpp"
#include "gsav/render/camera.hpp"
#include "gsav/render/image.hpp"

#include <algorithm>
#include <optional>

namespace gsav {

struct RenderConfig {
  int tile_size = 16;
  double low_pass = 0.3;             // px^2, isotropic dilation of cov2d
  double cutoff_maha2 = 9.0;         // 3-sigma contributor cutoff
  double term_transmittance = 1e-4;  // early termination threshold
  double near_plane = 0.01;          // meters, perspective culling
  double alpha_limit = 0.9999;       // keeps 1 - alpha' away from zero
};

struct ProjectedGaussian {
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Zero();
  Mat2 conic = Mat2::Zero();
  double depth = 0;
  Vec3 color = Vec3::Zero();      // clamped to [0,1]
  Vec3 color_raw = Vec3::Zero();  // pre-clamp SH evaluation
  double opacity = 0;             // activated, including opacity_mult
  double radius = 0;              // 3-sigma screen radius, px
  bool valid = false;
};

struct RenderOutput {
  ImageF color;         // H x W x 3, [0,1]
  ImageF alpha;         // H x W x 1, [0,1]
  ImageF contributors;  // H x W x 1, count of evaluated contributors
};

struct RenderGradients {
  std::vector<Vec3> d_mean;
  std::vector<Vec3> d_log_scale;
  std::vector<Vec4> d_rotation;       // w.r.t. stored (unnormalized) quaternion
  std::vector<double> d_opacity_logit;
  std::vector<Eigen::VectorXd> d_color_coeffs;

  explicit RenderGradients(std::size_t n = 0, int coeffs = 3)
      : d_mean(n, Vec3::Zero()),
        d_log_scale(n, Vec3::Zero()),
        d_rotation(n, Vec4::Zero()),
        d_opacity_logit(n, 0.0),
        d_color_coeffs(n, Eigen::VectorXd::Zero(coeffs)) {}
};

inline ProjectedGaussian project_gaussian(const GaussianPrimitive& g, const CameraModel& camera,
                                          int sh_degree, const RenderConfig& cfg = {}) {
  ProjectedGaussian out;
  const Vec3 pc = camera.to_camera(g.mean);
  if (camera.mode == CameraMode::perspective && pc.z() < cfg.near_plane) return out;  // culled

  const Mat3 cov = build_covariance(g.scale(), g.rotation);
  const Mat3 cov_cam = camera.rotation * cov * camera.rotation.transpose();
  const auto J = camera.projection_jacobian(pc);
  out.cov2d = J * cov_cam * J.transpose() + cfg.low_pass * Mat2::Identity();
  const double det = out.cov2d.determinant();
  out.conic << out.cov2d(1, 1), -out.cov2d(0, 1), -out.cov2d(1, 0), out.cov2d(0, 0);
  out.conic /= det;
  out.mean2d = camera.project_cam(pc);
  out.depth = pc.z();
  out.color_raw = eval_color(g.color_coeffs, camera.view_direction(g.mean), sh_degree);
  out.color = out.color_raw.cwiseMax(0.0).cwiseMin(1.0);
  out.opacity = g.opacity();

  const double mid = 0.5 * (out.cov2d(0, 0) + out.cov2d(1, 1));
  const double disc = std::sqrt(std::max(0.0, mid * mid - det));
  out.radius = 3.0 * std::sqrt(std::max(1e-12, mid + disc));
  out.valid = true;
  return out;
}

namespace detail {

struct TileLists {
  int tiles_x = 0, tiles_y = 0;
  // Per tile: contributing projected-gaussian indices, depth-sorted.
  std::vector<std::vector<int>> lists;
};

inline TileLists build_tiles(const std::vector<ProjectedGaussian>& proj, int width, int height,
                             const RenderConfig& cfg) {
  TileLists tl;
  tl.tiles_x = (width + cfg.tile_size - 1) / cfg.tile_size;
  tl.tiles_y = (height + cfg.tile_size - 1) / cfg.tile_size;
  tl.lists.assign(static_cast<std::size_t>(tl.tiles_x) * tl.tiles_y, {});
  for (int i = 0; i < static_cast<int>(proj.size()); ++i) {
    const auto& p = proj[i];
    if (!p.valid) continue;
    const int x0 = std::clamp(static_cast<int>(std::floor((p.mean2d.x() - p.radius) / cfg.tile_size)), 0, tl.tiles_x - 1);
    const int x1 = std::clamp(static_cast<int>(std::floor((p.mean2d.x() + p.radius) / cfg.tile_size)), 0, tl.tiles_x - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor((p.mean2d.y() - p.radius) / cfg.tile_size)), 0, tl.tiles_y - 1);
    const int y1 = std::clamp(static_cast<int>(std::floor((p.mean2d.y() + p.radius) / cfg.tile_size)), 0, tl.tiles_y - 1);
    if (p.mean2d.x() + p.radius < 0 || p.mean2d.x() - p.radius > width ||
        p.mean2d.y() + p.radius < 0 || p.mean2d.y() - p.radius > height)
      continue;
    for (int ty = y0; ty <= y1; ++ty)
      for (int tx = x0; tx <= x1; ++tx) tl.lists[static_cast<std::size_t>(ty) * tl.tiles_x + tx].push_back(i);
  }
  for (auto& list : tl.lists)
    std::sort(list.begin(), list.end(), [&](int a, int b) {
      if (proj[a].depth != proj[b].depth) return proj[a].depth < proj[b].depth;
      return a < b;
    });
  return tl;
}

// One evaluated contributor at a pixel (transient, per-pixel backward).
struct Contribution {
  int index;
  Vec2 delta;
  double gauss;      // exp(-m/2)
  double alpha_eff;  // min(alpha_limit, opacity * gauss)
  double transmittance_before;
  bool clamped;
};

}  // namespace detail

inline std::vector<ProjectedGaussian> project_all(const GaussianSet& set, const CameraModel& camera,
                                                  const RenderConfig& cfg = {}) {
  std::vector<ProjectedGaussian> proj(set.size());
  for (std::size_t i = 0; i < set.size(); ++i)
    proj[i] = project_gaussian(set.primitives[i], camera, set.sh_degree, cfg);
  return proj;
}

inline RenderOutput rasterize(const GaussianSet& set, const CameraModel& camera,
                              const Vec3& background, const RenderConfig& cfg = {}) {
  camera.validate();
  RenderOutput out;
  out.color = ImageF(camera.width, camera.height, 3);
  out.alpha = ImageF(camera.width, camera.height, 1);
  out.contributors = ImageF(camera.width, camera.height, 1);

  const auto proj = project_all(set, camera, cfg);
  const auto tiles = detail::build_tiles(proj, camera.width, camera.height, cfg);

  for (int ty = 0; ty < tiles.tiles_y; ++ty) {
    for (int tx = 0; tx < tiles.tiles_x; ++tx) {
      const auto& list = tiles.lists[static_cast<std::size_t>(ty) * tiles.tiles_x + tx];
      const int y1 = std::min((ty + 1) * cfg.tile_size, camera.height);
      const int x1 = std::min((tx + 1) * cfg.tile_size, camera.width);
      for (int y = ty * cfg.tile_size; y < y1; ++y) {
        for (int x = tx * cfg.tile_size; x < x1; ++x) {
          const Vec2 pix(x + 0.5, y + 0.5);
          double T = 1.0;
          Vec3 c = Vec3::Zero();
          int n = 0;
          for (int idx : list) {
            if (T < cfg.term_transmittance) break;
            const auto& p = proj[idx];
            const Vec2 d = pix - p.mean2d;
            const double m = d.dot(p.conic * d);
            if (m > cfg.cutoff_maha2) continue;
            const double a = std::min(cfg.alpha_limit, p.opacity * std::exp(-0.5 * m));
            c += T * a * p.color;
            T *= 1.0 - a;
            ++n;
          }
          c += T * background;
          out.color.at(y, x, 0) = c.x();
          out.color.at(y, x, 1) = c.y();
          out.color.at(y, x, 2) = c.z();
          out.alpha.at(y, x) = 1.0 - T;
          out.contributors.at(y, x) = n;
        }
      }
    }
  }
  return out;
}

namespace detail {

// Backward through the screen-space projection of one primitive: accumulated
// screen gradients -> pre-activation attribute gradients.
inline void projection_backward(const GaussianPrimitive& g, const CameraModel& camera,
                                int sh_degree, const RenderConfig& cfg,
                                const ProjectedGaussian& p, const Vec2& g_mean2d,
                                const Mat2& g_conic, const Vec3& g_color, double g_alpha_eff,
                                std::size_t i, RenderGradients& grads) {
  const Vec3 pc = camera.to_camera(g.mean);
  const auto J = camera.projection_jacobian(pc);
  const Mat3 cov = build_covariance(g.scale(), g.rotation);
  const Mat3 cov_cam = camera.rotation * cov * camera.rotation.transpose();

  // conic = inverse(cov2d): dL/dcov2d = -Q^T dL/dQ Q^T, symmetrized.
  const Mat2 gq_sym = 0.5 * (g_conic + g_conic.transpose());
  Mat2 g_cov2d = -p.conic * gq_sym * p.conic;
  g_cov2d = 0.5 * (g_cov2d + g_cov2d.transpose());

  // cov2d = J cov_cam J^T + low_pass I.
  const Eigen::Matrix<double, 2, 3> g_J = 2.0 * g_cov2d * J * cov_cam;
  const Mat3 g_cov_cam = J.transpose() * g_cov2d * J;

  Vec3 g_pcam = J.transpose() * g_mean2d;
  if (camera.mode == CameraMode::perspective) {
    // J depends on pc: J = [[fx/z, 0, -fx x/z^2], [0, fy/z, -fy y/z^2]].
    const double z = pc.z(), iz2 = 1.0 / (z * z), iz3 = iz2 / z;
    g_pcam.x() += g_J(0, 2) * (-camera.fx * iz2);
    g_pcam.y() += g_J(1, 2) * (-camera.fy * iz2);
    g_pcam.z() += g_J(0, 0) * (-camera.fx * iz2) + g_J(0, 2) * (2 * camera.fx * pc.x() * iz3) +
                  g_J(1, 1) * (-camera.fy * iz2) + g_J(1, 2) * (2 * camera.fy * pc.y() * iz3);
  }
  Vec3 g_mean = camera.rotation.transpose() * g_pcam;

  // Color: clamp mask, then SH coefficients and (perspective) view direction.
  Vec3 gc = Vec3::Zero();
  for (int ch = 0; ch < 3; ++ch)
    if (p.color_raw[ch] > 0.0 && p.color_raw[ch] < 1.0) gc[ch] = g_color[ch];
  const Vec3 vdir = camera.view_direction(g.mean);
  grads.d_color_coeffs[i].segment<3>(0) += kSH0 * gc;
  if (sh_degree == 1) {
    grads.d_color_coeffs[i].segment<3>(3) += kSH1 * vdir.y() * gc;
    grads.d_color_coeffs[i].segment<3>(6) += kSH1 * vdir.z() * gc;
    grads.d_color_coeffs[i].segment<3>(9) += kSH1 * vdir.x() * gc;
    if (camera.mode == CameraMode::perspective) {
      Vec3 g_vdir;
      g_vdir.x() = kSH1 * g.color_coeffs.segment<3>(9).dot(gc);
      g_vdir.y() = kSH1 * g.color_coeffs.segment<3>(3).dot(gc);
      g_vdir.z() = kSH1 * g.color_coeffs.segment<3>(6).dot(gc);
      const Vec3 d = g.mean - camera.center();
      const double r = d.norm();
      g_mean += (Mat3::Identity() - vdir * vdir.transpose()) * g_vdir / r;
    }
  }

  // Opacity: alpha = mult * sigmoid(logit).
  const double s = sigmoid(g.opacity_logit);
  grads.d_opacity_logit[i] += g_alpha_eff * g.opacity_mult * s * (1.0 - s);

  // cov_cam = Rc cov Rc^T; cov = Rq diag(s^2) Rq^T.
  const Mat3 g_cov = camera.rotation.transpose() * g_cov_cam * camera.rotation;
  const Mat3 g_cov_sym = 0.5 * (g_cov + g_cov.transpose());
  const Vec4 qn = quat_normalize(g.rotation);
  const Mat3 Rq = quat_to_rotmat(g.rotation);
  const Vec3 sc = g.scale();
  const Mat3 D = sc.array().square().matrix().asDiagonal();

  const Mat3 g_Rq = 2.0 * g_cov_sym * Rq * D;
  const Mat3 g_D = Rq.transpose() * g_cov_sym * Rq;
  for (int k = 0; k < 3; ++k) grads.d_log_scale[i][k] += 2.0 * sc[k] * sc[k] * g_D(k, k);

  const double w = qn[0], qx = qn[1], qy = qn[2], qz = qn[3];
  Mat3 dRdq[4];
  dRdq[0] << 0, -qz, qy, qz, 0, -qx, -qy, qx, 0;
  dRdq[1] << 0, qy, qz, qy, -2 * qx, -w, qz, w, -2 * qx;
  dRdq[2] << -2 * qy, qx, w, qx, 0, qz, -w, qz, -2 * qy;
  dRdq[3] << -2 * qz, -w, qx, w, -2 * qz, qy, qx, qy, 0;
  Vec4 g_qn;
  for (int k = 0; k < 4; ++k) g_qn[k] = 2.0 * (g_Rq.cwiseProduct(dRdq[k])).sum();
  // Through normalization of the stored quaternion.
  const double qnorm = g.rotation.norm();
  grads.d_rotation[i] += (g_qn - qn * qn.dot(g_qn)) / qnorm;

  grads.d_mean[i] += g_mean;
}

}  // namespace detail

// Gradients of <grad_color, rendered> + <grad_alpha, alpha> with respect to
// every pre-activation attribute. Culled primitives get exact zeros.
inline RenderGradients rasterize_backward(const GaussianSet& set, const CameraModel& camera,
                                          const Vec3& background, const ImageF& grad_color,
                                          const ImageF& grad_alpha,
                                          const RenderConfig& cfg = {}) {
  camera.validate();
  if (grad_color.width != camera.width || grad_color.height != camera.height ||
      grad_color.channels != 3)
    throw std::invalid_argument("rasterize_backward: grad_color shape mismatch");
  if (grad_alpha.width != camera.width || grad_alpha.height != camera.height)
    throw std::invalid_argument("rasterize_backward: grad_alpha shape mismatch");

  const int coeffs = sh_coeff_count(set.sh_degree);
  RenderGradients grads(set.size(), coeffs);
  const auto proj = project_all(set, camera, cfg);
  const auto tiles = detail::build_tiles(proj, camera.width, camera.height, cfg);

  // Screen-space accumulators, reduced per primitive before the projection
  // backward so per-primitive work happens once.
  std::vector<Vec2> acc_mean2d(set.size(), Vec2::Zero());
  std::vector<Mat2> acc_conic(set.size(), Mat2::Zero());
  std::vector<Vec3> acc_color(set.size(), Vec3::Zero());
  std::vector<double> acc_alpha(set.size(), 0.0);

  std::vector<detail::Contribution> stack;
  for (int ty = 0; ty < tiles.tiles_y; ++ty) {
    for (int tx = 0; tx < tiles.tiles_x; ++tx) {
      const auto& list = tiles.lists[static_cast<std::size_t>(ty) * tiles.tiles_x + tx];
      if (list.empty()) continue;
      const int y1 = std::min((ty + 1) * cfg.tile_size, camera.height);
      const int x1 = std::min((tx + 1) * cfg.tile_size, camera.width);
      for (int y = ty * cfg.tile_size; y < y1; ++y) {
        for (int x = tx * cfg.tile_size; x < x1; ++x) {
          const Vec2 pix(x + 0.5, y + 0.5);
          const Vec3 gC(grad_color.at(y, x, 0), grad_color.at(y, x, 1), grad_color.at(y, x, 2));
          const double gA = grad_alpha.at(y, x);
          if (gC.isZero(0.0) && gA == 0.0) continue;

          // Recompute forward compositing at this pixel.
          stack.clear();
          double T = 1.0;
          for (int idx : list) {
            if (T < cfg.term_transmittance) break;
            const auto& p = proj[idx];
            const Vec2 d = pix - p.mean2d;
            const double m = d.dot(p.conic * d);
            if (m > cfg.cutoff_maha2) continue;
            const double gauss = std::exp(-0.5 * m);
            const double a_raw = p.opacity * gauss;
            const double a = std::min(cfg.alpha_limit, a_raw);
            stack.push_back({idx, d, gauss, a, T, a_raw > cfg.alpha_limit});
            T *= 1.0 - a;
          }
          const double T_end = T;

          // Reverse pass: suffix color (incl. background) and suffix alpha.
          Vec3 suffix_c = T_end * background;
          const double suffix_a = T_end;
          for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
            const auto& cb = *it;
            const auto& p = proj[cb.index];
            const double w = cb.transmittance_before * cb.alpha_eff;
            acc_color[cb.index] += w * gC;
            double g_aeff = cb.transmittance_before * p.color.dot(gC) -
                            (suffix_c.dot(gC) - gA * suffix_a) / (1.0 - cb.alpha_eff);
            suffix_c += w * p.color;
            if (!cb.clamped) {
              // alpha' = opacity * exp(-m/2)
              acc_alpha[cb.index] += g_aeff * cb.gauss;
              const double g_m = -0.5 * g_aeff * p.opacity * cb.gauss;
              acc_mean2d[cb.index] += g_m * (-2.0 * p.conic * cb.delta);
              acc_conic[cb.index] += g_m * cb.delta * cb.delta.transpose();
            }
          }
        }
      }
    }
  }

  for (std::size_t i = 0; i < set.size(); ++i) {
    if (!proj[i].valid) continue;
    detail::projection_backward(set.primitives[i], camera, set.sh_degree, cfg, proj[i],
                                acc_mean2d[i], acc_conic[i], acc_color[i], acc_alpha[i], i, grads);
  }
  return grads;
}

}  // namespace gsav
