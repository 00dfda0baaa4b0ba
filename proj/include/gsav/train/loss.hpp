#pragma once

// Photometric + regularization loss with analytic gradients. Perceptual and
// adversarial terms are pluggable hooks (null by default); the offset
// regularizer acts on the decoded position residuals.

#include "gsav/deform/decoder.hpp"
#include "gsav/render/rasterizer.hpp"

#include <functional>

namespace gsav {

struct LossWeights {
  double l1 = 1.0;          // photometric L1 (mask term shares this weight)
  double perceptual = 0.1;  // hook weight (LPIPS stand-in)
  double offset = 5e-3;     // position residual regularizer
  double adversarial = 5e-3;  // hook weight, face path only
  // Stage-2 weight on the face-crop supervision path. The crop view covers
  // the head with ~40x the per-pixel density of the full image, so an
  // unweighted crop term dominates the head fit; stage 3 always uses 1.
  double face_crop = 0.02;
};

// A hook scores (rendered, target) and adds d(term)/d(rendered) into
// grad_color; the weighted value is added to the total by the caller.
using LossHook = std::function<double(const ImageF& rendered, const ImageF& target,
                                      ImageF& grad_color)>;

struct LossResult {
  double total = 0;
  double l1_color = 0, l1_mask = 0, offset_reg = 0, hook_perceptual = 0, hook_adversarial = 0;
  ImageF grad_color;  // d(total)/d(rendered color)
  ImageF grad_alpha;  // d(total)/d(rendered alpha)
};

inline double sign0(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

// Mean squared norm of the position residual channels across maps, with its
// gradient 2*lambda*dp/N written back into d_maps (matching rows).
inline double offset_regularizer(const std::vector<const ResidualAttributeMap*>& maps,
                                 double lambda,
                                 std::vector<Eigen::MatrixXd*> d_maps = {}) {
  std::size_t n = 0;
  for (const auto* m : maps) n += m->covered.size();
  if (n == 0) return 0;
  double acc = 0;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const auto& ch = maps[k]->channels;
    acc += ch.middleCols<3>(kResPosition).squaredNorm();
    if (!d_maps.empty() && d_maps[k])
      d_maps[k]->middleCols<3>(kResPosition) +=
          (2.0 * lambda / static_cast<double>(n)) * ch.middleCols<3>(kResPosition);
  }
  return lambda * acc / static_cast<double>(n);
}

// Masked photometric L1 + alpha/mask L1 + offset regularizer + hooks.
// `residual_maps` may be empty (pure rendering losses).
inline LossResult compute_loss(const RenderOutput& rendered, const ImageF& target,
                               const ImageF& mask,
                               const std::vector<const ResidualAttributeMap*>& residual_maps,
                               const LossWeights& weights, const LossHook& perceptual = {},
                               const LossHook& adversarial = {}) {
  require_same_shape(rendered.color, target, "compute_loss color");
  if (mask.width != rendered.alpha.width || mask.height != rendered.alpha.height ||
      mask.channels != 1)
    throw std::invalid_argument("compute_loss: mask resolution mismatch");

  LossResult r;
  r.grad_color = ImageF(target.width, target.height, 3);
  r.grad_alpha = ImageF(target.width, target.height, 1);

  const double inv_c = 1.0 / static_cast<double>(target.width * target.height * 3);
  const double inv_a = 1.0 / static_cast<double>(target.width * target.height);
  for (int y = 0; y < target.height; ++y)
    for (int x = 0; x < target.width; ++x) {
      const double m = mask.at(y, x, 0);
      for (int c = 0; c < 3; ++c) {
        const double d = rendered.color.at(y, x, c) - target.at(y, x, c);
        r.l1_color += m * std::abs(d) * inv_c;
        r.grad_color.at(y, x, c) = weights.l1 * m * sign0(d) * inv_c;
      }
      const double da = rendered.alpha.at(y, x, 0) - m;
      r.l1_mask += std::abs(da) * inv_a;
      r.grad_alpha.at(y, x, 0) = weights.l1 * sign0(da) * inv_a;
    }
  r.total = weights.l1 * (r.l1_color + r.l1_mask);

  r.offset_reg = offset_regularizer(residual_maps, weights.offset);
  r.total += r.offset_reg;

  if (perceptual) {
    ImageF g(target.width, target.height, 3);
    r.hook_perceptual = perceptual(rendered.color, target, g);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      r.grad_color.data[i] += weights.perceptual * g.data[i];
    r.total += weights.perceptual * r.hook_perceptual;
  }
  if (adversarial) {
    ImageF g(target.width, target.height, 3);
    r.hook_adversarial = adversarial(rendered.color, target, g);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      r.grad_color.data[i] += weights.adversarial * g.data[i];
    r.total += weights.adversarial * r.hook_adversarial;
  }
  return r;
}

}  // namespace gsav
