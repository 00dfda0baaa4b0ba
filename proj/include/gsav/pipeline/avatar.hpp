#pragma once

// Full avatar assembly: canonical Gaussian populations seeded from positional
// maps, pose-conditioned residual decoding, LBS reposing and fused rendering,
// with an end-to-end analytic backward pass into all trainable blocks.

#include "gsav/anim/skinning.hpp"
#include "gsav/deform/decoder.hpp"
#include "gsav/posmap/crop.hpp"
#include "gsav/posmap/face_model.hpp"
#include "gsav/posmap/posmap.hpp"
#include "gsav/render/rasterizer.hpp"

namespace gsav {

struct AvatarConfig {
  int body_map_res = 48;
  int face_map_res = 24;
  int densify_factor = 2;
  int n_mlp = 2;          // hidden layers per decoder
  int cm = 1;             // channel multiplier (width = 32*cm)
  int pe_bands = 4;
  int pose_embed_dim = 16;
  double head_weight_threshold = 0.5;
  double head_attenuation = 0.1;
  double init_opacity = 0.7;
  double init_scale_mult = 0.7;  // initial sigma = mult * pixel spacing
  bool enable_face = true;
};

struct AvatarModel {
  SkinnedTemplate tmpl;
  AvatarConfig config;

  PositionalMap front_map, back_map;  // canonical-pose body maps
  GaussianSet body_canonical;         // order: front covered px, back covered px
  Eigen::MatrixXd body_weights;       // n_body x J skinning weights
  Eigen::VectorXd body_head_weights;  // weight on the head joint per primitive

  CanonicalFaceModel face_model;       // front head-window grids
  CanonicalFaceModel face_model_back;  // back head-window grids
  GaussianSet face_canonical;  // order: front covered px, back covered px (densified)
  Eigen::MatrixXd face_weights;       // head one-hot rows

  BodyDecoderParams body_decoder;
  FaceDecoderParams face_decoder;

  std::size_t body_count() const { return body_canonical.size(); }
  std::size_t face_count() const { return face_canonical.size(); }
};

inline AttributeGrid posmap_to_grid(const PositionalMap& map) {
  AttributeGrid g(map.width, map.height, 3);
  g.coverage = map.coverage;
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) {
      const Vec3& p = map.position(y, x);
      for (int c = 0; c < 3; ++c) g.at(y, x, c) = map.covered(y, x) ? p[c] : 0.0;
    }
  return g;
}

namespace detail {

// One primitive per covered pixel, scanline order; isotropic init at the
// pixel spacing with mildly randomized gray color.
template <typename PositionOf>
void seed_from_pixels(GaussianSet& set, const std::vector<std::uint8_t>& coverage,
                      const PositionOf& position_of, int width, int height, double spacing,
                      const AvatarConfig& cfg, Rng& rng) {
  const double log_sigma = std::log(cfg.init_scale_mult * spacing);
  for (int i = 0; i < width * height; ++i) {
    if (!coverage[static_cast<std::size_t>(i)]) continue;
    GaussianPrimitive g;
    g.mean = position_of(i);
    g.log_scale = Vec3::Constant(log_sigma);
    g.rotation = Vec4(1, 0, 0, 0);
    g.opacity_logit = logit(cfg.init_opacity);
    g.color_coeffs = Eigen::VectorXd::Zero(sh_coeff_count(set.sh_degree));
    for (int c = 0; c < 3; ++c)
      g.color_coeffs[c] = (0.5 + 0.05 * rng.normal()) / kSH0;
    set.push_back(g, SourceTag::body);
  }
}

}  // namespace detail

// `face_frame_poses`: poses whose head-window maps are averaged into the
// canonical face model (the canonical pose alone is a valid sequence).
inline AvatarModel build_avatar(const SkinnedTemplate& tmpl, const AvatarConfig& cfg, Rng& rng,
                                const std::vector<Pose>& face_frame_poses = {}) {
  AvatarModel m;
  m.tmpl = tmpl;
  m.config = cfg;

  m.front_map = render_positional_map(tmpl, MapSide::front, cfg.body_map_res);
  m.back_map = render_positional_map(tmpl, MapSide::back, cfg.body_map_res);
  const double spacing = 1.0 / m.front_map.camera.fx;

  m.body_canonical.sh_degree = 1;
  for (const PositionalMap* map : {&m.front_map, &m.back_map})
    detail::seed_from_pixels(
        m.body_canonical, map->coverage,
        [map](int i) { return map->positions[static_cast<std::size_t>(i)]; }, map->width,
        map->height, spacing, cfg, rng);
  if (m.body_canonical.size() == 0) throw std::runtime_error("build_avatar: empty body maps");

  const auto binding = bind_gaussians_to_surface(m.body_canonical, tmpl);
  m.body_weights = binding;
  m.body_head_weights = binding.col(tmpl.head_joint);

  if (cfg.enable_face) {
    const auto head_mask = head_vertex_mask(tmpl);
    std::vector<Pose> poses = face_frame_poses;
    if (poses.empty()) poses.push_back(Pose::identity(tmpl.joint_count()));
    m.face_canonical.sh_degree = 1;
    for (const MapSide side : {MapSide::front, MapSide::back}) {
      const OrthoWindow win = head_window(tmpl, side);
      std::vector<AttributeGrid> frames;
      for (const auto& pose : poses)
        frames.push_back(posmap_to_grid(
            render_positional_map(tmpl, pose, side, cfg.face_map_res, &win, &head_mask)));
      CanonicalFaceModel& fm = side == MapSide::front ? m.face_model : m.face_model_back;
      fm = build_canonical_face_model(frames, cfg.densify_factor);

      const auto& dg = fm.densified;
      const double face_spacing = (win.x_max - win.x_min) / cfg.face_map_res / cfg.densify_factor;
      detail::seed_from_pixels(
          m.face_canonical, dg.coverage,
          [&dg](int i) {
            const int x = i % dg.width, y = i / dg.width;
            return Vec3(dg.at(y, x, 0), dg.at(y, x, 1), dg.at(y, x, 2));
          },
          dg.width, dg.height, face_spacing, cfg, rng);
    }
    for (auto& t : m.face_canonical.tags) t = SourceTag::face;
    m.face_weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.face_canonical.size()),
                                           tmpl.joint_count());
    m.face_weights.col(tmpl.head_joint).setOnes();
  }

  m.body_decoder = BodyDecoderParams::create(3 + 3 * tmpl.joint_count(), cfg.pose_embed_dim,
                                             cfg.n_mlp, cfg.cm, cfg.pe_bands, rng);
  m.face_decoder = FaceDecoderParams::create(cfg.n_mlp, cfg.cm, cfg.pe_bands, rng);
  return m;
}

struct AvatarForwardCache {
  BodyDecodeCache body_front, body_back;
  FaceDecodeCache face, face_back;
  ResidualAttributeMap res_front, res_back, res_face, res_face_back;
  GaussianSet body_deformed, face_deformed;  // canonical space, residuals applied
  std::vector<SkinningXform> body_xf, face_xf;
  GaussianSet fused;  // posed, pre-rasterization
};

namespace detail {

inline GaussianSet skin_with_cache(const GaussianSet& set, const Eigen::MatrixXd& weights,
                                   const std::vector<RigidTransform>& joint_xforms,
                                   std::vector<SkinningXform>& xf_out) {
  GaussianSet out = set;
  xf_out.resize(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto x = blend_skinning_transforms(weights.row(static_cast<Eigen::Index>(i)), joint_xforms);
    xf_out[i] = x;
    auto& g = out.primitives[i];
    g.mean = x.blend_linear * g.mean + x.blend_trans;
    g.rotation = quat_multiply(x.rotation_quat, quat_normalize(g.rotation));
  }
  return out;
}

}  // namespace detail

// Poses the avatar (residual decode + LBS + fuse) without rasterizing. The
// view-dependent decoder inputs use `camera`.
inline GaussianSet pose_avatar(const AvatarModel& m, const Pose& pose, const CameraModel& camera,
                               AvatarForwardCache* cache = nullptr) {
  AvatarForwardCache local;
  AvatarForwardCache& c = cache ? *cache : local;

  const auto joint_xforms = skinning_transforms(m.tmpl.skeleton, m.tmpl.shaped_offsets(), pose);
  const auto jpos = rest_joint_positions(m.tmpl.skeleton, m.tmpl.shaped_offsets());

  const Vec3 body_anchor = joint_xforms[0].apply(jpos[0]);
  c.res_front = decode_body_side(m.front_map, pose, camera, body_anchor, m.body_decoder,
                                 cache ? &c.body_front : nullptr);
  c.res_back = decode_body_side(m.back_map, pose, camera, body_anchor, m.body_decoder,
                                cache ? &c.body_back : nullptr);
  c.body_deformed = apply_residuals(m.body_canonical, c.res_front, c.res_back);
  GaussianSet body_posed = detail::skin_with_cache(c.body_deformed, m.body_weights, joint_xforms,
                                                   c.body_xf);

  GaussianSet face_posed;
  face_posed.sh_degree = m.body_canonical.sh_degree;
  if (m.config.enable_face && m.face_count() > 0) {
    const Vec3 head_anchor = joint_xforms[static_cast<std::size_t>(m.tmpl.head_joint)].apply(
        jpos[static_cast<std::size_t>(m.tmpl.head_joint)]);
    c.res_face = decode_face_side(m.face_model.densified, camera, head_anchor, m.face_decoder,
                                  cache ? &c.face : nullptr);
    c.res_face_back = decode_face_side(m.face_model_back.densified, camera, head_anchor,
                                       m.face_decoder, cache ? &c.face_back : nullptr);
    c.face_deformed = apply_residuals(m.face_canonical, c.res_face, c.res_face_back);
    face_posed = detail::skin_with_cache(c.face_deformed, m.face_weights, joint_xforms, c.face_xf);
  }

  c.fused = fuse(body_posed, face_posed, m.body_head_weights, m.config.head_weight_threshold,
                 m.config.enable_face && m.face_count() > 0 ? m.config.head_attenuation : 1.0);
  return c.fused;
}

inline RenderOutput render_avatar(const AvatarModel& m, const Pose& pose,
                                  const CameraModel& camera, const Vec3& background,
                                  const RenderConfig& cfg = {},
                                  AvatarForwardCache* cache = nullptr) {
  return rasterize(pose_avatar(m, pose, camera, cache), camera, background, cfg);
}

struct AvatarGrads {
  RenderGradients body_canonical, face_canonical;
  BodyDecoderGrads body_decoder;
  FaceDecoderGrads face_decoder;

  static AvatarGrads zeros_like(const AvatarModel& m) {
    const int coeffs = sh_coeff_count(m.body_canonical.sh_degree);
    return {RenderGradients(m.body_count(), coeffs), RenderGradients(m.face_count(), coeffs),
            BodyDecoderGrads::zeros_like(m.body_decoder),
            FaceDecoderGrads::zeros_like(m.face_decoder)};
  }
};

namespace detail {

// Backward of skin_with_cache for one primitive: grads w.r.t. posed
// attributes -> grads w.r.t. canonical (residual-applied) attributes.
inline void skinning_backward_prim(const SkinningXform& x, const Vec4& canonical_rotation,
                                   const Vec3& g_mean_p, const Vec4& g_rot_p, Vec3& g_mean_c,
                                   Vec4& g_rot_c) {
  g_mean_c += x.blend_linear.transpose() * g_mean_p;
  const double nrm = canonical_rotation.norm();
  const Vec4 n = canonical_rotation / nrm;
  const Vec4 g_n = quat_left_matrix(x.rotation_quat).transpose() * g_rot_p;
  g_rot_c += (g_n - n * n.dot(g_n)) / nrm;
}

}  // namespace detail

// Full backward: gradients of a scalar loss w.r.t. the rendered color/alpha
// images -> gradients for every trainable block. Also accumulates into
// `extra_fused_grads` positions if given grads w.r.t. the fused posed set
// (used by regularizers on decoded attributes).
// `offset_reg_coeff`: if nonzero, adds coeff * (position residual) to the
// position-channel gradients of every residual map before the decoder
// backward (the offset regularizer of the training loss; coeff = 2*lambda/N).
inline void render_avatar_backward(const AvatarModel& m, const Pose& pose,
                                   const CameraModel& camera, const Vec3& background,
                                   const AvatarForwardCache& cache, const ImageF& grad_color,
                                   const ImageF& grad_alpha, AvatarGrads& grads,
                                   const RenderConfig& cfg = {},
                                   const RenderGradients* extra_fused_grads = nullptr,
                                   double offset_reg_coeff = 0.0) {
  RenderGradients fused_grads =
      rasterize_backward(cache.fused, camera, background, grad_color, grad_alpha, cfg);
  if (extra_fused_grads) {
    for (std::size_t i = 0; i < cache.fused.size(); ++i) {
      fused_grads.d_mean[i] += extra_fused_grads->d_mean[i];
      fused_grads.d_log_scale[i] += extra_fused_grads->d_log_scale[i];
      fused_grads.d_rotation[i] += extra_fused_grads->d_rotation[i];
      fused_grads.d_opacity_logit[i] += extra_fused_grads->d_opacity_logit[i];
      fused_grads.d_color_coeffs[i] += extra_fused_grads->d_color_coeffs[i];
    }
  }

  const int coeffs = sh_coeff_count(m.body_canonical.sh_degree);
  const std::size_t nb = m.body_count(), nf = m.face_count();

  // Split fused grads and undo skinning per segment.
  RenderGradients body_def(nb, coeffs), face_def(nf, coeffs);
  for (std::size_t i = 0; i < nb + nf; ++i) {
    const bool body = i < nb;
    RenderGradients& seg = body ? body_def : face_def;
    const std::size_t k = body ? i : i - nb;
    const auto& xf = body ? cache.body_xf[k] : cache.face_xf[k];
    const auto& canon = body ? cache.body_deformed.primitives[k]
                             : cache.face_deformed.primitives[k];
    detail::skinning_backward_prim(xf, canon.rotation, fused_grads.d_mean[i],
                                   fused_grads.d_rotation[i], seg.d_mean[k], seg.d_rotation[k]);
    seg.d_log_scale[k] = fused_grads.d_log_scale[i];
    seg.d_color_coeffs[k] = fused_grads.d_color_coeffs[i];
    // opacity_mult (head attenuation) scales sigmoid'(logit) identically in
    // forward and backward, so the logit grad passes through unchanged.
    seg.d_opacity_logit[k] = fused_grads.d_opacity_logit[i];
  }

  Eigen::MatrixXd d_front, d_back;
  apply_residuals_backward(m.body_canonical, cache.res_front, cache.res_back, body_def,
                           grads.body_canonical, d_front, d_back);
  if (offset_reg_coeff != 0.0) {
    d_front.middleCols<3>(kResPosition) +=
        offset_reg_coeff * cache.res_front.channels.middleCols<3>(kResPosition);
    d_back.middleCols<3>(kResPosition) +=
        offset_reg_coeff * cache.res_back.channels.middleCols<3>(kResPosition);
  }
  decode_body_backward(m.body_decoder, cache.body_front, d_front, grads.body_decoder);
  decode_body_backward(m.body_decoder, cache.body_back, d_back, grads.body_decoder);

  if (nf > 0) {
    Eigen::MatrixXd d_face, d_face_back;
    apply_residuals_backward(m.face_canonical, cache.res_face, cache.res_face_back, face_def,
                             grads.face_canonical, d_face, d_face_back);
    if (offset_reg_coeff != 0.0) {
      d_face.middleCols<3>(kResPosition) +=
          offset_reg_coeff * cache.res_face.channels.middleCols<3>(kResPosition);
      d_face_back.middleCols<3>(kResPosition) +=
          offset_reg_coeff * cache.res_face_back.channels.middleCols<3>(kResPosition);
    }
    decode_face_backward(m.face_decoder, cache.face, d_face, grads.face_decoder);
    decode_face_backward(m.face_decoder, cache.face_back, d_face_back, grads.face_decoder);
  }
}

// --- flat parameter vector (for the optimizer and checkpoints) ---

namespace detail {

inline std::size_t gaussian_param_count(const GaussianSet& set) {
  return set.size() * (10 + 1 + static_cast<std::size_t>(sh_coeff_count(set.sh_degree)));
}

}  // namespace detail

// Parameter blocks, in order: body canonical attrs, face canonical attrs,
// body decoder (pose_proj then MLP), face decoder (P, C, A MLPs).
struct AvatarParamLayout {
  std::size_t body_attr = 0, face_attr = 0, body_dec = 0, face_dec = 0;
  std::size_t total() const { return body_attr + face_attr + body_dec + face_dec; }
  std::size_t body_attr_off = 0, face_attr_off = 0, body_dec_off = 0, face_dec_off = 0;
};

inline AvatarParamLayout avatar_param_layout(const AvatarModel& m) {
  AvatarParamLayout l;
  l.body_attr = detail::gaussian_param_count(m.body_canonical);
  l.face_attr = detail::gaussian_param_count(m.face_canonical);
  l.body_dec = static_cast<std::size_t>(m.body_decoder.pose_proj.size()) +
               m.body_decoder.mlp.parameter_count();
  l.face_dec = m.face_decoder.positional.parameter_count() +
               m.face_decoder.color.parameter_count() + m.face_decoder.auxiliary.parameter_count();
  l.body_attr_off = 0;
  l.face_attr_off = l.body_attr;
  l.body_dec_off = l.face_attr_off + l.face_attr;
  l.face_dec_off = l.body_dec_off + l.body_dec;
  return l;
}

namespace detail {

inline std::size_t flatten_gaussians(const GaussianSet& set, Eigen::VectorXd& out,
                                     std::size_t pos) {
  for (const auto& g : set.primitives) {
    out.segment<3>(static_cast<Eigen::Index>(pos)) = g.mean; pos += 3;
    out.segment<3>(static_cast<Eigen::Index>(pos)) = g.log_scale; pos += 3;
    out.segment<4>(static_cast<Eigen::Index>(pos)) = g.rotation; pos += 4;
    out[static_cast<Eigen::Index>(pos++)] = g.opacity_logit;
    out.segment(static_cast<Eigen::Index>(pos), g.color_coeffs.size()) = g.color_coeffs;
    pos += static_cast<std::size_t>(g.color_coeffs.size());
  }
  return pos;
}

inline std::size_t unflatten_gaussians(GaussianSet& set, const Eigen::VectorXd& in,
                                       std::size_t pos) {
  for (auto& g : set.primitives) {
    g.mean = in.segment<3>(static_cast<Eigen::Index>(pos)); pos += 3;
    g.log_scale = in.segment<3>(static_cast<Eigen::Index>(pos)); pos += 3;
    g.rotation = in.segment<4>(static_cast<Eigen::Index>(pos)); pos += 4;
    g.opacity_logit = in[static_cast<Eigen::Index>(pos++)];
    g.color_coeffs = in.segment(static_cast<Eigen::Index>(pos), g.color_coeffs.size());
    pos += static_cast<std::size_t>(g.color_coeffs.size());
  }
  return pos;
}

inline std::size_t flatten_gaussian_grads(const RenderGradients& g, Eigen::VectorXd& out,
                                          std::size_t pos) {
  for (std::size_t i = 0; i < g.d_mean.size(); ++i) {
    out.segment<3>(static_cast<Eigen::Index>(pos)) = g.d_mean[i]; pos += 3;
    out.segment<3>(static_cast<Eigen::Index>(pos)) = g.d_log_scale[i]; pos += 3;
    out.segment<4>(static_cast<Eigen::Index>(pos)) = g.d_rotation[i]; pos += 4;
    out[static_cast<Eigen::Index>(pos++)] = g.d_opacity_logit[i];
    out.segment(static_cast<Eigen::Index>(pos), g.d_color_coeffs[i].size()) = g.d_color_coeffs[i];
    pos += static_cast<std::size_t>(g.d_color_coeffs[i].size());
  }
  return pos;
}

inline std::size_t flatten_matrix(const Eigen::MatrixXd& M, Eigen::VectorXd& out,
                                  std::size_t pos) {
  out.segment(static_cast<Eigen::Index>(pos), M.size()) =
      Eigen::Map<const Eigen::VectorXd>(M.data(), M.size());
  return pos + static_cast<std::size_t>(M.size());
}

inline std::size_t unflatten_matrix(Eigen::MatrixXd& M, const Eigen::VectorXd& in,
                                    std::size_t pos) {
  Eigen::Map<Eigen::VectorXd>(M.data(), M.size()) =
      in.segment(static_cast<Eigen::Index>(pos), M.size());
  return pos + static_cast<std::size_t>(M.size());
}

}  // namespace detail

inline Eigen::VectorXd flatten_avatar_params(const AvatarModel& m) {
  const auto layout = avatar_param_layout(m);
  Eigen::VectorXd v(static_cast<Eigen::Index>(layout.total()));
  std::size_t pos = detail::flatten_gaussians(m.body_canonical, v, 0);
  pos = detail::flatten_gaussians(m.face_canonical, v, pos);
  pos = detail::flatten_matrix(m.body_decoder.pose_proj, v, pos);
  pos = m.body_decoder.mlp.flatten_into(v, pos);
  pos = m.face_decoder.positional.flatten_into(v, pos);
  pos = m.face_decoder.color.flatten_into(v, pos);
  pos = m.face_decoder.auxiliary.flatten_into(v, pos);
  if (pos != layout.total()) throw std::logic_error("flatten_avatar_params: layout mismatch");
  return v;
}

inline void unflatten_avatar_params(AvatarModel& m, const Eigen::VectorXd& v) {
  const auto layout = avatar_param_layout(m);
  if (static_cast<std::size_t>(v.size()) != layout.total())
    throw std::invalid_argument("unflatten_avatar_params: size mismatch");
  std::size_t pos = detail::unflatten_gaussians(m.body_canonical, v, 0);
  pos = detail::unflatten_gaussians(m.face_canonical, v, pos);
  pos = detail::unflatten_matrix(m.body_decoder.pose_proj, v, pos);
  pos = m.body_decoder.mlp.unflatten_from(v, pos);
  pos = m.face_decoder.positional.unflatten_from(v, pos);
  pos = m.face_decoder.color.unflatten_from(v, pos);
  pos = m.face_decoder.auxiliary.unflatten_from(v, pos);
}

inline Eigen::VectorXd flatten_avatar_grads(const AvatarModel& m, const AvatarGrads& g) {
  const auto layout = avatar_param_layout(m);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.total()));
  std::size_t pos = detail::flatten_gaussian_grads(g.body_canonical, v, 0);
  pos = detail::flatten_gaussian_grads(g.face_canonical, v, pos);
  pos = detail::flatten_matrix(g.body_decoder.d_pose_proj, v, pos);
  pos = g.body_decoder.d_mlp.flatten_into(v, pos);
  pos = g.face_decoder.d_positional.flatten_into(v, pos);
  pos = g.face_decoder.d_color.flatten_into(v, pos);
  pos = g.face_decoder.d_auxiliary.flatten_into(v, pos);
  if (pos != layout.total()) throw std::logic_error("flatten_avatar_grads: layout mismatch");
  return v;
}

}  // namespace gsav
