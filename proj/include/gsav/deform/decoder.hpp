#pragma once

// Pose-conditioned residual decoders for the body and face branches,
// residual application onto canonical Gaussians, and fusion of the two
// populations.
//
// Residual channel layout (color || auxiliary || position):
//   [0..11]  delta SH color coefficients
//   [12]     delta opacity (pre-activation)
//   [13..15] delta log-scale
//   [16..18] delta rotation (quaternion tangent)
//   [19..21] delta position (meters)

#include "gsav/deform/mlp.hpp"
#include "gsav/posmap/posmap.hpp"
#include "gsav/posmap/face_model.hpp"
#include "gsav/render/rasterizer.hpp"

namespace gsav {

inline constexpr int kResColor = 0;
inline constexpr int kResOpacity = 12;
inline constexpr int kResScale = 13;
inline constexpr int kResRotation = 16;
inline constexpr int kResPosition = 19;
inline constexpr int kResChannels = 22;

struct ResidualAttributeMap {
  int width = 0, height = 0;
  std::vector<std::uint8_t> coverage;
  std::vector<int> covered;   // linear pixel indices, scanline order
  Eigen::MatrixXd channels;   // covered.size() x kResChannels

  static ResidualAttributeMap zeros(int width, int height,
                                    const std::vector<std::uint8_t>& coverage) {
    ResidualAttributeMap m;
    m.width = width;
    m.height = height;
    m.coverage = coverage;
    for (int i = 0; i < width * height; ++i)
      if (coverage[static_cast<std::size_t>(i)]) m.covered.push_back(i);
    m.channels = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.covered.size()), kResChannels);
    return m;
  }
};

// --- quaternion exponential map (tangent 3-vector -> unit quaternion) ---

inline Vec4 quat_exp_tangent(const Vec3& delta) {
  const double theta = delta.norm();
  const double s = theta < 1e-4 ? 0.5 - theta * theta / 48.0 : std::sin(0.5 * theta) / theta;
  return Vec4(std::cos(0.5 * theta), s * delta.x(), s * delta.y(), s * delta.z());
}

inline Eigen::Matrix<double, 4, 3> quat_exp_tangent_jacobian(const Vec3& delta) {
  const double theta = delta.norm();
  double s, sp_over_theta;
  if (theta < 1e-4) {
    s = 0.5 - theta * theta / 48.0;
    sp_over_theta = -1.0 / 24.0;
  } else {
    s = std::sin(0.5 * theta) / theta;
    sp_over_theta = (0.5 * std::cos(0.5 * theta) * theta - std::sin(0.5 * theta)) /
                    (theta * theta * theta);
  }
  Eigen::Matrix<double, 4, 3> J;
  J.row(0) = -0.5 * s * delta.transpose();
  J.bottomRows<3>() = s * Mat3::Identity() + sp_over_theta * delta * delta.transpose();
  return J;
}

// a (x) b = quat_left_matrix(a) * b = quat_right_matrix(b) * a
inline Mat4 quat_left_matrix(const Vec4& a) {
  Mat4 L;
  L << a[0], -a[1], -a[2], -a[3],
       a[1],  a[0], -a[3],  a[2],
       a[2],  a[3],  a[0], -a[1],
       a[3], -a[2],  a[1],  a[0];
  return L;
}

inline Mat4 quat_right_matrix(const Vec4& b) {
  Mat4 R;
  R << b[0], -b[1], -b[2], -b[3],
       b[1],  b[0],  b[3], -b[2],
       b[2], -b[3],  b[0],  b[1],
       b[3],  b[2], -b[1],  b[0];
  return R;
}

// --- body decoder ---

struct BodyDecoderParams {
  Eigen::MatrixXd pose_proj;  // embed_dim x pose_dim
  Mlp mlp;
  int pe_bands = 4;

  static BodyDecoderParams create(int pose_dim, int embed_dim, int n_mlp, int cm, int pe_bands,
                                  Rng& rng) {
    BodyDecoderParams p;
    p.pe_bands = pe_bands;
    p.pose_proj = Eigen::MatrixXd::Zero(embed_dim, pose_dim);
    const double s = std::sqrt(1.0 / pose_dim);
    for (Eigen::Index i = 0; i < p.pose_proj.size(); ++i) p.pose_proj.data()[i] = s * rng.normal();
    MlpSpec spec;
    spec.input_dim = positional_encoding_dim(pe_bands) + embed_dim + 3;
    spec.output_dim = kResChannels;
    spec.depth = n_mlp;
    spec.width = 32 * cm;
    p.mlp = Mlp::create(spec, rng);
    return p;
  }

  std::uint64_t arch_hash() const {
    return mlp.spec.hash() ^ (static_cast<std::uint64_t>(pose_proj.rows()) << 32) ^
           static_cast<std::uint64_t>(pose_proj.cols());
  }
};

struct BodyDecodeCache {
  Mlp::Cache mlp_cache;
  Eigen::VectorXd pose_vec;
  int embed_offset = 0;  // column where the pose embedding starts
};

// Residuals for one positional map. The view embedding is the unit ray from
// the camera center to the view anchor (body centroid / head center).
inline ResidualAttributeMap decode_body_side(const PositionalMap& posmap, const Pose& pose,
                                             const CameraModel& camera, const Vec3& view_anchor,
                                             const BodyDecoderParams& params,
                                             BodyDecodeCache* cache = nullptr) {
  auto out = ResidualAttributeMap::zeros(posmap.width, posmap.height, posmap.coverage);
  const Eigen::VectorXd pose_vec = pose.flatten();
  if (pose_vec.size() != params.pose_proj.cols())
    throw std::invalid_argument("decode_body: pose dimension mismatch");
  const Eigen::VectorXd embed = params.pose_proj * pose_vec;
  const Vec3 vdir = camera.view_direction(view_anchor);

  const int ped = positional_encoding_dim(params.pe_bands);
  const Eigen::Index n = static_cast<Eigen::Index>(out.covered.size());
  Eigen::MatrixXd X(n, params.mlp.spec.input_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    positional_encoding(posmap.positions[static_cast<std::size_t>(out.covered[i])],
                        params.pe_bands, X.row(i).segment(0, ped));
    X.row(i).segment(ped, embed.size()) = embed.transpose();
    X.row(i).segment<3>(ped + embed.size()) = vdir.transpose();
  }
  out.channels = params.mlp.forward(X, cache ? &cache->mlp_cache : nullptr);
  if (cache) {
    cache->pose_vec = pose_vec;
    cache->embed_offset = ped;
  }
  return out;
}

struct BodyDecoderGrads {
  Eigen::MatrixXd d_pose_proj;
  Mlp::Gradients d_mlp;

  static BodyDecoderGrads zeros_like(const BodyDecoderParams& p) {
    return {Eigen::MatrixXd::Zero(p.pose_proj.rows(), p.pose_proj.cols()),
            Mlp::Gradients::zeros_like(p.mlp)};
  }
};

inline void decode_body_backward(const BodyDecoderParams& params, const BodyDecodeCache& cache,
                                 const Eigen::MatrixXd& d_channels, BodyDecoderGrads& grads) {
  const Eigen::MatrixXd dX = params.mlp.backward(cache.mlp_cache, d_channels, grads.d_mlp);
  const Eigen::VectorXd g_embed =
      dX.middleCols(cache.embed_offset, params.pose_proj.rows()).colwise().sum().transpose();
  grads.d_pose_proj += g_embed * cache.pose_vec.transpose();
}

// --- face decoders ---

struct FaceDecoderParams {
  Mlp positional;  // P: PE(p) -> delta position (3)
  Mlp color;       // C: PE(p_hat) ++ view -> delta color (12)
  Mlp auxiliary;   // A: PE(p_hat) -> delta opacity/scale/rotation (7)
  int pe_bands = 4;

  static FaceDecoderParams create(int n_mlp, int cm, int pe_bands, Rng& rng) {
    FaceDecoderParams p;
    p.pe_bands = pe_bands;
    const int ped = positional_encoding_dim(pe_bands);
    MlpSpec sp{ped, 3, n_mlp, 32 * cm};
    p.positional = Mlp::create(sp, rng);
    MlpSpec sc{ped + 3, 12, n_mlp, 32 * cm};
    p.color = Mlp::create(sc, rng);
    MlpSpec sa{ped, 7, n_mlp, 32 * cm};
    p.auxiliary = Mlp::create(sa, rng);
    return p;
  }

  std::uint64_t arch_hash() const {
    return positional.spec.hash() ^ (color.spec.hash() << 1) ^ (auxiliary.spec.hash() << 2);
  }
};

struct FaceDecodeCache {
  Mlp::Cache pos_cache, color_cache, aux_cache;
  std::vector<Vec3> p_in;    // raw positional-map points
  std::vector<Vec3> p_hat;   // deformed points
};

// Three-decoder face dataflow: p_hat = p + P(PE(p)); color from
// (PE(p_hat), view); auxiliary from PE(p_hat). Output channels follow the
// (color || auxiliary || position) concatenation; the position block holds
// the positional deformation p_hat - p.
inline ResidualAttributeMap decode_face_side(const AttributeGrid& pos_grid,
                                             const CameraModel& crop_camera,
                                             const Vec3& head_center,
                                             const FaceDecoderParams& params,
                                             FaceDecodeCache* cache = nullptr) {
  if (pos_grid.channels != 3)
    throw std::invalid_argument("decode_face: positional grid must have 3 channels");
  auto out = ResidualAttributeMap::zeros(pos_grid.width, pos_grid.height, pos_grid.coverage);
  const Eigen::Index n = static_cast<Eigen::Index>(out.covered.size());
  const int ped = positional_encoding_dim(params.pe_bands);

  Eigen::MatrixXd Xp(n, ped);
  std::vector<Vec3> p_in(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int px = out.covered[i] % pos_grid.width, py = out.covered[i] / pos_grid.width;
    p_in[static_cast<std::size_t>(i)] =
        Vec3(pos_grid.at(py, px, 0), pos_grid.at(py, px, 1), pos_grid.at(py, px, 2));
    positional_encoding(p_in[static_cast<std::size_t>(i)], params.pe_bands, Xp.row(i));
  }
  const Eigen::MatrixXd dpos =
      params.positional.forward(Xp, cache ? &cache->pos_cache : nullptr);

  const Vec3 vdir = crop_camera.view_direction(head_center);
  Eigen::MatrixXd Xc(n, ped + 3), Xa(n, ped);
  std::vector<Vec3> p_hat(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    p_hat[static_cast<std::size_t>(i)] = p_in[static_cast<std::size_t>(i)] + dpos.row(i).transpose();
    positional_encoding(p_hat[static_cast<std::size_t>(i)], params.pe_bands, Xa.row(i));
    Xc.row(i).segment(0, ped) = Xa.row(i);
    Xc.row(i).segment<3>(ped) = vdir.transpose();
  }
  out.channels.middleCols<12>(kResColor) =
      params.color.forward(Xc, cache ? &cache->color_cache : nullptr);
  out.channels.middleCols<7>(kResOpacity) =
      params.auxiliary.forward(Xa, cache ? &cache->aux_cache : nullptr);
  out.channels.middleCols<3>(kResPosition) = dpos;
  if (cache) {
    cache->p_in = std::move(p_in);
    cache->p_hat = std::move(p_hat);
  }
  return out;
}

struct FaceDecoderGrads {
  Mlp::Gradients d_positional, d_color, d_auxiliary;

  static FaceDecoderGrads zeros_like(const FaceDecoderParams& p) {
    return {Mlp::Gradients::zeros_like(p.positional), Mlp::Gradients::zeros_like(p.color),
            Mlp::Gradients::zeros_like(p.auxiliary)};
  }
};

// d(PE(p)) -> dp for one row.
inline Vec3 positional_encoding_backward(const Vec3& p, int bands,
                                         const Eigen::Ref<const Eigen::RowVectorXd>& d_pe) {
  Vec3 dp = d_pe.segment<3>(0).transpose();
  int k = 3;
  for (int band = 0; band < bands; ++band) {
    const double f = M_PI * static_cast<double>(1 << band);
    for (int c = 0; c < 3; ++c) {
      dp[c] += d_pe[k++] * f * std::cos(f * p[c]);
      dp[c] -= d_pe[k++] * f * std::sin(f * p[c]);
    }
  }
  return dp;
}

inline void decode_face_backward(const FaceDecoderParams& params, const FaceDecodeCache& cache,
                                 const Eigen::MatrixXd& d_channels, FaceDecoderGrads& grads) {
  const Eigen::Index n = d_channels.rows();
  const int ped = positional_encoding_dim(params.pe_bands);
  const Eigen::MatrixXd dXc =
      params.color.backward(cache.color_cache, d_channels.middleCols<12>(kResColor), grads.d_color);
  const Eigen::MatrixXd dXa = params.auxiliary.backward(
      cache.aux_cache, d_channels.middleCols<7>(kResOpacity), grads.d_auxiliary);
  // Both C and A consume PE(p_hat); the position block is p_hat - p directly.
  Eigen::MatrixXd d_dpos = d_channels.middleCols<3>(kResPosition);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd d_pe = dXc.row(i).segment(0, ped) + dXa.row(i);
    d_dpos.row(i) += positional_encoding_backward(cache.p_hat[static_cast<std::size_t>(i)],
                                                  params.pe_bands, d_pe)
                         .transpose();
  }
  params.positional.backward(cache.pos_cache, d_dpos, grads.d_positional);
}

// --- residual application and fusion ---

// Adds residuals pixel-by-pixel to the canonical primitives generated from
// the same maps: primitive order is [front covered pixels, back covered
// pixels], scanline order each.
inline GaussianSet apply_residuals(const GaussianSet& canonical,
                                   const ResidualAttributeMap& front,
                                   const ResidualAttributeMap& back) {
  const std::size_t n = front.covered.size() + back.covered.size();
  if (n != canonical.size())
    throw std::invalid_argument("apply_residuals: pixel/primitive correspondence mismatch (" +
                                std::to_string(n) + " residual pixels, " +
                                std::to_string(canonical.size()) + " primitives)");
  GaussianSet out = canonical;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& map = i < front.covered.size() ? front : back;
    const Eigen::Index r =
        static_cast<Eigen::Index>(i < front.covered.size() ? i : i - front.covered.size());
    auto& g = out.primitives[i];
    g.color_coeffs += map.channels.row(r).segment<12>(kResColor).transpose();
    g.opacity_logit += map.channels(r, kResOpacity);
    g.log_scale += map.channels.row(r).segment<3>(kResScale).transpose();
    const Vec3 drot = map.channels.row(r).segment<3>(kResRotation).transpose();
    g.rotation = quat_multiply(quat_exp_tangent(drot), g.rotation);
    g.mean += map.channels.row(r).segment<3>(kResPosition).transpose();
  }
  return out;
}

// Backward of apply_residuals: grads w.r.t. the deformed set -> grads w.r.t.
// the canonical set (returned in-place into `canonical_grads`) and the
// residual channels of each side.
inline void apply_residuals_backward(const GaussianSet& canonical,
                                     const ResidualAttributeMap& front,
                                     const ResidualAttributeMap& back,
                                     const RenderGradients& deformed_grads,
                                     RenderGradients& canonical_grads,
                                     Eigen::MatrixXd& d_front, Eigen::MatrixXd& d_back) {
  d_front = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(front.covered.size()), kResChannels);
  d_back = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(back.covered.size()), kResChannels);
  for (std::size_t i = 0; i < canonical.size(); ++i) {
    const bool is_front = i < front.covered.size();
    const auto& map = is_front ? front : back;
    Eigen::MatrixXd& dmap = is_front ? d_front : d_back;
    const Eigen::Index r = static_cast<Eigen::Index>(is_front ? i : i - front.covered.size());

    dmap.row(r).segment<12>(kResColor) = deformed_grads.d_color_coeffs[i].transpose();
    canonical_grads.d_color_coeffs[i] += deformed_grads.d_color_coeffs[i];
    dmap(r, kResOpacity) = deformed_grads.d_opacity_logit[i];
    canonical_grads.d_opacity_logit[i] += deformed_grads.d_opacity_logit[i];
    dmap.row(r).segment<3>(kResScale) = deformed_grads.d_log_scale[i].transpose();
    canonical_grads.d_log_scale[i] += deformed_grads.d_log_scale[i];
    dmap.row(r).segment<3>(kResPosition) = deformed_grads.d_mean[i].transpose();
    canonical_grads.d_mean[i] += deformed_grads.d_mean[i];

    const Vec3 drot = map.channels.row(r).segment<3>(kResRotation).transpose();
    const Vec4 dq = quat_exp_tangent(drot);
    const Vec4& g_out = deformed_grads.d_rotation[i];
    canonical_grads.d_rotation[i] += quat_left_matrix(dq).transpose() * g_out;
    const Vec4 g_dq = quat_right_matrix(canonical.primitives[i].rotation).transpose() * g_out;
    dmap.row(r).segment<3>(kResRotation) =
        (quat_exp_tangent_jacobian(drot).transpose() * g_dq).transpose();
  }
}

// Concatenation of body and face populations. Body primitives bound to the
// head joint above `weight_threshold` get their opacity attenuated so the
// face branch wins in the head region.
inline GaussianSet fuse(const GaussianSet& body, const GaussianSet& face,
                        const Eigen::VectorXd& body_head_weights, double weight_threshold = 0.5,
                        double attenuation = 0.1) {
  if (static_cast<std::size_t>(body_head_weights.size()) != body.size())
    throw std::invalid_argument("fuse: head weight vector size mismatch");
  GaussianSet out = body;
  out.sh_degree = body.sh_degree;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.tags[i] = SourceTag::body;
    if (body_head_weights[static_cast<Eigen::Index>(i)] > weight_threshold)
      out.primitives[i].opacity_mult *= attenuation;
  }
  GaussianSet face_tagged = face;
  for (auto& t : face_tagged.tags) t = SourceTag::face;
  out.append(face_tagged);
  return out;
}

}  // namespace gsav
