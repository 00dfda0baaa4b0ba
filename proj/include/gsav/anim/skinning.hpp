#pragma once

// Linear blend skinning of Gaussian primitives and surface binding of
// free-floating primitives to the template mesh.
//
// Positions follow classic LBS (the raw weight-blended matrix, matching mesh
// vertices exactly); covariance and the stored quaternion are conjugated by
// the polar-orthonormalized rotation of the blend.

#include "gsav/anim/template_model.hpp"
#include "gsav/core/gaussian.hpp"

namespace gsav {

// Closest rotation to M (polar decomposition via SVD, det corrected).
inline Mat3 polar_rotation(const Mat3& M) {
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0) {
    Mat3 D = Mat3::Identity();
    D(2, 2) = -1;
    R = svd.matrixU() * D * svd.matrixV().transpose();
  }
  return R;
}

// Per-primitive posing transform derived from blended joint transforms.
struct SkinningXform {
  Mat3 blend_linear;   // raw LBS linear part (applies to positions)
  Vec3 blend_trans;
  Mat3 rotation;       // polar-orthonormalized (applies to covariance)
  Vec4 rotation_quat;  // quaternion of `rotation`
};

inline SkinningXform blend_skinning_transforms(
    const Eigen::Ref<const Eigen::RowVectorXd>& weights,
    const std::vector<RigidTransform>& joint_xforms) {
  if (weights.size() != static_cast<Eigen::Index>(joint_xforms.size()))
    throw std::invalid_argument("skinning: weight row size mismatch");
  if (weights.minCoeff() < 0 || std::abs(weights.sum() - 1.0) > 1e-6)
    throw std::invalid_argument("skinning: weight row is not stochastic");
  SkinningXform x;
  x.blend_linear = Mat3::Zero();
  x.blend_trans = Vec3::Zero();
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    const double w = weights[j];
    if (w == 0.0) continue;
    x.blend_linear += w * joint_xforms[static_cast<std::size_t>(j)].rotation;
    x.blend_trans += w * joint_xforms[static_cast<std::size_t>(j)].translation;
  }
  x.rotation = polar_rotation(x.blend_linear);
  x.rotation_quat = rotmat_to_quat(x.rotation);
  return x;
}

// Pose a canonical GaussianSet. `weights` is N x J row-stochastic;
// `joint_xforms` are skinning transforms (identity pose -> identity map).
inline GaussianSet skin_gaussians(const GaussianSet& set, const Eigen::MatrixXd& weights,
                                  const std::vector<RigidTransform>& joint_xforms) {
  if (static_cast<std::size_t>(weights.rows()) != set.size())
    throw std::invalid_argument("skin_gaussians: one weight row per primitive required");
  GaussianSet posed = set;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto x = blend_skinning_transforms(weights.row(static_cast<Eigen::Index>(i)), joint_xforms);
    auto& g = posed.primitives[i];
    g.mean = x.blend_linear * g.mean + x.blend_trans;
    g.rotation = quat_multiply(x.rotation_quat, quat_normalize(g.rotation));
  }
  return posed;
}

// Closest point on a triangle and its barycentric coordinates.
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                                      Vec3* barycentric = nullptr) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  auto finish = [&](double u, double v) {
    if (barycentric) *barycentric = Vec3(1 - u - v, u, v);
    return Vec3(a + u * ab + v * ac);
  };
  if (d1 <= 0 && d2 <= 0) return finish(0, 0);
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return finish(1, 0);
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return finish(d1 / (d1 - d3), 0);
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return finish(0, 1);
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return finish(0, d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && d4 - d3 >= 0 && d5 - d6 >= 0) {
    const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return finish(1 - t, t);
  }
  const double denom = 1.0 / (va + vb + vc);
  return finish(vb * denom, vc * denom);
}

// Barycentric-interpolated skinning weights from the nearest canonical
// triangle, one row per primitive.
inline Eigen::MatrixXd bind_gaussians_to_surface(const GaussianSet& set,
                                                 const SkinnedTemplate& tmpl) {
  const Eigen::MatrixXd V = tmpl.shaped_vertices();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(set.size()), tmpl.joint_count());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Vec3 p = set.primitives[i].mean;
    double best = std::numeric_limits<double>::infinity();
    Vec3 best_bary = Vec3::Zero();
    Eigen::Index best_f = 0;
    for (Eigen::Index f = 0; f < tmpl.faces.rows(); ++f) {
      Vec3 bary;
      const Vec3 q = closest_point_on_triangle(p, V.row(tmpl.faces(f, 0)).transpose(),
                                               V.row(tmpl.faces(f, 1)).transpose(),
                                               V.row(tmpl.faces(f, 2)).transpose(), &bary);
      const double d2 = (p - q).squaredNorm();
      if (d2 < best) {
        best = d2;
        best_bary = bary;
        best_f = f;
      }
    }
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(tmpl.joint_count());
    for (int k = 0; k < 3; ++k) row += best_bary[k] * tmpl.weights.row(tmpl.faces(best_f, k));
    out.row(static_cast<Eigen::Index>(i)) = row / row.sum();
  }
  return out;
}

}  // namespace gsav
