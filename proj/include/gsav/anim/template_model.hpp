#pragma once

// Parametric skinned template and the built-in capsule puppet. The shape
// space is linear: vertices and joint rest offsets are affine in beta, so the
// shape basis extracted from the generator is exact.

#include "gsav/anim/skeleton.hpp"

#include <array>

namespace gsav {

struct SkinnedTemplate {
  Skeleton skeleton;                           // rest offsets at beta = 0
  Eigen::MatrixXd base_vertices;               // N x 3, beta = 0
  Eigen::MatrixXi faces;                       // F x 3
  Eigen::MatrixXd weights;                     // N x J, row-stochastic
  std::vector<Eigen::MatrixXd> vertex_blend;   // S matrices, N x 3
  std::vector<Eigen::MatrixXd> offset_blend;   // S matrices, J x 3
  std::vector<int> part_id;                    // per-vertex body part (teacher coloring)
  Eigen::VectorXd beta;                        // S
  Pose pose;
  int head_joint = -1;
  int neck_joint = -1;

  int joint_count() const { return skeleton.size(); }
  int shape_dim() const { return static_cast<int>(vertex_blend.size()); }
  Eigen::Index vertex_count() const { return base_vertices.rows(); }

  Eigen::MatrixXd shaped_vertices(const Eigen::VectorXd& b) const {
    Eigen::MatrixXd v = base_vertices;
    for (int s = 0; s < shape_dim(); ++s) v += b[s] * vertex_blend[s];
    return v;
  }
  Eigen::MatrixXd shaped_vertices() const { return shaped_vertices(beta); }

  std::vector<Vec3> shaped_offsets(const Eigen::VectorXd& b) const {
    std::vector<Vec3> o(skeleton.joints.size());
    for (int j = 0; j < skeleton.size(); ++j) {
      o[j] = skeleton.joints[j].rest_offset;
      for (int s = 0; s < shape_dim(); ++s) o[j] += offset_blend[s].row(j).transpose() * b[s];
    }
    return o;
  }
  std::vector<Vec3> shaped_offsets() const { return shaped_offsets(beta); }

  void validate_weights() const {
    for (Eigen::Index i = 0; i < weights.rows(); ++i) {
      if (weights.row(i).minCoeff() < 0 || std::abs(weights.row(i).sum() - 1.0) > 1e-6)
        throw std::invalid_argument("template: weight row " + std::to_string(i) +
                                    " is not stochastic");
    }
  }
};

// Posed mesh vertices by classic LBS with the raw blended matrix.
inline Eigen::MatrixXd lbs_vertices(const SkinnedTemplate& tmpl, const Pose& pose) {
  const auto A = skinning_transforms(tmpl.skeleton, tmpl.shaped_offsets(), pose);
  const Eigen::MatrixXd V = tmpl.shaped_vertices();
  Eigen::MatrixXd out(V.rows(), 3);
  for (Eigen::Index i = 0; i < V.rows(); ++i) {
    Mat3 R = Mat3::Zero();
    Vec3 t = Vec3::Zero();
    for (int j = 0; j < tmpl.joint_count(); ++j) {
      const double w = tmpl.weights(i, j);
      if (w == 0.0) continue;
      R += w * A[j].rotation;
      t += w * A[j].translation;
    }
    out.row(i) = (R * V.row(i).transpose() + t).transpose();
  }
  return out;
}

namespace detail {

struct CapsuleSpec {
  Vec3 p0_base;                  // base point at beta = 0
  Eigen::MatrixXd p0_blend;      // S x 3
  Vec3 dir;                      // fixed unit axis
  double len_base;
  Eigen::VectorXd len_blend;     // S
  double rad_base;
  Eigen::VectorXd rad_blend;     // S
  int joint_a, joint_b;          // skinning blend endpoints along the axis
  int part;
};

inline void orthonormal_frame(const Vec3& d, Vec3& u, Vec3& w) {
  u = std::abs(d.z()) < 0.9 ? d.cross(Vec3(0, 0, 1)).normalized()
                            : d.cross(Vec3(1, 0, 0)).normalized();
  w = d.cross(u);
}

}  // namespace detail

struct PuppetConfig {
  int segments = 14;      // vertices around each capsule ring
  int body_rings = 3;     // interior rings along the capsule body
  int cap_rings = 2;      // rings per hemispherical cap (excluding pole/equator)
};

// Capsule humanoid: root/spine/neck/head chain, two-joint arms and legs.
// Shape space (S = 4): torso length, limb length, girth, head size.
inline SkinnedTemplate build_puppet(const Eigen::VectorXd& beta = Eigen::VectorXd::Zero(4),
                                    const PuppetConfig& cfg = {}) {
  constexpr int J = 12, S = 4;
  enum { root = 0, spine, neck, head, sho_l, elb_l, sho_r, elb_r, hip_l, kne_l, hip_r, kne_r };
  SkinnedTemplate tmpl;
  tmpl.head_joint = head;
  tmpl.neck_joint = neck;

  auto joint = [&](int parent, const Vec3& off) {
    tmpl.skeleton.joints.push_back({parent, off});
  };
  joint(-1, {0, 0, 1.00});          // root
  joint(root, {0, 0, 0.25});        // spine
  joint(spine, {0, 0, 0.25});       // neck
  joint(neck, {0, 0, 0.22});        // head (at head-capsule center)
  joint(neck, {-0.20, 0, -0.02});   // shoulder L
  joint(sho_l, {-0.25, 0, 0});      // elbow L
  joint(neck, {0.20, 0, -0.02});    // shoulder R
  joint(sho_r, {0.25, 0, 0});       // elbow R
  joint(root, {-0.10, 0, -0.05});   // hip L
  joint(hip_l, {0, 0, -0.45});      // knee L
  joint(root, {0.10, 0, -0.05});    // hip R
  joint(hip_r, {0, 0, -0.45});      // knee R

  tmpl.offset_blend.assign(S, Eigen::MatrixXd::Zero(J, 3));
  // beta 0: torso length; beta 1: limb length; beta 3: head size.
  tmpl.offset_blend[0].row(spine) = Vec3(0, 0, 0.25).transpose();
  tmpl.offset_blend[0].row(neck) = Vec3(0, 0, 0.25).transpose();
  tmpl.offset_blend[3].row(head) = Vec3(0, 0, 0.22).transpose();
  tmpl.offset_blend[1].row(elb_l) = Vec3(-0.25, 0, 0).transpose();
  tmpl.offset_blend[1].row(elb_r) = Vec3(0.25, 0, 0).transpose();
  tmpl.offset_blend[1].row(kne_l) = Vec3(0, 0, -0.45).transpose();
  tmpl.offset_blend[1].row(kne_r) = Vec3(0, 0, -0.45).transpose();

  // Rest joint world positions as affine functions of beta.
  std::vector<Vec3> jpos(J);
  std::vector<Eigen::MatrixXd> jpos_blend(J, Eigen::MatrixXd::Zero(S, 3));
  for (int j = 0; j < J; ++j) {
    const int p = tmpl.skeleton.joints[j].parent;
    jpos[j] = tmpl.skeleton.joints[j].rest_offset + (p >= 0 ? jpos[p] : Vec3::Zero());
    for (int s = 0; s < S; ++s) {
      jpos_blend[j].row(s) = tmpl.offset_blend[s].row(j);
      if (p >= 0) jpos_blend[j].row(s) += jpos_blend[p].row(s);
    }
  }

  std::vector<detail::CapsuleSpec> caps;
  auto bone = [&](int ja, int jb, double radius, int part) {
    detail::CapsuleSpec c;
    c.p0_base = jpos[ja];
    c.p0_blend = jpos_blend[ja];
    const Vec3 d = jpos[jb] - jpos[ja];
    c.len_base = d.norm();
    c.dir = d / c.len_base;
    c.len_blend = Eigen::VectorXd::Zero(S);
    for (int s = 0; s < S; ++s)
      c.len_blend[s] = (jpos_blend[jb].row(s) - jpos_blend[ja].row(s)).dot(c.dir.transpose());
    c.rad_base = radius;
    c.rad_blend = Eigen::VectorXd::Zero(S);
    c.rad_blend[2] = radius;  // girth scales every radius
    c.joint_a = ja;
    c.joint_b = jb;
    c.part = part;
    return c;
  };
  auto limb_tip = [&](int ja, const Vec3& dir, double len, double radius, int part) {
    // Capsule extending past the last joint of a limb (forearm / shin).
    detail::CapsuleSpec c;
    c.p0_base = jpos[ja];
    c.p0_blend = jpos_blend[ja];
    c.dir = dir;
    c.len_base = len;
    c.len_blend = Eigen::VectorXd::Zero(S);
    c.len_blend[1] = len;  // limb length
    c.rad_base = radius;
    c.rad_blend = Eigen::VectorXd::Zero(S);
    c.rad_blend[2] = radius;
    c.joint_a = ja;
    c.joint_b = ja;
    c.part = part;
    return c;
  };

  caps.push_back(bone(root, spine, 0.16, 0));
  caps.push_back(bone(spine, neck, 0.15, 1));
  caps.push_back(bone(neck, head, 0.07, 2));
  {  // head: sphere-like capsule centered on the head joint, scaled by beta 3
    detail::CapsuleSpec c;
    c.p0_base = jpos[head] + Vec3(0, 0, -0.08);
    c.p0_blend = jpos_blend[head];
    c.p0_blend.row(3) += Eigen::RowVector3d(0, 0, -0.08);
    c.dir = Vec3(0, 0, 1);
    c.len_base = 0.16;
    c.len_blend = Eigen::VectorXd::Zero(S);
    c.len_blend[3] = 0.16;
    c.rad_base = 0.11;
    c.rad_blend = Eigen::VectorXd::Zero(S);
    c.rad_blend[2] = 0.055;
    c.rad_blend[3] = 0.055;
    c.joint_a = head;
    c.joint_b = head;
    c.part = 3;
    caps.push_back(c);
  }
  caps.push_back(bone(sho_l, elb_l, 0.055, 4));
  caps.push_back(limb_tip(elb_l, {-1, 0, 0}, 0.24, 0.050, 5));
  caps.push_back(bone(sho_r, elb_r, 0.055, 6));
  caps.push_back(limb_tip(elb_r, {1, 0, 0}, 0.24, 0.050, 7));
  caps.push_back(bone(hip_l, kne_l, 0.085, 8));
  caps.push_back(limb_tip(kne_l, {0, 0, -1}, 0.42, 0.065, 9));
  caps.push_back(bone(hip_r, kne_r, 0.085, 10));
  caps.push_back(limb_tip(kne_r, {0, 0, -1}, 0.42, 0.065, 11));

  // Tessellate: pole + cap rings + body rings + cap rings + pole per capsule.
  std::vector<Eigen::RowVector3d> verts;
  std::vector<std::vector<Eigen::RowVector3d>> vblend(S);
  std::vector<std::array<int, 3>> tris;
  std::vector<double> wa;  // weight on joint_a (rest on joint_b)
  std::vector<int> ja_of, jb_of, part_of;

  const int nseg = cfg.segments;
  for (const auto& c : caps) {
    Vec3 u, w;
    detail::orthonormal_frame(c.dir, u, w);
    const int base_index = static_cast<int>(verts.size());

    // (axial offset factor on dir as a*r + b*len + const via coefficients,
    //  radial factor on the ring direction) — all affine in beta.
    struct Ring { double ax_r, ax_len, radial, blend; };
    std::vector<Ring> rings;
    rings.push_back({-1.0, 0.0, 0.0, 0.0});  // bottom pole
    for (int i = cfg.cap_rings; i >= 1; --i) {
      const double psi = M_PI_2 * i / (cfg.cap_rings + 1);
      rings.push_back({-std::sin(psi), 0.0, std::cos(psi), 0.0});
    }
    const int nb = cfg.body_rings + 1;
    for (int i = 0; i <= nb; ++i)
      rings.push_back({0.0, static_cast<double>(i) / nb, 1.0, static_cast<double>(i) / nb});
    for (int i = 1; i <= cfg.cap_rings; ++i) {
      const double psi = M_PI_2 * i / (cfg.cap_rings + 1);
      rings.push_back({std::sin(psi), 1.0, std::cos(psi), 1.0});
    }
    rings.push_back({1.0, 1.0, 0.0, 1.0});  // top pole

    std::vector<int> ring_start(rings.size());
    for (std::size_t ri = 0; ri < rings.size(); ++ri) {
      const auto& r = rings[ri];
      const bool pole = (r.radial == 0.0);
      ring_start[ri] = static_cast<int>(verts.size());
      const int count = pole ? 1 : nseg;
      for (int k = 0; k < count; ++k) {
        const double phi = 2 * M_PI * k / nseg;
        const Vec3 e = std::cos(phi) * u + std::sin(phi) * w;
        verts.push_back((c.p0_base + (r.ax_r * c.rad_base + r.ax_len * c.len_base) * c.dir +
                         r.radial * c.rad_base * e)
                            .transpose());
        for (int s = 0; s < S; ++s)
          vblend[s].push_back(c.p0_blend.row(s) +
                              ((r.ax_r * c.rad_blend[s] + r.ax_len * c.len_blend[s]) * c.dir +
                               r.radial * c.rad_blend[s] * e)
                                  .transpose());
        wa.push_back(1.0 - r.blend);
        ja_of.push_back(c.joint_a);
        jb_of.push_back(c.joint_b);
        part_of.push_back(c.part);
      }
    }
    // Triangulate consecutive rings (fans at the poles).
    for (std::size_t ri = 0; ri + 1 < rings.size(); ++ri) {
      const bool p0 = rings[ri].radial == 0.0, p1 = rings[ri + 1].radial == 0.0;
      const int a = ring_start[ri], b = ring_start[ri + 1];
      for (int k = 0; k < nseg; ++k) {
        const int k1 = (k + 1) % nseg;
        if (p0)
          tris.push_back({a, b + k, b + k1});
        else if (p1)
          tris.push_back({a + k, b, a + k1});
        else {
          tris.push_back({a + k, b + k, b + k1});
          tris.push_back({a + k, b + k1, a + k1});
        }
      }
    }
    (void)base_index;
  }

  const int N = static_cast<int>(verts.size());
  tmpl.base_vertices.resize(N, 3);
  for (int i = 0; i < N; ++i) tmpl.base_vertices.row(i) = verts[i];
  tmpl.vertex_blend.assign(S, Eigen::MatrixXd::Zero(N, 3));
  for (int s = 0; s < S; ++s)
    for (int i = 0; i < N; ++i) tmpl.vertex_blend[s].row(i) = vblend[s][i];
  tmpl.faces.resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (std::size_t f = 0; f < tris.size(); ++f)
    tmpl.faces.row(static_cast<Eigen::Index>(f)) << tris[f][0], tris[f][1], tris[f][2];
  tmpl.weights = Eigen::MatrixXd::Zero(N, J);
  for (int i = 0; i < N; ++i) {
    tmpl.weights(i, ja_of[i]) += wa[i];
    tmpl.weights(i, jb_of[i]) += 1.0 - wa[i];
  }
  tmpl.part_id = part_of;
  tmpl.beta = beta;
  tmpl.pose = Pose::identity(J);
  tmpl.validate_weights();
  return tmpl;
}

}  // namespace gsav
