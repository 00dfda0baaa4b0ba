#pragma once

// Skeleton forward kinematics with axis-angle joint rotations, plus the
// Rodrigues rotation derivative used by the template-fitting gradients.

#include "gsav/core/gaussian.hpp"

namespace gsav {

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

struct Joint {
  int parent = -1;        // -1 for root; parents precede children
  Vec3 rest_offset = Vec3::Zero();  // translation in parent frame, beta = 0
};

struct Skeleton {
  std::vector<Joint> joints;

  int size() const { return static_cast<int>(joints.size()); }

  void validate() const {
    if (joints.empty() || joints[0].parent != -1)
      throw std::invalid_argument("skeleton: joint 0 must be the root");
    for (int j = 1; j < size(); ++j)
      if (joints[j].parent < 0 || joints[j].parent >= j)
        throw std::invalid_argument("skeleton: joints must be topologically sorted");
  }
};

inline double wrap_angle(double a) {
  while (a > M_PI) a -= 2 * M_PI;
  while (a < -M_PI) a += 2 * M_PI;
  return a;
}

struct Pose {
  std::vector<Vec3> joint_rotations;  // axis-angle per joint
  Vec3 root_translation = Vec3::Zero();

  static Pose identity(int joint_count) {
    Pose p;
    p.joint_rotations.assign(joint_count, Vec3::Zero());
    return p;
  }

  // Axis-angle magnitudes wrapped into (-pi, pi].
  void wrap() {
    for (auto& aa : joint_rotations) {
      const double theta = aa.norm();
      if (theta > M_PI) {
        const double wrapped = wrap_angle(theta);
        aa *= wrapped / theta;
      }
    }
  }

  // Flat vector [root_t, aa_0, ..., aa_{J-1}] used by pose embeddings.
  Eigen::VectorXd flatten() const {
    Eigen::VectorXd v(3 + 3 * static_cast<Eigen::Index>(joint_rotations.size()));
    v.segment<3>(0) = root_translation;
    for (std::size_t j = 0; j < joint_rotations.size(); ++j)
      v.segment<3>(3 + 3 * static_cast<Eigen::Index>(j)) = joint_rotations[j];
    return v;
  }
};

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

inline Mat3 rodrigues(const Vec3& aa) {
  const double theta = aa.norm();
  if (theta < 1e-12) return Mat3::Identity() + skew(aa);
  const Vec3 axis = aa / theta;
  const Mat3 K = skew(axis);
  return Mat3::Identity() + std::sin(theta) * K + (1 - std::cos(theta)) * K * K;
}

// dR/d(aa_k) for R = rodrigues(aa) (Gallego & Yezzi closed form).
inline std::array<Mat3, 3> rodrigues_jacobian(const Vec3& aa) {
  std::array<Mat3, 3> d;
  const double theta2 = aa.squaredNorm();
  if (theta2 < 1e-16) {
    for (int k = 0; k < 3; ++k) d[k] = skew(Vec3::Unit(k));
    return d;
  }
  const Mat3 R = rodrigues(aa);
  for (int k = 0; k < 3; ++k) {
    const Vec3 ek = Vec3::Unit(k);
    d[k] = (aa[k] * skew(aa) + skew(aa.cross((Mat3::Identity() - R) * ek))) / theta2 * R;
  }
  return d;
}

// World transform per joint: R_j = R_parent * R(aa_j), t_j = t_parent +
// R_parent * offset_j; the root also carries the pose translation.
// `offsets` are the (shape-dependent) rest offsets, one per joint.
inline std::vector<RigidTransform> forward_kinematics(const Skeleton& skeleton,
                                                      const std::vector<Vec3>& offsets,
                                                      const Pose& pose) {
  skeleton.validate();
  const int J = skeleton.size();
  if (static_cast<int>(offsets.size()) != J || static_cast<int>(pose.joint_rotations.size()) != J)
    throw std::invalid_argument("forward_kinematics: size mismatch");
  std::vector<RigidTransform> world(J);
  for (int j = 0; j < J; ++j) {
    const Mat3 Rj = rodrigues(pose.joint_rotations[j]);
    if (j == 0) {
      world[0].rotation = Rj;
      world[0].translation = pose.root_translation + offsets[0];
    } else {
      const auto& par = world[skeleton.joints[j].parent];
      world[j].rotation = par.rotation * Rj;
      world[j].translation = par.translation + par.rotation * offsets[j];
    }
  }
  return world;
}

inline std::vector<RigidTransform> forward_kinematics(const Skeleton& skeleton, const Pose& pose) {
  std::vector<Vec3> offsets(skeleton.joints.size());
  for (std::size_t j = 0; j < offsets.size(); ++j) offsets[j] = skeleton.joints[j].rest_offset;
  return forward_kinematics(skeleton, offsets, pose);
}

// Rest-pose joint world positions (cumulative offsets).
inline std::vector<Vec3> rest_joint_positions(const Skeleton& skeleton,
                                              const std::vector<Vec3>& offsets) {
  std::vector<Vec3> pos(offsets.size());
  for (int j = 0; j < static_cast<int>(offsets.size()); ++j)
    pos[j] = (j == 0) ? offsets[0] : Vec3(pos[skeleton.joints[j].parent] + offsets[j]);
  return pos;
}

// Skinning transform: maps rest-pose world space to posed world space,
// A_j = T_j(pose) * T_j(rest)^-1. Identity pose gives identity transforms.
inline std::vector<RigidTransform> skinning_transforms(const Skeleton& skeleton,
                                                       const std::vector<Vec3>& offsets,
                                                       const Pose& pose) {
  const auto world = forward_kinematics(skeleton, offsets, pose);
  const auto rest = rest_joint_positions(skeleton, offsets);
  std::vector<RigidTransform> A(world.size());
  for (std::size_t j = 0; j < world.size(); ++j) {
    A[j].rotation = world[j].rotation;
    A[j].translation = world[j].translation - world[j].rotation * rest[j];
  }
  return A;
}

}  // namespace gsav
