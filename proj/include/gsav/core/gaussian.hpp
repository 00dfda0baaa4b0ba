#pragma once

// Gaussian primitive data model: covariance construction, density and
// spherical-harmonics color evaluation.
//
// Attributes are stored pre-activation so optimizers can treat them as
// unconstrained: scale via exponential map, opacity via logistic map,
// rotation as an unnormalized quaternion (normalized on use).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsav {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

enum class SourceTag : std::uint8_t { body = 0, face = 1 };

// Real spherical harmonics constants, bands 0 and 1.
inline constexpr double kSH0 = 0.28209479177387814;  // 1/(2 sqrt(pi))
inline constexpr double kSH1 = 0.4886025119029199;   // sqrt(3)/(2 sqrt(pi))

inline int sh_coeff_count(int degree) { return 3 * (degree + 1) * (degree + 1); }

struct GaussianPrimitive {
  Vec3 mean = Vec3::Zero();                  // world/canonical meters
  Vec3 log_scale = Vec3::Zero();             // std-dev = exp(log_scale)
  Vec4 rotation = Vec4(1, 0, 0, 0);          // quaternion (w,x,y,z), unnormalized storage
  double opacity_logit = 0.0;
  double opacity_mult = 1.0;                 // post-activation attenuation (fusion)
  Eigen::VectorXd color_coeffs;              // 3*(L+1)^2, basis-major: [b*3 + channel]

  Vec3 scale() const { return log_scale.array().exp(); }
  double opacity() const { return opacity_mult * sigmoid(opacity_logit); }
};

struct GaussianSet {
  std::vector<GaussianPrimitive> primitives;
  std::vector<SourceTag> tags;
  int sh_degree = 0;

  std::size_t size() const { return primitives.size(); }

  void push_back(const GaussianPrimitive& g, SourceTag tag) {
    primitives.push_back(g);
    tags.push_back(tag);
  }

  void append(const GaussianSet& other) {
    primitives.insert(primitives.end(), other.primitives.begin(), other.primitives.end());
    tags.insert(tags.end(), other.tags.begin(), other.tags.end());
  }
};

// Rotation matrix of a quaternion, normalized internally. A (near-)zero
// quaternion is invalid input.
inline Mat3 quat_to_rotmat(const Vec4& q_raw) {
  const double n = q_raw.norm();
  if (n < 1e-12) throw std::invalid_argument("quat_to_rotmat: zero quaternion");
  const Vec4 q = q_raw / n;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

inline Vec4 quat_normalize(const Vec4& q) {
  const double n = q.norm();
  if (n < 1e-12) throw std::invalid_argument("quat_normalize: zero quaternion");
  return q / n;
}

// Hamilton product a*b, (w,x,y,z) convention.
inline Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
  return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

inline Vec4 rotmat_to_quat(const Mat3& R) {
  Vec4 q;
  const double tr = R.trace();
  if (tr > 0) {
    double s = std::sqrt(tr + 1.0) * 2;
    q << 0.25 * s, (R(2, 1) - R(1, 2)) / s, (R(0, 2) - R(2, 0)) / s, (R(1, 0) - R(0, 1)) / s;
  } else if (R(0, 0) > R(1, 1) && R(0, 0) > R(2, 2)) {
    double s = std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2)) * 2;
    q << (R(2, 1) - R(1, 2)) / s, 0.25 * s, (R(0, 1) + R(1, 0)) / s, (R(0, 2) + R(2, 0)) / s;
  } else if (R(1, 1) > R(2, 2)) {
    double s = std::sqrt(1.0 + R(1, 1) - R(0, 0) - R(2, 2)) * 2;
    q << (R(0, 2) - R(2, 0)) / s, (R(0, 1) + R(1, 0)) / s, 0.25 * s, (R(1, 2) + R(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + R(2, 2) - R(0, 0) - R(1, 1)) * 2;
    q << (R(1, 0) - R(0, 1)) / s, (R(0, 2) + R(2, 0)) / s, (R(1, 2) + R(2, 1)) / s, 0.25 * s;
  }
  return quat_normalize(q);
}

// Sigma = R(q) diag(s^2) R(q)^T. `scale` is post-activation (std-devs).
inline Mat3 build_covariance(const Vec3& scale, const Vec4& quat) {
  const Mat3 R = quat_to_rotmat(quat);
  return R * scale.array().square().matrix().asDiagonal() * R.transpose();
}

inline constexpr double kCovDetEpsilon = 1e-18;  // meters^6

// Normalized 3D Gaussian density at `point`.
inline double eval_density(const Vec3& point, const Vec3& mean, const Mat3& cov) {
  const double det = cov.determinant();
  if (det < kCovDetEpsilon)
    throw std::runtime_error("eval_density: singular covariance (|Sigma| = " +
                             std::to_string(det) + ")");
  const Vec3 d = point - mean;
  const double maha2 = d.dot(cov.llt().solve(d));
  const double norm = std::pow(2.0 * M_PI, -1.5) / std::sqrt(det);
  return norm * std::exp(-0.5 * maha2);
}

// View-dependent RGB from SH coefficients, degrees 0 and 1.
// Basis order: Y00, Y1-1 (y), Y10 (z), Y11 (x); coeffs are basis-major RGB.
inline Vec3 eval_color(const Eigen::VectorXd& coeffs, const Vec3& view_dir, int degree) {
  if (degree < 0 || degree > 1)
    throw std::invalid_argument("eval_color: degree must be 0 or 1");
  if (coeffs.size() != sh_coeff_count(degree))
    throw std::invalid_argument("eval_color: expected " +
                                std::to_string(sh_coeff_count(degree)) +
                                " coefficients, got " + std::to_string(coeffs.size()));
  Vec3 rgb = kSH0 * coeffs.segment<3>(0);
  if (degree == 1) {
    rgb += kSH1 * view_dir.y() * coeffs.segment<3>(3);
    rgb += kSH1 * view_dir.z() * coeffs.segment<3>(6);
    rgb += kSH1 * view_dir.x() * coeffs.segment<3>(9);
  }
  return rgb;
}

}  // namespace gsav
