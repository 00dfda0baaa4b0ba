#pragma once

// Pinhole / orthographic camera. World-to-camera convention: x_cam = R x + t,
// camera looks along +z, pixel sample positions at (x + 0.5, y + 0.5).

#include "gsav/core/gaussian.hpp"

namespace gsav {

enum class CameraMode { perspective, orthographic };

struct CameraModel {
  double fx = 1, fy = 1;   // px (perspective) or px/meter (orthographic)
  double cx = 0, cy = 0;   // px
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();
  int width = 1, height = 1;
  CameraMode mode = CameraMode::perspective;

  void validate() const {
    if (fx <= 0 || fy <= 0) throw std::invalid_argument("camera: fx, fy must be positive");
    if (width < 1 || height < 1) throw std::invalid_argument("camera: bad image size");
    if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-8)
      throw std::invalid_argument("camera: rotation is not orthonormal");
  }

  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }

  Vec3 center() const { return -rotation.transpose() * translation; }

  // Pixel coordinates of a camera-space point.
  Vec2 project_cam(const Vec3& pc) const {
    if (mode == CameraMode::perspective)
      return {fx * pc.x() / pc.z() + cx, fy * pc.y() / pc.z() + cy};
    return {fx * pc.x() + cx, fy * pc.y() + cy};
  }

  Vec2 project(const Vec3& p_world) const { return project_cam(to_camera(p_world)); }

  // Jacobian of project_cam at pc, 2x3.
  Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& pc) const {
    Eigen::Matrix<double, 2, 3> J = Eigen::Matrix<double, 2, 3>::Zero();
    if (mode == CameraMode::perspective) {
      const double iz = 1.0 / pc.z();
      J(0, 0) = fx * iz;
      J(0, 2) = -fx * pc.x() * iz * iz;
      J(1, 1) = fy * iz;
      J(1, 2) = -fy * pc.y() * iz * iz;
    } else {
      J(0, 0) = fx;
      J(1, 1) = fy;
    }
    return J;
  }

  // Unit direction from the projection center to a world point. Orthographic
  // cameras have a constant viewing direction (the +z camera axis).
  Vec3 view_direction(const Vec3& p_world) const {
    if (mode == CameraMode::perspective) {
      const Vec3 d = p_world - center();
      const double n = d.norm();
      return n > 0 ? Vec3(d / n) : Vec3(0, 0, 1);
    }
    return rotation.row(2).transpose();
  }
};

}  // namespace gsav
