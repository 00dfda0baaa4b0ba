#pragma once

// Face-crop window selection and the crop-and-resize intrinsics update
// K_new = [s fx, 0, s (cx - x_c); 0, s fy, s (cy - y_c); 0, 0, 1].

#include "gsav/anim/fit.hpp"
#include "gsav/render/camera.hpp"

namespace gsav {

struct CropSpec {
  double x_c = 0, y_c = 0;  // top-left corner, source pixels
  double scale = 1;         // output px per source px
  int output_size = 0;      // square output, pixels

  void validate() const {
    if (scale <= 0) throw std::invalid_argument("crop: scale must be positive");
    if (output_size < 1) throw std::invalid_argument("crop: output size must be >= 1");
  }
};

inline CameraModel crop_intrinsics(const CameraModel& camera, const CropSpec& crop) {
  crop.validate();
  CameraModel out = camera;
  out.fx = crop.scale * camera.fx;
  out.fy = crop.scale * camera.fy;
  out.cx = crop.scale * (camera.cx - crop.x_c);
  out.cy = crop.scale * (camera.cy - crop.y_c);
  out.width = out.height = crop.output_size;
  return out;
}

// Square crop centered on the projected head joint, side 2.5x the projected
// head-to-neck distance, clamped inside the source image.
inline CropSpec compute_face_crop(const SkinnedTemplate& tmpl, const Pose& pose,
                                  const CameraModel& camera, int output_size) {
  const auto world = forward_kinematics(tmpl.skeleton, tmpl.shaped_offsets(), pose);
  const Vec3 head = world[tmpl.head_joint].translation;
  const Vec3 neck = world[tmpl.neck_joint].translation;
  if (camera.mode == CameraMode::perspective && camera.to_camera(head).z() <= 0)
    throw std::runtime_error("compute_face_crop: head joint is behind the camera");
  const Vec2 head_px = camera.project(head);
  if (head_px.x() < 0 || head_px.x() > camera.width || head_px.y() < 0 ||
      head_px.y() > camera.height)
    throw std::runtime_error("compute_face_crop: head joint projects outside the image");

  double side = 2.5 * (head_px - camera.project(neck)).norm();
  side = std::min(side, static_cast<double>(std::min(camera.width, camera.height)));
  CropSpec crop;
  crop.x_c = std::clamp(head_px.x() - side / 2, 0.0, camera.width - side);
  crop.y_c = std::clamp(head_px.y() - side / 2, 0.0, camera.height - side);
  crop.scale = output_size / side;
  crop.output_size = output_size;
  return crop;
}

}  // namespace gsav
