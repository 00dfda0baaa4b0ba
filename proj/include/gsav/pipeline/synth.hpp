#pragma once

// Synthetic teacher scenes: a ground-truth Gaussian set bound to the puppet,
// a circular camera rig, a smooth pose sequence, and the rendered dataset.
// Reconstruction targets generated this way are exactly representable, so
// overfit quality is measurable.

#include "gsav/anim/skinning.hpp"
#include "gsav/pipeline/avatar.hpp"
#include "gsav/train/trainer.hpp"

namespace gsav {

struct TeacherScene {
  SkinnedTemplate tmpl;
  GaussianSet set;             // canonical teacher Gaussians
  Eigen::MatrixXd weights;     // per-primitive skinning weights
};

// Teacher Gaussians seeded from the puppet's positional maps: body colored
// by dominant joint, head carrying a high-frequency canonical-position
// pattern. Colors stay inside (0.1, 0.9) so compositing is smooth.
inline TeacherScene build_teacher_scene(const Eigen::VectorXd& beta, int map_res, Rng& rng) {
  TeacherScene t;
  t.tmpl = build_puppet(beta);
  AvatarConfig cfg;
  cfg.body_map_res = map_res;
  cfg.enable_face = false;
  cfg.init_opacity = 0.9;
  const AvatarModel seed = build_avatar(t.tmpl, cfg, rng);
  t.set = seed.body_canonical;
  t.weights = seed.body_weights;

  // Dominant-joint palette, kept away from 0/1.
  const double palette[12][3] = {
      {0.55, 0.35, 0.35}, {0.35, 0.55, 0.35}, {0.35, 0.35, 0.55}, {0.70, 0.60, 0.45},
      {0.60, 0.45, 0.25}, {0.25, 0.60, 0.45}, {0.45, 0.25, 0.60}, {0.60, 0.25, 0.45},
      {0.30, 0.50, 0.60}, {0.60, 0.50, 0.30}, {0.50, 0.60, 0.30}, {0.30, 0.60, 0.50}};
  for (std::size_t i = 0; i < t.set.size(); ++i) {
    auto& g = t.set.primitives[i];
    Eigen::Index j;
    t.weights.row(static_cast<Eigen::Index>(i)).maxCoeff(&j);
    Vec3 color(palette[j][0], palette[j][1], palette[j][2]);
    if (j == t.tmpl.head_joint) {
      // High-frequency face pattern in canonical coordinates.
      const Vec3& p = g.mean;
      color.x() = 0.5 + 0.3 * std::sin(55.0 * p.x()) * std::cos(47.0 * p.z());
      color.y() = 0.5 + 0.3 * std::sin(61.0 * p.z() + 1.3);
      color.z() = 0.5 + 0.3 * std::cos(53.0 * p.x() + 43.0 * p.y());
    } else {
      color += 0.04 * Vec3(rng.normal(), rng.normal(), rng.normal());
    }
    for (int c = 0; c < 3; ++c)
      g.color_coeffs[c] = std::clamp(color[c], 0.12, 0.88) / kSH0;
    // Mild view dependence through degree-1 coefficients.
    for (Eigen::Index k = 3; k < g.color_coeffs.size(); ++k)
      g.color_coeffs[k] = 0.02 * rng.normal();
    g.opacity_logit = logit(0.9);
  }
  return t;
}

// `views` perspective cameras on a circle of `radius` around the +z axis,
// at `height`, all looking at `target`.
inline std::vector<CameraModel> make_circle_cameras(int views, int image_size,
                                                    double radius = 2.5, double height = 1.2,
                                                    const Vec3& target = Vec3(0, 0, 1.1)) {
  std::vector<CameraModel> cams;
  for (int v = 0; v < views; ++v) {
    const double a = 2.0 * M_PI * v / views;
    const Vec3 eye(radius * std::cos(a), radius * std::sin(a), height);
    const Vec3 fwd = (target - eye).normalized();
    const Vec3 right = fwd.cross(Vec3(0, 0, 1)).normalized();
    const Vec3 down = fwd.cross(right);
    CameraModel c;
    c.rotation.row(0) = right.transpose();
    c.rotation.row(1) = down.transpose();
    c.rotation.row(2) = fwd.transpose();
    c.translation = -c.rotation * eye;
    c.width = c.height = image_size;
    c.fx = c.fy = 1.1 * image_size;
    c.cx = c.cy = image_size / 2.0;
    c.mode = CameraMode::perspective;
    cams.push_back(c);
  }
  return cams;
}

// Smooth limb swings plus a small head nod over `frames` steps.
inline std::vector<Pose> make_pose_sequence(int frames, int joint_count) {
  enum { root = 0, spine, neck, head, sho_l, elb_l, sho_r, elb_r, hip_l, kne_l, hip_r, kne_r };
  std::vector<Pose> poses;
  for (int f = 0; f < frames; ++f) {
    const double t = frames > 1 ? static_cast<double>(f) / (frames - 1) : 0.0;
    const double w = 2.0 * M_PI * t;
    Pose p = Pose::identity(joint_count);
    p.joint_rotations[sho_l] = Vec3(0.45 * std::sin(w), 0, 0);
    p.joint_rotations[sho_r] = Vec3(-0.45 * std::sin(w), 0, 0);
    p.joint_rotations[elb_l] = Vec3(0, 0.3 + 0.25 * std::cos(w), 0);
    p.joint_rotations[elb_r] = Vec3(0, -0.3 - 0.25 * std::cos(w), 0);
    p.joint_rotations[hip_l] = Vec3(0.25 * std::sin(w + M_PI), 0, 0);
    p.joint_rotations[hip_r] = Vec3(0.25 * std::sin(w), 0, 0);
    p.joint_rotations[kne_l] = Vec3(0.2 + 0.15 * std::cos(w), 0, 0);
    p.joint_rotations[kne_r] = Vec3(0.2 - 0.15 * std::cos(w), 0, 0);
    p.joint_rotations[head] = Vec3(0.1 * std::sin(2 * w), 0, 0.12 * std::cos(w));
    poses.push_back(p);
  }
  return poses;
}

// Renders ground truth for every (frame, view); masks are the teacher's soft
// alpha, so the mask loss and the photometric loss share their optimum.
inline TrainingData render_teacher_dataset(const TeacherScene& teacher,
                                           const std::vector<CameraModel>& cameras,
                                           const std::vector<Pose>& poses,
                                           const Vec3& background = Vec3::Zero(),
                                           const RenderConfig& cfg = {}) {
  TrainingData data;
  data.cameras = cameras;
  data.poses = poses;
  data.background = background;
  for (const auto& pose : poses) {
    const auto xforms = skinning_transforms(teacher.tmpl.skeleton, teacher.tmpl.shaped_offsets(),
                                            pose);
    const GaussianSet posed = skin_gaussians(teacher.set, teacher.weights, xforms);
    data.images.emplace_back();
    data.masks.emplace_back();
    for (const auto& cam : cameras) {
      RenderOutput out = rasterize(posed, cam, background, cfg);
      ImageF mask = out.alpha;
      data.images.back().push_back(std::move(out.color));
      data.masks.back().push_back(std::move(mask));
    }
  }
  return data;
}

}  // namespace gsav
